//! The three architectures: MLP+, two-column PNN and two-column AutoInt.

mod config;

pub use config::*;

use crate::blocks::{AttentionBlock, MlpPlusBlock, MlpPlusGates, ProductBlock};
use crate::data::{Batch, FieldLayout};
use crate::error::{Error, Result};
use crate::layers::{Ctx, FieldEmbeddings, LeakyGate};
use crate::rng::SeededRng;
use crate::tensor::{sigmoid, Graph, Module, Parameter, Var};

#[derive(Clone, Debug)]
pub enum Interaction {
    Product(ProductBlock),
    Attention(AttentionBlock),
}

#[derive(Clone, Debug)]
pub enum Body {
    MlpPlus(MlpPlusBlock),
    TwoColumn {
        gate: Option<LeakyGate>,
        interaction: Interaction,
        interaction_column: MlpPlusBlock,
        mlp_column: MlpPlusBlock,
        column_mix: Parameter,
    },
}

#[derive(Clone, Debug)]
pub struct TabularModel {
    pub config: ModelConfig,
    pub embed: FieldEmbeddings,
    pub body: Body,
}

/// Extra forward outputs used for inspection.
#[derive(Debug)]
pub struct ForwardTrace<'g> {
    pub logits: Var<'g>,
    /// Per attention layer, per head `[batch, F, F]` weights.
    pub attention: Vec<Vec<Var<'g>>>,
    /// Logits of the interaction column alone (two-column families).
    pub interaction_logits: Option<Var<'g>>,
}

fn mlp_plus(name: &str, input: usize, c: &ModelConfig, rng: &mut SeededRng) -> MlpPlusBlock {
    MlpPlusBlock::new(
        name,
        input,
        &c.mlp_layers,
        c.n_classes,
        c.dropout,
        c.leaky_slope,
        c.use_skip,
        c.use_gate,
        rng,
    )
}

impl TabularModel {
    /// Builds and initializes a model; identical `(config, layout, seed)`
    /// give identical parameters.
    pub fn new(config: &ModelConfig, layout: &FieldLayout, seed: u64) -> Result<Self> {
        config.validate()?;
        if layout.is_empty() {
            return Err(Error::Config("schema has no feature columns".into()));
        }
        let mut rng = SeededRng::new(seed);
        let m = config.embedding_size;
        let embed = FieldEmbeddings::new("embed", layout, m, config.raw_numeric_input, &mut rng);
        let flat = embed.flat_width();
        let f = layout.len();
        let body = match config.family {
            Family::MlpPlus => Body::MlpPlus(mlp_plus("mlp_plus", flat, config, &mut rng)),
            Family::Pnn | Family::Autoint => {
                let gate = config.use_gate.then(|| LeakyGate::new("gate", flat, config.leaky_slope));
                let (interaction, width) = match config.family {
                    Family::Pnn => {
                        let p = config.product.as_ref().expect("validated");
                        if p.product_type != crate::blocks::ProductType::Outer && f < 2 {
                            return Err(Error::Config("inner products need at least 2 fields".into()));
                        }
                        let block = ProductBlock::new("product", p.product_type, f, m, p.output_size, &mut rng);
                        (Interaction::Product(block), p.output_size)
                    }
                    _ => {
                        let a = config.attention.as_ref().expect("validated");
                        let block = AttentionBlock::new("attention", m, a, config.leaky_slope, &mut rng);
                        (Interaction::Attention(block), f * m)
                    }
                };
                Body::TwoColumn {
                    gate,
                    interaction,
                    interaction_column: mlp_plus("interaction_column", width, config, &mut rng),
                    mlp_column: mlp_plus("mlp_column", flat, config, &mut rng),
                    column_mix: Parameter::new("column_mix", &[], vec![0.0]),
                }
            }
        };
        Ok(TabularModel {
            config: config.clone(),
            embed,
            body,
        })
    }

    pub fn layout(&self) -> &FieldLayout {
        self.embed.layout()
    }

    pub fn set_ghost_size(&mut self, ghost: usize) {
        match &mut self.body {
            Body::MlpPlus(b) => b.mlp.set_ghost_size(ghost),
            Body::TwoColumn {
                interaction_column,
                mlp_column,
                ..
            } => {
                interaction_column.mlp.set_ghost_size(ghost);
                mlp_column.mlp.set_ghost_size(ghost);
            }
        }
    }

    /// Weight of the interaction column, `sigmoid(column_mix)`.
    pub fn beta(&self) -> Option<f64> {
        match &self.body {
            Body::TwoColumn { column_mix, .. } => Some(sigmoid(column_mix.value[0])),
            Body::MlpPlus(_) => None,
        }
    }

    pub fn forward<'g>(&mut self, g: &'g Graph, batch: &Batch, ctx: &mut Ctx) -> Result<Var<'g>> {
        Ok(self.forward_trace(g, batch, ctx)?.logits)
    }

    pub fn forward_trace<'g>(&mut self, g: &'g Graph, batch: &Batch, ctx: &mut Ctx) -> Result<ForwardTrace<'g>> {
        let flat = self.embed.flat(g, batch)?;
        match &mut self.body {
            Body::MlpPlus(block) => Ok(ForwardTrace {
                logits: block.forward(g, flat, ctx)?,
                attention: vec![],
                interaction_logits: None,
            }),
            Body::TwoColumn {
                gate,
                interaction,
                interaction_column,
                mlp_column,
                column_mix,
            } => {
                let f = self.embed.layout().len();
                let m = self.embed.dim();
                let gated = match gate {
                    Some(gate) => gate.forward(g, flat)?,
                    None => flat,
                };
                let fields = gated.reshape(&[batch.rows, f, m])?;
                let (features, attention) = match interaction {
                    Interaction::Product(p) => (p.forward(g, fields)?, vec![]),
                    Interaction::Attention(a) => {
                        let (y, w) = a.forward(g, fields, ctx)?;
                        (y.reshape(&[batch.rows, f * m])?, w)
                    }
                };
                let col1 = interaction_column.forward(g, features, ctx)?;
                let col2 = mlp_column.forward(g, flat, ctx)?;
                let beta = g.param(column_mix).sigmoid();
                let logits = col1.mul(&beta)?.add(&col2.mul(&beta.affine(-1.0, 1.0))?)?;
                Ok(ForwardTrace {
                    logits,
                    attention,
                    interaction_logits: Some(col1),
                })
            }
        }
    }

    /// Input to the MLP+ block's gates and the gates' outputs (mlp-plus only).
    pub fn gate_trace<'g>(&self, g: &'g Graph, batch: &Batch) -> Result<MlpPlusGates<'g>> {
        match &self.body {
            Body::MlpPlus(block) => {
                if block.main_gate.is_none() {
                    return Err(Error::Config("model was built with use_gate = false".into()));
                }
                block.gates(g, self.embed.flat(g, batch)?)
            }
            Body::TwoColumn { .. } => Err(Error::Config(format!(
                "gate inspection needs an mlp-plus model, got {}",
                self.config.family
            ))),
        }
    }

    /// Positive-class probability per row.
    pub fn predict_proba(&mut self, batch: &Batch, chunk: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(batch.rows);
        let ids: Vec<usize> = (0..batch.rows).collect();
        for rows in ids.chunks(chunk.max(1)) {
            let part = batch.gather(rows);
            let g = Graph::no_grad();
            let logits = self.forward(&g, &part, &mut Ctx::eval())?;
            let p = logits.softmax()?.value();
            out.extend(p.chunks(self.config.n_classes).map(|r| r[1]));
        }
        Ok(out)
    }

    pub fn parameter_paths(&self) -> Vec<String> {
        self.params().iter().map(|p| p.name().to_string()).collect()
    }
}

impl Module for TabularModel {
    fn params(&self) -> Vec<&Parameter> {
        let mut out = self.embed.params();
        match &self.body {
            Body::MlpPlus(b) => out.extend(b.params()),
            Body::TwoColumn {
                gate,
                interaction,
                interaction_column,
                mlp_column,
                column_mix,
            } => {
                if let Some(gate) = gate {
                    out.extend(gate.params());
                }
                match interaction {
                    Interaction::Product(p) => out.extend(p.params()),
                    Interaction::Attention(a) => out.extend(a.params()),
                }
                out.extend(interaction_column.params());
                out.extend(mlp_column.params());
                out.push(column_mix);
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.embed.params_mut();
        match &mut self.body {
            Body::MlpPlus(b) => out.extend(b.params_mut()),
            Body::TwoColumn {
                gate,
                interaction,
                interaction_column,
                mlp_column,
                column_mix,
            } => {
                if let Some(gate) = gate {
                    out.extend(gate.params_mut());
                }
                match interaction {
                    Interaction::Product(p) => out.extend(p.params_mut()),
                    Interaction::Attention(a) => out.extend(a.params_mut()),
                }
                out.extend(interaction_column.params_mut());
                out.extend(mlp_column.params_mut());
                out.push(column_mix);
            }
        }
        out
    }
}

fn mlp_plus_count(input: usize, c: &ModelConfig) -> usize {
    let mut total = 0;
    let mut width = input;
    for &h in &c.mlp_layers {
        // linear weight + bias, GBN scale + shift
        total += width * h + h + 2 * h;
        width = h;
    }
    total += width * c.n_classes + c.n_classes;
    if c.use_gate {
        total += 2 * input;
    }
    if c.use_skip {
        total += input * c.n_classes + c.n_classes + 1;
        if c.use_gate {
            total += 2 * input;
        }
    }
    total
}

/// Trainable parameter count from the config alone. `categories` is the
/// sum of categorical cardinalities; `numeric` and `categorical` count
/// fields.
pub fn param_count(c: &ModelConfig, numeric: usize, categorical: usize, categories: usize) -> usize {
    let m = c.embedding_size;
    let f = numeric + categorical;
    let embed = categories * m + if c.raw_numeric_input { 0 } else { numeric * m };
    let flat = if c.raw_numeric_input { numeric + categorical * m } else { f * m };
    let body = match c.family {
        Family::MlpPlus => mlp_plus_count(flat, c),
        Family::Pnn => {
            let p = c.product.as_ref().expect("pnn settings");
            let raw = p.product_type.raw_width(f, m);
            raw * p.output_size + p.output_size + mlp_plus_count(p.output_size, c)
        }
        Family::Autoint => {
            let a = c.attention.as_ref().expect("autoint settings");
            let per_layer = a.n_heads * 3 * m * m + a.n_heads * m * m + m + if a.residual { m * m } else { 0 };
            a.n_layers * per_layer + mlp_plus_count(f * m, c)
        }
    };
    let two_column = match c.family {
        Family::MlpPlus => 0,
        _ => mlp_plus_count(flat, c) + 1 + if c.use_gate { 2 * flat } else { 0 },
    };
    embed + body + two_column
}
