use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{Ctx, Linear};
use crate::rng::SeededRng;
use crate::tensor::{Graph, Module, Parameter, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionSettings {
    pub n_layers: usize,
    pub n_heads: usize,
    pub dropout: f64,
    pub leaky_activation: bool,
    pub residual: bool,
}

/// One multi-head self-attention layer over fields. Each head has its own
/// `m x m` query/key/value projections; heads are concatenated and
/// projected back to `m`.
#[derive(Clone, Debug)]
pub struct AttentionLayer {
    pub heads: Vec<[Linear; 3]>,
    pub output: Linear,
    pub residual: Option<Linear>,
    pub dim: usize,
    pub dropout: f64,
    pub activation_slope: Option<f64>,
}

impl AttentionLayer {
    pub fn new(name: &str, dim: usize, settings: &AttentionSettings, slope: f64, rng: &mut SeededRng) -> Self {
        let heads = (0..settings.n_heads)
            .map(|h| {
                ["query", "key", "value"].map(|p| Linear::new(&format!("{name}.head{h}.{p}"), dim, dim, false, rng))
            })
            .collect();
        AttentionLayer {
            heads,
            output: Linear::new(&format!("{name}.output"), settings.n_heads * dim, dim, true, rng),
            residual: settings
                .residual
                .then(|| Linear::new(&format!("{name}.residual"), dim, dim, false, rng)),
            dim,
            dropout: settings.dropout,
            activation_slope: settings.leaky_activation.then_some(slope),
        }
    }

    /// Returns the layer output and each head's `[batch, F, F]` attention
    /// weights (before dropout).
    pub fn forward<'g>(&self, g: &'g Graph, e: Var<'g>, ctx: &mut Ctx) -> Result<(Var<'g>, Vec<Var<'g>>)> {
        let shape = e.shape();
        if shape.len() != 3 || shape[2] != self.dim {
            return Err(Error::shape("attention", &shape, &[self.dim]));
        }
        let scale = 1.0 / (self.dim as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads.len());
        let mut weights = Vec::with_capacity(self.heads.len());
        for [wq, wk, wv] in &self.heads {
            let q = wq.forward(g, e)?;
            let k = wk.forward(g, e)?;
            let v = wv.forward(g, e)?;
            let a = q.bmm(&k.transpose()?)?.affine(scale, 0.0).softmax()?;
            weights.push(a);
            let a = a.dropout(self.dropout, ctx.train, &mut ctx.rng)?;
            outs.push(a.bmm(&v)?);
        }
        let cat = if outs.len() == 1 { outs[0] } else { g.concat(&outs, 2)? };
        let mut y = self.output.forward(g, cat)?;
        if let Some(res) = &self.residual {
            y = y.add(&res.forward(g, e)?)?;
        }
        if let Some(slope) = self.activation_slope {
            y = y.leaky_relu(slope);
        }
        Ok((y, weights))
    }
}

impl Module for AttentionLayer {
    fn params(&self) -> Vec<&Parameter> {
        let mut out: Vec<&Parameter> = self.heads.iter().flatten().flat_map(|l| l.params()).collect();
        out.extend(self.output.params());
        if let Some(r) = &self.residual {
            out.extend(r.params());
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = self.heads.iter_mut().flatten().flat_map(|l| l.params_mut()).collect();
        out.extend(self.output.params_mut());
        if let Some(r) = &mut self.residual {
            out.extend(r.params_mut());
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct AttentionBlock {
    pub layers: Vec<AttentionLayer>,
}

impl AttentionBlock {
    pub fn new(name: &str, dim: usize, settings: &AttentionSettings, slope: f64, rng: &mut SeededRng) -> Self {
        AttentionBlock {
            layers: (0..settings.n_layers)
                .map(|l| AttentionLayer::new(&format!("{name}.{l}"), dim, settings, slope, rng))
                .collect(),
        }
    }

    /// Output of the last layer and every layer's per-head weights.
    pub fn forward<'g>(&self, g: &'g Graph, e: Var<'g>, ctx: &mut Ctx) -> Result<(Var<'g>, Vec<Vec<Var<'g>>>)> {
        let mut h = e;
        let mut all = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, w) = layer.forward(g, h, ctx)?;
            h = y;
            all.push(w);
        }
        Ok((h, all))
    }
}

impl Module for AttentionBlock {
    fn params(&self) -> Vec<&Parameter> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}
