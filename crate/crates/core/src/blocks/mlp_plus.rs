use super::MlpBlock;
use crate::error::{Error, Result};
use crate::layers::{Ctx, GateOutput, LeakyGate, Linear};
use crate::rng::SeededRng;
use crate::tensor::{Graph, Module, Parameter, Var};

/// Leaky-gated MLP and linear skip path mixed by `sigmoid(mix)`.
///
/// `use_skip = false` drops the skip gate, the skip layer and the mix
/// scalar; `use_gate = false` drops both gates.
#[derive(Clone, Debug)]
pub struct MlpPlusBlock {
    pub main_gate: Option<LeakyGate>,
    pub mlp: MlpBlock,
    pub skip_gate: Option<LeakyGate>,
    pub skip: Option<Linear>,
    pub mix: Option<Parameter>,
}

/// Both gates' pre-activations and outputs for one batch.
#[derive(Clone, Copy, Debug)]
pub struct MlpPlusGates<'g> {
    pub main: Option<GateOutput<'g>>,
    pub skip: Option<GateOutput<'g>>,
}

impl MlpPlusBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        input: usize,
        sizes: &[usize],
        output: usize,
        dropout: f64,
        slope: f64,
        use_skip: bool,
        use_gate: bool,
        rng: &mut SeededRng,
    ) -> Self {
        let main_gate = use_gate.then(|| LeakyGate::new(&format!("{name}.gate"), input, slope));
        let mlp = MlpBlock::new(&format!("{name}.mlp"), input, sizes, output, dropout, slope, rng);
        let skip_gate = (use_gate && use_skip).then(|| LeakyGate::new(&format!("{name}.skip_gate"), input, slope));
        let skip = use_skip.then(|| Linear::new(&format!("{name}.skip"), input, output, true, rng));
        let mix = use_skip.then(|| Parameter::new(format!("{name}.mix"), &[], vec![0.0]));
        MlpPlusBlock {
            main_gate,
            mlp,
            skip_gate,
            skip,
            mix,
        }
    }

    pub fn input(&self) -> usize {
        self.mlp.input()
    }

    /// Weight on the MLP path, `sigmoid(mix)`; 1 without a skip path.
    pub fn alpha(&self) -> f64 {
        self.mix.as_ref().map_or(1.0, |a| crate::tensor::sigmoid(a.value[0]))
    }

    fn check(&self, x: &Var<'_>) -> Result<()> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.input() {
            return Err(Error::shape("mlp_plus", &shape, &[self.input()]));
        }
        Ok(())
    }

    pub fn gates<'g>(&self, g: &'g Graph, x: Var<'g>) -> Result<MlpPlusGates<'g>> {
        self.check(&x)?;
        Ok(MlpPlusGates {
            main: self.main_gate.as_ref().map(|gate| gate.forward_full(g, x)).transpose()?,
            skip: self.skip_gate.as_ref().map(|gate| gate.forward_full(g, x)).transpose()?,
        })
    }

    pub fn forward<'g>(&mut self, g: &'g Graph, x: Var<'g>, ctx: &mut Ctx) -> Result<Var<'g>> {
        let gates = self.gates(g, x)?;
        let main_in = gates.main.map_or(x, |o| o.out);
        let main = self.mlp.forward(g, main_in, ctx)?;
        let (Some(skip), Some(mix)) = (&self.skip, &self.mix) else {
            return Ok(main);
        };
        let skip_out = skip.forward(g, gates.skip.map_or(x, |o| o.out))?;
        let alpha = g.param(mix).sigmoid();
        let beta = alpha.affine(-1.0, 1.0);
        main.mul(&alpha)?.add(&skip_out.mul(&beta)?)
    }
}

impl Module for MlpPlusBlock {
    fn params(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        if let Some(gate) = &self.main_gate {
            out.extend(gate.params());
        }
        out.extend(self.mlp.params());
        if let Some(gate) = &self.skip_gate {
            out.extend(gate.params());
        }
        if let Some(skip) = &self.skip {
            out.extend(skip.params());
        }
        out.extend(self.mix.iter());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        if let Some(gate) = &mut self.main_gate {
            out.extend(gate.params_mut());
        }
        out.extend(self.mlp.params_mut());
        if let Some(gate) = &mut self.skip_gate {
            out.extend(gate.params_mut());
        }
        if let Some(skip) = &mut self.skip {
            out.extend(skip.params_mut());
        }
        out.extend(self.mix.iter_mut());
        out
    }
}
