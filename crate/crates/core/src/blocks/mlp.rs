use crate::error::Result;
use crate::layers::{Ctx, GhostBatchNorm, Linear};
use crate::rng::SeededRng;
use crate::tensor::{Graph, Module, Parameter, Var};

/// Hidden layers of linear -> GBN -> leaky-relu -> dropout, then a final
/// linear map to `output` with nothing after it.
#[derive(Clone, Debug)]
pub struct MlpBlock {
    pub hidden: Vec<(Linear, GhostBatchNorm)>,
    pub head: Linear,
    pub dropout: f64,
    pub slope: f64,
}

impl MlpBlock {
    pub fn new(
        name: &str,
        input: usize,
        sizes: &[usize],
        output: usize,
        dropout: f64,
        slope: f64,
        rng: &mut SeededRng,
    ) -> Self {
        let mut width = input;
        let mut hidden = Vec::with_capacity(sizes.len());
        for (i, &size) in sizes.iter().enumerate() {
            let linear = Linear::new(&format!("{name}.{i}.linear"), width, size, true, rng);
            hidden.push((linear, GhostBatchNorm::new(&format!("{name}.{i}.gbn"), size, 8)));
            width = size;
        }
        MlpBlock {
            hidden,
            head: Linear::new(&format!("{name}.out"), width, output, true, rng),
            dropout,
            slope,
        }
    }

    pub fn input(&self) -> usize {
        self.hidden.first().map_or(self.head.input(), |(l, _)| l.input())
    }

    pub fn set_ghost_size(&mut self, ghost: usize) {
        self.hidden.iter_mut().for_each(|(_, bn)| bn.ghost_size = ghost);
    }

    pub fn forward<'g>(&mut self, g: &'g Graph, x: Var<'g>, ctx: &mut Ctx) -> Result<Var<'g>> {
        let mut h = x;
        for (linear, bn) in &mut self.hidden {
            h = linear.forward(g, h)?;
            h = bn.forward(g, h, ctx.train)?;
            h = h.leaky_relu(self.slope);
            h = h.dropout(self.dropout, ctx.train, &mut ctx.rng)?;
        }
        self.head.forward(g, h)
    }
}

impl Module for MlpBlock {
    fn params(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        for (l, bn) in &self.hidden {
            out.extend(l.params());
            out.extend(bn.params());
        }
        out.extend(self.head.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        for (l, bn) in &mut self.hidden {
            out.extend(l.params_mut());
            out.extend(bn.params_mut());
        }
        out.extend(self.head.params_mut());
        out
    }
}
