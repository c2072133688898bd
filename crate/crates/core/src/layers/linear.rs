use super::uniform_init;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{Graph, Module, Parameter, Var};

/// `y = x W + b` with `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Option<Parameter>,
}

impl Linear {
    pub fn new(name: &str, input: usize, output: usize, bias: bool, rng: &mut SeededRng) -> Self {
        let weight = Parameter::new(
            format!("{name}.weight"),
            &[input, output],
            uniform_init(rng, input * output, input),
        );
        let bias = bias.then(|| Parameter::new(format!("{name}.bias"), &[output], uniform_init(rng, output, input)));
        Linear { weight, bias }
    }

    pub fn input(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output(&self) -> usize {
        self.weight.shape()[1]
    }

    /// Applies to the last axis of `x`, any leading shape.
    pub fn forward<'g>(&self, g: &'g Graph, x: Var<'g>) -> Result<Var<'g>> {
        let shape = x.shape();
        let last = *shape.last().ok_or_else(|| Error::op("linear", "scalar input"))?;
        if last != self.input() {
            return Err(Error::shape("linear", &shape, self.weight.shape()));
        }
        let rows = x.numel() / last;
        let flat = if shape.len() == 2 { x } else { x.reshape(&[rows, last])? };
        let mut y = flat.matmul(&g.param(&self.weight))?;
        if let Some(b) = &self.bias {
            y = y.add(&g.param(b))?;
        }
        if shape.len() == 2 {
            return Ok(y);
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = self.output();
        y.reshape(&out_shape)
    }
}

impl Module for Linear {
    fn params(&self) -> Vec<&Parameter> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }
}
