use crate::error::{Error, Result};
use crate::tensor::{Graph, Module, Parameter, Var};

/// Batch norm whose training statistics come from consecutive ghost
/// sub-batches of `ghost_size` rows.
#[derive(Clone, Debug)]
pub struct GhostBatchNorm {
    pub scale: Parameter,
    pub shift: Parameter,
    pub running_mean: Parameter,
    pub running_var: Parameter,
    pub ghost_size: usize,
    pub momentum: f64,
    pub eps: f64,
}

impl GhostBatchNorm {
    pub const MOMENTUM: f64 = 0.1;
    pub const EPS: f64 = 1e-5;

    pub fn new(name: &str, width: usize, ghost_size: usize) -> Self {
        GhostBatchNorm {
            scale: Parameter::new(format!("{name}.scale"), &[width], vec![1.0; width]),
            shift: Parameter::new(format!("{name}.shift"), &[width], vec![0.0; width]),
            running_mean: Parameter::buffer(format!("{name}.running_mean"), &[width], vec![0.0; width]),
            running_var: Parameter::buffer(format!("{name}.running_var"), &[width], vec![1.0; width]),
            ghost_size,
            momentum: Self::MOMENTUM,
            eps: Self::EPS,
        }
    }

    pub fn width(&self) -> usize {
        self.scale.len()
    }

    /// Train mode normalizes each ghost sub-batch and folds its statistics
    /// into the running buffers; eval mode uses the running buffers.
    pub fn forward<'g>(&mut self, g: &'g Graph, x: Var<'g>, train: bool) -> Result<Var<'g>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.width() {
            return Err(Error::shape("ghost_batch_norm", &shape, &[self.width()]));
        }
        let normalized = if train {
            let (xn, stats) = x.ghost_normalize(self.ghost_size, self.eps)?;
            let m = self.momentum;
            for s in &stats {
                for j in 0..self.width() {
                    self.running_mean.value[j] = (1.0 - m) * self.running_mean.value[j] + m * s.mean[j];
                    self.running_var.value[j] = (1.0 - m) * self.running_var.value[j] + m * s.var[j];
                }
            }
            xn
        } else {
            let w = self.width();
            let mean = g.constant(&[w], self.running_mean.value.clone())?;
            let inv = self.running_var.value.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
            x.sub(&mean)?.mul(&g.constant(&[w], inv)?)?
        };
        normalized.mul(&g.param(&self.scale))?.add(&g.param(&self.shift))
    }
}

impl Module for GhostBatchNorm {
    fn params(&self) -> Vec<&Parameter> {
        vec![&self.scale, &self.shift, &self.running_mean, &self.running_var]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.scale, &mut self.shift, &mut self.running_mean, &mut self.running_var]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn random(rows: usize, cols: usize, seed: u64) -> Vec<f64> {
        let mut rng = SeededRng::new(seed);
        (0..rows * cols).map(|_| 3.0 * rng.normal() + 1.0).collect()
    }

    #[test]
    fn constant_column_normalizes_to_zero() {
        let mut bn = GhostBatchNorm::new("bn", 1, 4);
        let g = Graph::new();
        let x = g.constant(&[8, 1], vec![5.0; 8]).unwrap();
        let y = bn.forward(&g, x, true).unwrap();
        assert!(y.value().iter().all(|&v| v == 0.0));
        assert!(bn.running_var.value[0] > 0.0);
    }

    #[test]
    fn each_ghost_batch_is_standardized() {
        let mut bn = GhostBatchNorm::new("bn", 3, 4);
        let g = Graph::new();
        let x = g.constant(&[8, 3], random(8, 3, 1)).unwrap();
        let y = bn.forward(&g, x, true).unwrap().value();
        for group in 0..2 {
            for j in 0..3 {
                let col: Vec<f64> = (0..4).map(|r| y[(group * 4 + r) * 3 + j]).collect();
                let mean = col.iter().sum::<f64>() / 4.0;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
                assert!(mean.abs() < 1e-10);
                // eps keeps the variance just under 1
                assert!((var - 1.0).abs() < 1e-4, "{var}");
            }
        }
    }

    #[test]
    fn single_row_training_batch_is_an_error() {
        let mut bn = GhostBatchNorm::new("bn", 2, 4);
        let g = Graph::new();
        let x = g.constant(&[1, 2], vec![1.0, 2.0]).unwrap();
        assert!(bn.forward(&g, x, true).is_err());
        assert!(bn.forward(&g, x, false).is_ok());
    }

    #[test]
    fn eval_rows_are_independent_of_batching() {
        let mut bn = GhostBatchNorm::new("bn", 3, 4);
        {
            let g = Graph::new();
            let x = g.constant(&[12, 3], random(12, 3, 2)).unwrap();
            bn.forward(&g, x, true).unwrap();
        }
        let data = random(5, 3, 3);
        let g = Graph::no_grad();
        let all = bn.forward(&g, g.constant(&[5, 3], data.clone()).unwrap(), false).unwrap().value();
        for r in 0..5 {
            let one = g.constant(&[1, 3], data[r * 3..(r + 1) * 3].to_vec()).unwrap();
            let y = bn.forward(&g, one, false).unwrap().value();
            assert_eq!(&all[r * 3..(r + 1) * 3], &y[..]);
        }
    }
}
