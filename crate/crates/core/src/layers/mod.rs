//! Primitive layers: Leaky Gate, Ghost Batch Norm, linear, field embeddings.

mod embedding;
mod gate;
mod gbn;
mod linear;

pub use embedding::{FieldEmbeddings, FieldLayout};
pub use gate::{gate_partition, Bound, GateOutput, Interval, LeakyGate, Partition};
pub use gbn::GhostBatchNorm;
pub use linear::Linear;

use crate::rng::SeededRng;

pub const DEFAULT_SLOPE: f64 = 0.01;

/// Mode and randomness for one forward pass.
#[derive(Clone, Debug)]
pub struct Ctx {
    pub train: bool,
    pub rng: SeededRng,
}

impl Ctx {
    pub fn train(seed: u64) -> Self {
        Ctx {
            train: true,
            rng: SeededRng::new(seed),
        }
    }

    pub fn eval() -> Self {
        Ctx {
            train: false,
            rng: SeededRng::new(0),
        }
    }
}

/// `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub(crate) fn uniform_init(rng: &mut SeededRng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..n).map(|_| rng.uniform_in(-bound, bound)).collect()
}
