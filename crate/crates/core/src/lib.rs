pub mod blocks;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod interpret;
pub mod hpo;
pub mod layers;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
