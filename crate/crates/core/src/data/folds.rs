use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const N_FOLDS: usize = 5;

/// Row ids of one cross-validation fold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub seed: u64,
    pub fold: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub holdout: Vec<usize>,
}

/// Shuffles `0..n` with `seed`; fold k holds out the k-th contiguous fifth
/// of that order (bounds `k*n/5`). The remaining rows, still in shuffled
/// order, give `floor(0.65 n)` train rows and the rest to validation.
pub fn make_folds(n: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if n < 20 {
        return Err(Error::Data(format!("need at least 20 rows for 5 folds, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let n_train = n * 65 / 100;
    Ok((0..N_FOLDS)
        .map(|k| {
            let (lo, hi) = (k * n / N_FOLDS, (k + 1) * n / N_FOLDS);
            let rest: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
            FoldSplit {
                seed,
                fold: k,
                train: rest[..n_train].to_vec(),
                validation: rest[n_train..].to_vec(),
                holdout: order[lo..hi].to_vec(),
            }
        })
        .collect())
}
