//! Turns per-fold holdout scores into the mean ± sd summary table.
//!
//! cargo run --example aggregate

use tabular_nn::hpo::{aggregate_results, FoldScore};

fn main() {
    let rows = [
        ("qsar_bio", "MLP+", [0.921, 0.904, 0.951, 0.930, 0.914]),
        ("qsar_bio", "AutoInt", [0.940, 0.897, 0.944, 0.928, 0.936]),
        ("spambase", "MLP+", [0.985, 0.976, 0.975, 0.973, 0.972]),
    ];
    let mut scores = Vec::new();
    for (dataset, model, folds) in rows {
        for (fold, holdout_auroc) in folds.into_iter().enumerate() {
            scores.push(FoldScore {
                dataset: dataset.into(),
                model: model.into(),
                seed: 20210,
                fold,
                holdout_auroc,
            });
        }
    }
    print!("{}", aggregate_results(&scores).to_csv());
}
