//! A short random or neighbour-sampled study on one spambase fold.
//!
//! cargo run --release --example hpo_study -- [family] [trials] [--neighbor]

use tabular_nn::data::{load_csv, make_folds, Registry};
use tabular_nn::hpo::{run_study, Sampler, SearchSpace, StudyOptions};
use tabular_nn::models::Family;
use tabular_nn::training::prepare_fold;

fn main() -> tabular_nn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let family: Family = args.first().and_then(|a| a.parse().ok()).unwrap_or(Family::MlpPlus);
    let trials: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(6);

    let registry = Registry::bundled()?;
    let entry = registry.get("spambase")?;
    let data = load_csv(registry.path_of("spambase")?, &entry.label)?;
    let fold = prepare_fold(&data, &make_folds(data.n_rows(), 20210)?[0])?;

    let space = SearchSpace::new(family);
    let mut opts = StudyOptions::new(entry.batch_size, entry.ghost_size, 20210);
    opts.n_trials = trials;
    opts.max_epochs = 10;
    if args.iter().any(|a| a == "--neighbor") {
        opts.sampler = Sampler::Neighbor { startup: 3 };
    }
    println!("{family}: {} grid points, {} sampler", space.points().len(), opts.sampler.name());
    let study = run_study(&space, &fold, &opts, &[], |r| {
        println!(
            "trial {:2}: lr {} step {} dropout {} layers {:?} -> validation {:.4}",
            r.trial,
            r.params.lr,
            r.params.lr_step,
            r.params.model.dropout,
            r.params.model.mlp_layers,
            r.val_auroc.unwrap_or(f64::NAN)
        );
        Ok(())
    })?;
    println!(
        "best trial {} (validation {:.4}), holdout {:.4}",
        study.best.trial,
        study.best.val_auroc.unwrap_or(f64::NAN),
        study.best.holdout_auroc.unwrap_or(f64::NAN)
    );
    Ok(())
}
