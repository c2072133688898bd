//! Trains MLP+ on one fold of the bundled spambase data.
//!
//! cargo run --example train_mlp_plus -- [fold] [--raw]

use tabular_nn::data::{load_csv, make_folds, Registry};
use tabular_nn::models::{Family, ModelConfig};
use tabular_nn::training::{fit, prepare_fold, TrainSettings};

fn main() -> tabular_nn::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let fold: usize = args.iter().find_map(|a| a.parse().ok()).unwrap_or(0);
    let raw = args.iter().any(|a| a == "--raw");

    let registry = Registry::bundled()?;
    let entry = registry.get("spambase")?;
    let data = load_csv(registry.path_of("spambase")?, &entry.label)?;
    let folds = make_folds(data.n_rows(), 20210)?;
    let prepared = prepare_fold(&data, &folds[fold])?;

    let mut config = ModelConfig::default_for(Family::MlpPlus);
    config.raw_numeric_input = raw;
    let settings = TrainSettings::new(entry.batch_size, entry.ghost_size, 0.01, 10, 20210);
    let start = std::time::Instant::now();
    let (_, outcome) = fit(&config, &prepared, &settings)?;
    for log in &outcome.logs {
        println!("epoch {:3}  loss {:.4}  val auroc {:.4}  lr {:.5}", log.epoch, log.train_loss, log.val_auroc, log.lr);
    }
    println!(
        "best epoch {:?}, validation {:.4}, holdout {:.4} ({:.1}s)",
        outcome.best_epoch,
        outcome.best_val_auroc.unwrap_or(f64::NAN),
        outcome.holdout_auroc.unwrap_or(f64::NAN),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
