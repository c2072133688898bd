//! Skip/gate ablation of one family on one spambase fold.
//!
//! cargo run --release --example ablation -- [family] [max_epochs]

use tabular_nn::data::{load_csv, make_folds, Registry};
use tabular_nn::models::{Family, ModelConfig};
use tabular_nn::training::{fit, prepare_fold, TrainSettings};

fn main() -> tabular_nn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let family: Family = args.first().and_then(|a| a.parse().ok()).unwrap_or(Family::MlpPlus);
    let max_epochs: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(40);

    let registry = Registry::bundled()?;
    let entry = registry.get("spambase")?;
    let data = load_csv(registry.path_of("spambase")?, &entry.label)?;
    let fold = prepare_fold(&data, &make_folds(data.n_rows(), 20210)?[0])?;
    let mut settings = TrainSettings::new(entry.batch_size, entry.ghost_size, 0.01, 10, 20210);
    settings.max_epochs = max_epochs;

    for (skip, gate) in [(true, true), (true, false), (false, false)] {
        let config = ModelConfig::default_for(family).with_ablation(skip, gate);
        let (_, out) = fit(&config, &fold, &settings)?;
        println!(
            "{family} skip={} gate={}: holdout {:.4} (best epoch {:?})",
            skip as u8,
            gate as u8,
            out.holdout_auroc.unwrap_or(f64::NAN),
            out.best_epoch
        );
    }
    Ok(())
}
