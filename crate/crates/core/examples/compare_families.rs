//! Builds MLP+, PNN and AutoInt on the same data, prints parameter counts
//! for the three ablation scenarios and trains each briefly.
//!
//! cargo run --example compare_families -- [max_epochs]

use tabular_nn::data::{load_csv, make_folds, Registry};
use tabular_nn::models::{param_count, Family, ModelConfig, TabularModel};
use tabular_nn::tensor::Module;
use tabular_nn::training::{fit, prepare_fold, TrainSettings};

fn main() -> tabular_nn::Result<()> {
    let max_epochs: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let registry = Registry::bundled()?;
    let entry = registry.get("spambase")?;
    let data = load_csv(registry.path_of("spambase")?, &entry.label)?;
    let fold = prepare_fold(&data, &make_folds(data.n_rows(), 20210)?[0])?;
    let layout = fold.schema.layout();
    let numeric = layout.numeric_fields().len();
    let categorical = layout.categorical_fields().len();
    let categories: usize = layout.cardinalities.iter().flatten().sum();

    for family in Family::ALL {
        let config = ModelConfig::default_for(family);
        let built = TabularModel::new(&config, &layout, 0)?;
        let counts: Vec<String> = [(true, true), (true, false), (false, false)]
            .iter()
            .map(|&(s, g)| {
                let c = config.clone().with_ablation(s, g);
                format!("skip={} gate={}: {}", s as u8, g as u8, param_count(&c, numeric, categorical, categories))
            })
            .collect();
        println!("{family}: {} trainable ({})", built.num_trainable(), counts.join(", "));

        let mut settings = TrainSettings::new(entry.batch_size, entry.ghost_size, 0.01, 10, 20210);
        settings.max_epochs = max_epochs;
        let (_, out) = fit(&config, &fold, &settings)?;
        println!(
            "    best epoch {:?}, validation {:.4}, holdout {:.4}",
            out.best_epoch,
            out.best_val_auroc.unwrap_or(f64::NAN),
            out.holdout_auroc.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
