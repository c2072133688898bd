//! Trains un-embedded MLP+ on a spambase fold, reports how often each
//! column's gates are positive, drops the columns that never pass and
//! refits.
//!
//! cargo run --release --example inspect_gates -- [fold]

use tabular_nn::data::{load_csv, make_folds, Registry};
use tabular_nn::interpret::{gate_passage_stats, inspection_rows, suggest_and_apply_drops};
use tabular_nn::models::{Family, ModelConfig};
use tabular_nn::training::{fit, prepare_fold, TrainSettings};

fn main() -> tabular_nn::Result<()> {
    let k: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2);
    let registry = Registry::bundled()?;
    let entry = registry.get("spambase")?;
    let data = load_csv(registry.path_of("spambase")?, &entry.label)?;
    let split = make_folds(data.n_rows(), 20210)?.swap_remove(k);
    let fold = prepare_fold(&data, &split)?;

    let mut config = ModelConfig::default_for(Family::MlpPlus);
    config.raw_numeric_input = true;
    let settings = TrainSettings::new(entry.batch_size, entry.ghost_size, 0.1, 10, 20210);
    let (model, out) = fit(&config, &fold, &settings)?;
    let before = out.holdout_auroc.unwrap_or(f64::NAN);
    println!("fold {k}: holdout {before:.4}");

    let report = gate_passage_stats(&model, &inspection_rows(&fold), 4096)?;
    println!("least-passing columns:");
    let mut by_main = report.columns.clone();
    by_main.sort_by(|a, b| a.main_pct.total_cmp(&b.main_pct));
    for row in by_main.iter().take(8) {
        println!(
            "    {:28} main {:5.1}%  skip {:5.1}%  agreement {:5.1}%",
            row.column,
            row.main_pct,
            row.skip_pct.unwrap_or(f64::NAN),
            row.agreement_pct.unwrap_or(f64::NAN)
        );
    }
    println!("drop candidates: {:?}", report.drop_candidates);

    let (_, cmp) = suggest_and_apply_drops(&report, &data, &split, &config, &settings, before)?;
    if cmp.no_op {
        println!("nothing to drop");
    } else {
        println!("refit without {:?}: holdout {:.4} ({:+.4})", cmp.dropped, cmp.after_holdout_auroc, cmp.delta);
    }
    Ok(())
}
