//! Saves a briefly trained model, loads it back and checks the two give
//! identical predictions.
//!
//! cargo run --example checkpoint_round_trip -- [dir]

use tabular_nn::checkpoint;
use tabular_nn::data::{load_csv, make_folds, Registry};
use tabular_nn::models::{Family, ModelConfig};
use tabular_nn::training::{fit, prepare_fold, TrainSettings};

fn main() -> tabular_nn::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("tabnn-checkpoint"));
    let registry = Registry::bundled()?;
    let entry = registry.get("spambase")?;
    let data = load_csv(registry.path_of("spambase")?, &entry.label)?;
    let split = make_folds(data.n_rows(), 20210)?.swap_remove(0);
    let fold = prepare_fold(&data, &split)?;
    let mut settings = TrainSettings::new(entry.batch_size, entry.ghost_size, 0.01, 10, 20210);
    settings.max_epochs = 3;
    let (mut model, _) = fit(&ModelConfig::default_for(Family::Pnn), &fold, &settings)?;

    checkpoint::save(&dir, &model, &fold.schema)?;
    let (mut loaded, schema) = checkpoint::load(&dir)?;
    let manifest: checkpoint::Manifest = checkpoint::read_json(&dir.join(checkpoint::MANIFEST))?;
    println!("saved {} tensors to {}", manifest.entries.len(), dir.display());

    let a = model.predict_proba(&fold.holdout, 4096)?;
    let b = loaded.predict_proba(&schema.encode(&data)?.gather(&split.holdout), 4096)?;
    println!("holdout predictions identical after reload: {}", a == b);
    Ok(())
}
