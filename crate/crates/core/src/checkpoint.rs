//! On-disk model checkpoints.
//!
//! A checkpoint directory holds `manifest.json` (parameter paths, shapes,
//! byte offsets), `params.bin` (every value as little-endian f64, in
//! manifest order), `config.json` and `schema.json`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::FeatureSchema;
use crate::error::{Error, Result};
use crate::models::{ModelConfig, TabularModel};
use crate::tensor::Module;

pub const FORMAT_VERSION: &str = "1";
pub const MANIFEST: &str = "manifest.json";
pub const PARAMS: &str = "params.bin";
pub const CONFIG: &str = "config.json";
pub const SCHEMA: &str = "schema.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub shape: Vec<usize>,
    /// Byte offset into `params.bin`.
    pub offset: usize,
    pub trainable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: String,
    pub entries: Vec<ManifestEntry>,
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| Error::Checkpoint(format!("bad path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Manifest and blob for any module.
pub fn encode_params(module: &dyn Module) -> (Manifest, Vec<u8>) {
    let mut blob = Vec::new();
    let entries = module
        .params()
        .into_iter()
        .map(|p| {
            let offset = blob.len();
            for v in &p.value {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            ManifestEntry {
                path: p.name().to_string(),
                shape: p.shape().to_vec(),
                offset,
                trainable: p.trainable(),
            }
        })
        .collect();
    (
        Manifest {
            format_version: FORMAT_VERSION.into(),
            entries,
        },
        blob,
    )
}

/// Copies blob values into `module`; names, shapes and kinds must match
/// one to one.
pub fn decode_params(module: &mut dyn Module, manifest: &Manifest, blob: &[u8]) -> Result<()> {
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {:?}",
            manifest.format_version
        )));
    }
    let mut params = module.params_mut();
    if params.len() != manifest.entries.len() {
        return Err(Error::Checkpoint(format!(
            "manifest lists {} parameters, model has {}",
            manifest.entries.len(),
            params.len()
        )));
    }
    for (p, e) in params.iter_mut().zip(&manifest.entries) {
        if p.name() != e.path || p.shape() != e.shape.as_slice() || p.trainable() != e.trainable {
            return Err(Error::Checkpoint(format!(
                "entry {} {:?} does not match parameter {} {:?}",
                e.path,
                e.shape,
                p.name(),
                p.shape()
            )));
        }
        let end = e.offset + 8 * p.len();
        let bytes = blob
            .get(e.offset..end)
            .ok_or_else(|| Error::Checkpoint(format!("{} runs past the end of {PARAMS}", e.path)))?;
        for (v, b) in p.value.iter_mut().zip(bytes.chunks_exact(8)) {
            *v = f64::from_le_bytes(b.try_into().expect("8 bytes"));
        }
    }
    Ok(())
}

pub fn save(dir: &Path, model: &TabularModel, schema: &FeatureSchema) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (manifest, blob) = encode_params(model);
    write_atomic(&dir.join(PARAMS), &blob)?;
    write_json_atomic(&dir.join(CONFIG), &model.config)?;
    write_json_atomic(&dir.join(SCHEMA), schema)?;
    // manifest last: its presence marks a complete checkpoint
    write_json_atomic(&dir.join(MANIFEST), &manifest)
}

pub fn load(dir: &Path) -> Result<(TabularModel, FeatureSchema)> {
    if !dir.join(MANIFEST).is_file() {
        return Err(Error::Checkpoint(format!("no checkpoint at {}", dir.display())));
    }
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    let config: ModelConfig = read_json(&dir.join(CONFIG))?;
    let schema: FeatureSchema = read_json(&dir.join(SCHEMA))?;
    let blob = fs::read(dir.join(PARAMS))?;
    let mut model = TabularModel::new(&config, &schema.layout(), 0)?;
    decode_params(&mut model, &manifest, &blob)?;
    Ok((model, schema))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnKind, ColumnSchema};
    use crate::models::Family;

    fn schema() -> FeatureSchema {
        FeatureSchema {
            columns: vec![
                ColumnSchema {
                    name: "x".into(),
                    kind: ColumnKind::Numeric { mean: 0.5, std: 2.0 },
                },
                ColumnSchema {
                    name: "c".into(),
                    kind: ColumnKind::Categorical {
                        categories: vec!["a".into(), "b".into()],
                    },
                },
            ],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let s = schema();
        for family in Family::ALL {
            let model = TabularModel::new(&ModelConfig::default_for(family), &s.layout(), 7).unwrap();
            let path = dir.path().join(family.to_string());
            save(&path, &model, &s).unwrap();
            let (back, schema_back) = load(&path).unwrap();
            assert_eq!(schema_back, s);
            assert_eq!(back.config, model.config);
            let a: Vec<_> = model.params().iter().map(|p| (p.name().to_string(), p.value.clone())).collect();
            let b: Vec<_> = back.params().iter().map(|p| (p.name().to_string(), p.value.clone())).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn offsets_are_contiguous() {
        let s = schema();
        let model = TabularModel::new(&ModelConfig::default_for(Family::MlpPlus), &s.layout(), 1).unwrap();
        let (m, blob) = encode_params(&model);
        assert_eq!(m.format_version, "1");
        let mut next = 0;
        for (e, p) in m.entries.iter().zip(model.params()) {
            assert_eq!(e.offset, next);
            next += 8 * p.len();
        }
        assert_eq!(next, blob.len());
        assert!(m.entries.iter().any(|e| !e.trainable));
    }

    #[test]
    fn mismatches_are_rejected() {
        let s = schema();
        let mut model = TabularModel::new(&ModelConfig::default_for(Family::MlpPlus), &s.layout(), 1).unwrap();
        let (mut m, blob) = encode_params(&model);
        assert!(decode_params(&mut model, &m, &blob[..blob.len() - 8]).is_err());
        m.entries[0].shape = vec![1];
        assert!(decode_params(&mut model, &m, &blob).is_err());
        m.format_version = "2".into();
        assert!(decode_params(&mut model, &m, &blob).unwrap_err().to_string().contains("version"));
        let dir = tempfile::tempdir().unwrap();
        assert!(load(dir.path()).unwrap_err().to_string().contains("no checkpoint"));
    }
}
