use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::LabelSpec;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    /// Relative to the registry file.
    pub path: PathBuf,
    #[serde(flatten)]
    pub label: LabelSpec,
    pub batch_size: usize,
    pub ghost_size: usize,
    #[serde(default)]
    pub source: Option<String>,
}

/// Dataset name -> file, label and batch settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    #[serde(skip)]
    pub root: PathBuf,
    pub datasets: BTreeMap<String, DatasetEntry>,
}

impl Registry {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read registry {}: {e}", path.display())))?;
        let mut reg: Registry = serde_json::from_str(&text)?;
        reg.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(reg)
    }

    /// The registry shipped in the repository's `data/` directory.
    pub fn bundled_path() -> PathBuf {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/registry.json");
        path.canonicalize().unwrap_or(path)
    }

    pub fn bundled() -> Result<Self> {
        Self::load(Self::bundled_path())
    }

    pub fn get(&self, name: &str) -> Result<&DatasetEntry> {
        self.datasets
            .get(name)
            .ok_or_else(|| Error::Config(format!("dataset {name:?} is not in the registry")))
    }

    pub fn path_of(&self, name: &str) -> Result<PathBuf> {
        Ok(self.root.join(&self.get(name)?.path))
    }
}
