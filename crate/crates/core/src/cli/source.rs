use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{CliError, CliResult, DataArgs};
use crate::data::{load_csv, Dataset, LabelSpec, Registry};

/// Where a dataset came from; recorded in every result file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataRef {
    pub name: String,
    pub path: PathBuf,
    pub label: LabelSpec,
    pub batch_size: usize,
    pub ghost_size: usize,
}

pub struct Source {
    pub data_ref: DataRef,
    pub data: Dataset,
}

const CSV_BATCH: usize = 128;
const CSV_GHOST: usize = 16;

/// Resolves `--dataset`/`--csv` to dataset references without reading them.
pub fn resolve(args: &DataArgs) -> CliResult<Vec<DataRef>> {
    if let Some(path) = &args.csv {
        let mut label = LabelSpec::new(args.label.clone().expect("clap requires --label"), args.positive.clone());
        label.delimiter = args.delimiter;
        label.has_header = !args.no_header;
        let name = path.file_stem().map_or("csv".into(), |s| s.to_string_lossy().into_owned());
        return Ok(vec![DataRef {
            name,
            path: path.clone(),
            label,
            batch_size: args.batch_size.unwrap_or(CSV_BATCH),
            ghost_size: args.ghost_size.unwrap_or(CSV_GHOST),
        }]);
    }
    if args.dataset.is_empty() {
        return Err(CliError::Usage("one of --dataset or --csv is required".into()));
    }
    let registry = match &args.registry {
        Some(p) => Registry::load(p),
        None => Registry::bundled(),
    }
    .map_err(|e| CliError::Usage(e.to_string()))?;
    args.dataset
        .iter()
        .map(|name| {
            let entry = registry.get(name).map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(DataRef {
                name: name.clone(),
                path: registry.path_of(name)?,
                label: entry.label.clone(),
                batch_size: args.batch_size.unwrap_or(entry.batch_size),
                ghost_size: args.ghost_size.unwrap_or(entry.ghost_size),
            })
        })
        .collect()
}

pub fn load(data_ref: &DataRef) -> CliResult<Source> {
    if !data_ref.path.is_file() {
        return Err(CliError::Runtime(format!(
            "dataset {} not found at {}; see data/README.md for where to get it",
            data_ref.name,
            data_ref.path.display()
        )));
    }
    let data = load_csv(&data_ref.path, &data_ref.label)?;
    log::info!(
        "{}: {} rows, {} feature columns, {:.1}% positive",
        data_ref.name,
        data.n_rows(),
        data.names.len(),
        100.0 * data.positive_fraction()
    );
    Ok(Source {
        data_ref: data_ref.clone(),
        data,
    })
}
