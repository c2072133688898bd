use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where the label lives and how to read the file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub column: String,
    pub positive: String,
    #[serde(default = "comma")]
    pub delimiter: char,
    #[serde(default = "yes")]
    pub has_header: bool,
}

fn comma() -> char {
    ','
}

fn yes() -> bool {
    true
}

impl LabelSpec {
    pub fn new(column: impl Into<String>, positive: impl Into<String>) -> Self {
        LabelSpec {
            column: column.into(),
            positive: positive.into(),
            delimiter: ',',
            has_header: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RawColumn {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl RawColumn {
    pub fn is_numeric(&self) -> bool {
        matches!(self, RawColumn::Numeric(_))
    }

    fn select(&self, rows: &[usize]) -> RawColumn {
        match self {
            RawColumn::Numeric(v) => RawColumn::Numeric(rows.iter().map(|&r| v[r]).collect()),
            RawColumn::Categorical(v) => RawColumn::Categorical(rows.iter().map(|&r| v[r].clone()).collect()),
        }
    }
}

/// Typed feature columns and binary labels (1 = positive class).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub columns: Vec<RawColumn>,
    pub labels: Vec<u8>,
    pub dropped: Vec<String>,
}

const MISSING: [&str; 7] = ["", "?", "NA", "N/A", "nan", "NaN", "null"];

fn is_missing(s: &str) -> bool {
    MISSING.contains(&s)
}

fn same_label(value: &str, positive: &str) -> bool {
    if value == positive {
        return true;
    }
    match (value.parse::<f64>(), positive.parse::<f64>()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn positive_fraction(&self) -> f64 {
        self.labels.iter().map(|&l| l as f64).sum::<f64>() / self.n_rows().max(1) as f64
    }

    /// Builds a dataset from string cells. Kinds are inferred per column:
    /// numeric if every non-missing cell parses as a number.
    pub fn from_records(header: Vec<String>, records: Vec<Vec<String>>, label: &LabelSpec) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Data("no data rows".into()));
        }
        let label_idx = header
            .iter()
            .position(|h| *h == label.column)
            .ok_or_else(|| Error::Data(format!("label column {:?} not found", label.column)))?;
        for (i, r) in records.iter().enumerate() {
            if r.len() != header.len() {
                return Err(Error::Data(format!("row {i} has {} fields, header has {}", r.len(), header.len())));
            }
        }
        let raw_labels: Vec<&str> = records.iter().map(|r| r[label_idx].as_str()).collect();
        if let Some(i) = raw_labels.iter().position(|l| is_missing(l)) {
            return Err(Error::Data(format!("row {i} has no label")));
        }
        let distinct: BTreeSet<&str> = raw_labels.iter().copied().collect();
        if distinct.len() > 2 {
            return Err(Error::Data(format!("label is not binary: {} distinct values", distinct.len())));
        }
        if !distinct.iter().any(|v| same_label(v, &label.positive)) {
            return Err(Error::Data(format!("positive class {:?} never occurs", label.positive)));
        }
        let labels = raw_labels.iter().map(|v| same_label(v, &label.positive) as u8).collect();

        let mut names = Vec::new();
        let mut columns = Vec::new();
        let mut dropped = Vec::new();
        for (j, name) in header.iter().enumerate() {
            if j == label_idx {
                continue;
            }
            let cells: Vec<&str> = records.iter().map(|r| r[j].as_str()).collect();
            let parsed: Option<Vec<Option<f64>>> = cells
                .iter()
                .map(|c| if is_missing(c) { Some(None) } else { c.parse::<f64>().ok().map(Some) })
                .collect();
            let column = match parsed {
                Some(v) if v.iter().any(|x| x.is_some()) => RawColumn::Numeric(v),
                _ => RawColumn::Categorical(
                    cells
                        .iter()
                        .map(|c| (!is_missing(c)).then(|| c.to_string()))
                        .collect(),
                ),
            };
            if is_constant(&column) {
                log::info!("dropping constant column {name}");
                dropped.push(name.clone());
                continue;
            }
            names.push(name.clone());
            columns.push(column);
        }
        Ok(Dataset {
            names,
            columns,
            labels,
            dropped,
        })
    }

    /// Keeps only the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            dropped: self.dropped.clone(),
        }
    }

    /// Removes the named feature columns.
    pub fn drop_columns(&self, drop: &[String]) -> Result<Dataset> {
        if let Some(missing) = drop.iter().find(|d| !self.names.contains(d)) {
            return Err(Error::Data(format!("no column named {missing:?}")));
        }
        let keep: Vec<usize> = (0..self.names.len()).filter(|&i| !drop.contains(&self.names[i])).collect();
        if keep.is_empty() {
            return Err(Error::Data("dropping these columns leaves no features".into()));
        }
        Ok(Dataset {
            names: keep.iter().map(|&i| self.names[i].clone()).collect(),
            columns: keep.iter().map(|&i| self.columns[i].clone()).collect(),
            labels: self.labels.clone(),
            dropped: self.dropped.iter().chain(drop).cloned().collect(),
        })
    }
}

/// Constant over the whole file, counting "missing" as a value for
/// categorical columns.
fn is_constant(column: &RawColumn) -> bool {
    match column {
        RawColumn::Numeric(v) => {
            let mut seen = v.iter().flatten();
            match seen.next() {
                None => true,
                Some(first) => seen.all(|x| x == first),
            }
        }
        RawColumn::Categorical(v) => v.iter().collect::<BTreeSet<_>>().len() <= 1,
    }
}

/// Reads an RFC-4180 CSV file.
pub fn load_csv(path: impl AsRef<Path>, label: &LabelSpec) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(label.delimiter as u8)
        .has_headers(label.has_header)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut records = Vec::new();
    for rec in reader.records() {
        records.push(rec?.iter().map(str::to_string).collect::<Vec<_>>());
    }
    let header: Vec<String> = if label.has_header {
        reader.headers()?.iter().map(str::to_string).collect()
    } else {
        let width = records.first().map_or(0, |r| r.len());
        (0..width).map(|i| format!("c{i}")).collect()
    };
    if header.is_empty() && records.is_empty() {
        return Err(Error::Data(format!("{} is empty", path.display())));
    }
    Dataset::from_records(header, records, label)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[&str], label: &LabelSpec) -> Result<Dataset> {
        let header: Vec<String> = rows[0].split(',').map(str::to_string).collect();
        let records = rows[1..]
            .iter()
            .map(|r| r.split(',').map(str::to_string).collect())
            .collect();
        Dataset::from_records(header, records, label)
    }

    #[test]
    fn infers_kinds_and_drops_constants() {
        let d = ds(&["s,x,k,y", "a,1,7,0", "b,2.5,7,1", "a,?,7,0"], &LabelSpec::new("y", "1")).unwrap();
        assert_eq!(d.names, vec!["s", "x"]);
        assert_eq!(d.dropped, vec!["k"]);
        assert!(!d.columns[0].is_numeric());
        assert_eq!(d.columns[1], RawColumn::Numeric(vec![Some(1.0), Some(2.5), None]));
        assert_eq!(d.labels, vec![0, 1, 0]);
    }

    #[test]
    fn label_errors() {
        assert!(ds(&["x,y", "1,0", "2,1"], &LabelSpec::new("z", "1")).is_err());
        assert!(ds(&["x,y", "1,0", "2,1", "3,2"], &LabelSpec::new("y", "1")).is_err());
        assert!(ds(&["x,y", "1,0", "2,0"], &LabelSpec::new("y", "1")).is_err());
        assert!(ds(&["x,y"], &LabelSpec::new("y", "1")).is_err());
        // numeric label text matches numerically
        assert_eq!(ds(&["x,y", "1,0.0", "2,1.0"], &LabelSpec::new("y", "1")).unwrap().labels, vec![0, 1]);
    }

    #[test]
    fn dropping_every_column_is_an_error() {
        let d = ds(&["x,z,y", "1,3,0", "2,4,1"], &LabelSpec::new("y", "1")).unwrap();
        assert_eq!(d.drop_columns(&["x".into()]).unwrap().names, vec!["z"]);
        assert!(d.drop_columns(&["x".into(), "z".into()]).is_err());
    }
}
