use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{Batch, Dataset, FieldLayout, RawColumn};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    /// Standardized with these train-fold statistics; missing values get the mean.
    Numeric { mean: f64, std: f64 },
    /// Train-fold categories in code order. Code `categories.len()` is
    /// shared by missing and unseen values.
    Categorical { categories: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl ColumnSchema {
    pub fn cardinality(&self) -> Option<usize> {
        match &self.kind {
            ColumnKind::Numeric { .. } => None,
            ColumnKind::Categorical { categories } => Some(categories.len() + 1),
        }
    }
}

/// Column kinds plus the statistics needed to encode rows, fitted on a set
/// of training rows only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<ColumnSchema>,
}

impl FeatureSchema {
    /// Fits on `rows` of `data`. A numeric column whose train rows are all
    /// equal (it varies elsewhere) gets std 1.
    pub fn fit(data: &Dataset, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("cannot fit a schema on zero rows".into()));
        }
        let columns = data
            .names
            .iter()
            .zip(&data.columns)
            .map(|(name, col)| {
                let kind = match col {
                    RawColumn::Numeric(v) => {
                        let seen: Vec<f64> = rows.iter().filter_map(|&r| v[r]).collect();
                        let n = seen.len().max(1) as f64;
                        let mean = seen.iter().sum::<f64>() / n;
                        let var = seen.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
                        ColumnKind::Numeric { mean, std }
                    }
                    RawColumn::Categorical(v) => {
                        let cats: BTreeSet<&String> = rows.iter().filter_map(|&r| v[r].as_ref()).collect();
                        ColumnKind::Categorical {
                            categories: cats.into_iter().cloned().collect(),
                        }
                    }
                };
                ColumnSchema {
                    name: name.clone(),
                    kind,
                }
            })
            .collect();
        Ok(FeatureSchema { columns })
    }

    pub fn layout(&self) -> FieldLayout {
        FieldLayout::new(self.columns.iter().map(|c| (c.name.clone(), c.cardinality())).collect())
    }

    fn check(&self, data: &Dataset) -> Result<()> {
        let names: Vec<&String> = self.columns.iter().map(|c| &c.name).collect();
        if names.len() != data.names.len() || names.iter().zip(&data.names).any(|(a, b)| *a != b) {
            return Err(Error::Data("dataset columns do not match the schema".into()));
        }
        Ok(())
    }

    /// Encodes every row of `data`.
    pub fn encode(&self, data: &Dataset) -> Result<Batch> {
        self.check(data)?;
        let rows = data.n_rows();
        let fc = self.columns.iter().filter(|c| c.cardinality().is_some()).count();
        let fnum = self.columns.len() - fc;
        let mut cat = vec![0; rows * fc];
        let mut num = vec![0.0; rows * fnum];
        let (mut ci, mut ni) = (0, 0);
        for (schema, col) in self.columns.iter().zip(&data.columns) {
            match (&schema.kind, col) {
                (ColumnKind::Numeric { mean, std }, RawColumn::Numeric(v)) => {
                    for r in 0..rows {
                        num[r * fnum + ni] = v[r].map_or(0.0, |x| (x - mean) / std);
                    }
                    ni += 1;
                }
                (ColumnKind::Categorical { categories }, RawColumn::Categorical(v)) => {
                    let index: HashMap<&str, usize> =
                        categories.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
                    let unknown = categories.len();
                    for r in 0..rows {
                        cat[r * fc + ci] = v[r].as_deref().and_then(|s| index.get(s).copied()).unwrap_or(unknown);
                    }
                    ci += 1;
                }
                _ => return Err(Error::Data(format!("column {} changed kind", schema.name))),
            }
        }
        Ok(Batch {
            rows,
            cat,
            num,
            labels: data.labels.iter().map(|&l| l as usize).collect(),
        })
    }

    /// Category text for a code of column `column`; `None` for the
    /// missing/unknown code.
    pub fn decode(&self, column: usize, code: usize) -> Option<&str> {
        match &self.columns[column].kind {
            ColumnKind::Categorical { categories } => categories.get(code).map(String::as_str),
            ColumnKind::Numeric { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabelSpec;

    fn data() -> Dataset {
        let header = vec!["c".into(), "x".into(), "y".into()];
        let rows = [("a", "8"), ("b", "12"), ("a", "10"), ("z", "?"), ("", "100")];
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, (c, x))| vec![c.to_string(), x.to_string(), (i % 2).to_string()])
            .collect();
        Dataset::from_records(header, records, &LabelSpec::new("y", "1")).unwrap()
    }

    #[test]
    fn statistics_come_from_train_rows_only() {
        let d = data();
        let s = FeatureSchema::fit(&d, &[0, 1, 2]).unwrap();
        assert_eq!(s.columns[0].kind, ColumnKind::Categorical { categories: vec!["a".into(), "b".into()] });
        match s.columns[1].kind {
            ColumnKind::Numeric { mean, std } => {
                assert_eq!(mean, 10.0);
                assert!((std - (8.0f64 / 3.0).sqrt()).abs() < 1e-15);
            }
            _ => panic!(),
        }
        let again = FeatureSchema::fit(&d.select_rows(&[0, 1, 2]), &[0, 1, 2]).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn encodes_unknown_missing_and_z_scores() {
        let d = data();
        let s = FeatureSchema::fit(&d, &[0, 1, 2]).unwrap();
        let b = s.encode(&d).unwrap();
        assert_eq!(b.cat, vec![0, 1, 0, 2, 2]);
        let std = (8.0f64 / 3.0).sqrt();
        assert!((b.num[1] - 2.0 / std).abs() < 1e-15);
        // missing numeric -> train mean -> 0
        assert_eq!(b.num[3], 0.0);
        assert_eq!(s.decode(0, 1), Some("b"));
        assert_eq!(s.decode(0, 2), None);
        assert_eq!(s.layout().cardinalities, vec![Some(3), None]);
    }

    #[test]
    fn z_score_example() {
        let header = vec!["x".into(), "y".into()];
        let records = vec![vec!["8".into(), "0".into()], vec!["12".into(), "1".into()], vec!["14".into(), "0".into()]];
        let d = Dataset::from_records(header, records, &LabelSpec::new("y", "1")).unwrap();
        let s = FeatureSchema::fit(&d, &[0, 1]).unwrap();
        assert_eq!(s.columns[0].kind, ColumnKind::Numeric { mean: 10.0, std: 2.0 });
        assert_eq!(s.encode(&d).unwrap().num[2], 2.0);
    }
}
