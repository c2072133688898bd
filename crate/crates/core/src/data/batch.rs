use serde::{Deserialize, Serialize};

/// Field order and kinds as seen by a model. `cardinality` is `None` for
/// numeric fields.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldLayout {
    pub names: Vec<String>,
    pub cardinalities: Vec<Option<usize>>,
}

impl FieldLayout {
    pub fn new(fields: Vec<(String, Option<usize>)>) -> Self {
        let (names, cardinalities) = fields.into_iter().unzip();
        FieldLayout { names, cardinalities }
    }

    pub fn numeric(n: usize) -> Self {
        Self::new((0..n).map(|i| (format!("x{i}"), None)).collect())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Schema positions of numeric fields, in order.
    pub fn numeric_fields(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.cardinalities[i].is_none()).collect()
    }

    /// Schema positions of categorical fields, in order.
    pub fn categorical_fields(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.cardinalities[i].is_some()).collect()
    }
}

/// Encoded rows ready for a forward pass. `cat` holds one code per
/// categorical field per row, `num` one standardized value per numeric
/// field per row, both row-major in [`FieldLayout`] order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub rows: usize,
    pub cat: Vec<usize>,
    pub num: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Batch {
    /// Copies out the given rows.
    pub fn gather(&self, rows: &[usize]) -> Batch {
        let fc = if self.rows == 0 { 0 } else { self.cat.len() / self.rows };
        let fnum = if self.rows == 0 { 0 } else { self.num.len() / self.rows };
        let mut out = Batch {
            rows: rows.len(),
            cat: Vec::with_capacity(rows.len() * fc),
            num: Vec::with_capacity(rows.len() * fnum),
            labels: Vec::with_capacity(rows.len()),
        };
        for &r in rows {
            out.cat.extend_from_slice(&self.cat[r * fc..(r + 1) * fc]);
            out.num.extend_from_slice(&self.num[r * fnum..(r + 1) * fnum]);
            if !self.labels.is_empty() {
                out.labels.push(self.labels[r]);
            }
        }
        out
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Batch) -> Batch {
        let mut out = self.clone();
        out.rows += other.rows;
        out.cat.extend_from_slice(&other.cat);
        out.num.extend_from_slice(&other.num);
        out.labels.extend_from_slice(&other.labels);
        out
    }
}
