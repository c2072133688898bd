pub use crate::data::FieldLayout;

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{Graph, Module, Parameter, Var};

/// Embeddings for every field of a layout, all of size `dim`.
///
/// Categorical field f has table E_f with one row per category (the
/// transpose of the m x c_f matrix); all tables are stacked into a single
/// parameter. Numeric field f is scaled into its vector V_f; the V_f are the
/// rows of one `[numeric fields, dim]` parameter. With `raw_numeric` the
/// numeric fields skip embedding and enter as single columns.
#[derive(Clone, Debug)]
pub struct FieldEmbeddings {
    layout: FieldLayout,
    dim: usize,
    raw_numeric: bool,
    offsets: Vec<usize>,
    pub categorical: Option<Parameter>,
    pub numeric: Option<Parameter>,
}

impl FieldEmbeddings {
    pub fn new(name: &str, layout: &FieldLayout, dim: usize, raw_numeric: bool, rng: &mut SeededRng) -> Self {
        let cards: Vec<usize> = layout.cardinalities.iter().flatten().copied().collect();
        let mut offsets = Vec::with_capacity(cards.len());
        let mut values = Vec::new();
        let mut total = 0;
        for &c in &cards {
            offsets.push(total);
            total += c;
            values.extend(super::uniform_init(rng, c * dim, c));
        }
        let categorical = (!cards.is_empty())
            .then(|| Parameter::new(format!("{name}.categorical"), &[total, dim], values));
        let n_num = layout.numeric_fields().len();
        let numeric = (n_num > 0 && !raw_numeric)
            .then(|| Parameter::new(format!("{name}.numeric"), &[n_num, dim], super::uniform_init(rng, n_num * dim, 1)));
        FieldEmbeddings {
            layout: layout.clone(),
            dim,
            raw_numeric,
            offsets,
            categorical,
            numeric,
        }
    }

    pub fn layout(&self) -> &FieldLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn raw_numeric(&self) -> bool {
        self.raw_numeric
    }

    /// Column span of every field in the flat output, schema order.
    pub fn column_spans(&self) -> Vec<(usize, usize)> {
        let mut start = 0;
        self.layout
            .cardinalities
            .iter()
            .map(|c| {
                let w = if c.is_none() && self.raw_numeric { 1 } else { self.dim };
                start += w;
                (start - w, start)
            })
            .collect()
    }

    pub fn flat_width(&self) -> usize {
        self.column_spans().last().map_or(0, |s| s.1)
    }

    fn check(&self, batch: &Batch) -> Result<()> {
        let cat_fields = self.layout.categorical_fields();
        let nf = self.layout.numeric_fields().len();
        if batch.cat.len() != batch.rows * cat_fields.len() || batch.num.len() != batch.rows * nf {
            return Err(Error::Data(format!(
                "batch of {} rows has {} codes and {} numeric values; layout expects {} and {} per row",
                batch.rows,
                batch.cat.len(),
                batch.num.len(),
                cat_fields.len(),
                nf
            )));
        }
        for (i, &code) in batch.cat.iter().enumerate() {
            let field = cat_fields[i % cat_fields.len()];
            let cardinality = self.layout.cardinalities[field].unwrap();
            if code >= cardinality {
                return Err(Error::CodeOutOfRange {
                    field: self.layout.names[field].clone(),
                    code,
                    cardinality,
                });
            }
        }
        Ok(())
    }

    fn categorical_part<'g>(&self, g: &'g Graph, batch: &Batch) -> Result<Option<Var<'g>>> {
        let Some(table) = &self.categorical else { return Ok(None) };
        let fc = self.offsets.len();
        let codes: Vec<usize> = batch.cat.iter().enumerate().map(|(i, c)| c + self.offsets[i % fc]).collect();
        Ok(Some(g.param(table).lookup(&codes)?.reshape(&[batch.rows, fc, self.dim])?))
    }

    /// Reorders `parts` (numeric fields first, then categorical) back to
    /// schema order along `axis`.
    fn to_schema_order<'g>(&self, x: Var<'g>, axis: usize, spans: &[(usize, usize)]) -> Result<Var<'g>> {
        let mut order = self.layout.numeric_fields();
        order.extend(self.layout.categorical_fields());
        if order.iter().enumerate().all(|(i, &f)| i == f) {
            return Ok(x);
        }
        // position of each schema field in the concatenated order
        let mut pos = vec![0; order.len()];
        for (i, &f) in order.iter().enumerate() {
            pos[f] = i;
        }
        let mut starts = Vec::with_capacity(order.len());
        let mut s = 0;
        for &f in &order {
            starts.push(s);
            s += spans[f].1 - spans[f].0;
        }
        let mut idx = Vec::new();
        for f in 0..order.len() {
            let w = spans[f].1 - spans[f].0;
            idx.extend(starts[pos[f]]..starts[pos[f]] + w);
        }
        x.index_select(axis, &idx)
    }

    /// `[rows, fields, dim]`, row r of each sample being field r's embedding.
    pub fn fields<'g>(&self, g: &'g Graph, batch: &Batch) -> Result<Var<'g>> {
        if self.raw_numeric && self.numeric.is_none() && !self.layout.numeric_fields().is_empty() {
            return Err(Error::Config("numeric fields are not embedded in raw-numeric mode".into()));
        }
        self.check(batch)?;
        let mut parts = Vec::new();
        if let Some(v) = &self.numeric {
            let nf = v.shape()[0];
            let x = g.constant(&[batch.rows, nf, 1], batch.num.clone())?;
            parts.push(x.mul(&g.param(v))?);
        }
        if let Some(c) = self.categorical_part(g, batch)? {
            parts.push(c);
        }
        let stacked = if parts.len() == 1 { parts[0] } else { g.concat(&parts, 1)? };
        let unit: Vec<(usize, usize)> = (0..self.layout.len()).map(|i| (i, i + 1)).collect();
        self.to_schema_order(stacked, 1, &unit)
    }

    /// `[rows, flat_width]`: every field's columns side by side in schema order.
    pub fn flat<'g>(&self, g: &'g Graph, batch: &Batch) -> Result<Var<'g>> {
        if !self.raw_numeric || self.layout.numeric_fields().is_empty() {
            let e = self.fields(g, batch)?;
            return e.reshape(&[batch.rows, self.layout.len() * self.dim]);
        }
        self.check(batch)?;
        let nf = self.layout.numeric_fields().len();
        let mut parts = vec![g.constant(&[batch.rows, nf], batch.num.clone())?];
        if let Some(c) = self.categorical_part(g, batch)? {
            parts.push(c.reshape(&[batch.rows, self.offsets.len() * self.dim])?);
        }
        let x = if parts.len() == 1 { parts[0] } else { g.concat(&parts, 1)? };
        self.to_schema_order(x, 1, &self.column_spans())
    }

    /// The `[fields, dim]` embedding of a single row.
    pub fn embed_row<'g>(&self, g: &'g Graph, codes: &[usize], values: &[f64]) -> Result<Var<'g>> {
        let batch = Batch {
            rows: 1,
            cat: codes.to_vec(),
            num: values.to_vec(),
            labels: vec![],
        };
        self.fields(g, &batch)?.reshape(&[self.layout.len(), self.dim])
    }
}

impl Module for FieldEmbeddings {
    fn params(&self) -> Vec<&Parameter> {
        self.numeric.iter().chain(self.categorical.iter()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.numeric.iter_mut().chain(self.categorical.iter_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixed() -> FieldLayout {
        FieldLayout::new(vec![("a".into(), Some(3)), ("x".into(), None), ("b".into(), Some(2))])
    }

    #[test]
    fn numeric_scaling_examples() {
        let layout = FieldLayout::numeric(1);
        let mut emb = FieldEmbeddings::new("e", &layout, 3, false, &mut SeededRng::new(0));
        emb.numeric.as_mut().unwrap().value = vec![1.0, -1.0, 0.5];
        let g = Graph::no_grad();
        assert_eq!(emb.embed_row(&g, &[], &[2.0]).unwrap().value(), vec![2.0, -2.0, 1.0]);
        assert_eq!(emb.embed_row(&g, &[], &[0.0]).unwrap().value(), vec![0.0; 3]);
    }

    #[test]
    fn categorical_lookup_and_schema_order() {
        let emb = FieldEmbeddings::new("e", &mixed(), 2, false, &mut SeededRng::new(1));
        let table = emb.categorical.as_ref().unwrap().value.clone();
        let v = emb.numeric.as_ref().unwrap().value.clone();
        let g = Graph::no_grad();
        let out = emb.embed_row(&g, &[1, 0], &[3.0]).unwrap().value();
        // field a, code 1 -> row 1 of a's table
        assert_eq!(&out[0..2], &table[2..4]);
        assert_eq!(&out[2..4], &[3.0 * v[0], 3.0 * v[1]]);
        // field b, code 0 -> first row after a's 3 rows
        assert_eq!(&out[4..6], &table[6..8]);
    }

    #[test]
    fn out_of_range_code_names_field() {
        let emb = FieldEmbeddings::new("e", &mixed(), 2, false, &mut SeededRng::new(1));
        let g = Graph::no_grad();
        match emb.embed_row(&g, &[0, 2], &[0.0]) {
            Err(Error::CodeOutOfRange { field, code, cardinality }) => {
                assert_eq!((field.as_str(), code, cardinality), ("b", 2, 2))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn raw_numeric_flat_layout() {
        let emb = FieldEmbeddings::new("e", &mixed(), 2, true, &mut SeededRng::new(1));
        assert!(emb.numeric.is_none());
        assert_eq!(emb.column_spans(), vec![(0, 2), (2, 3), (3, 5)]);
        let table = emb.categorical.as_ref().unwrap().value.clone();
        let g = Graph::no_grad();
        let batch = Batch {
            rows: 1,
            cat: vec![2, 1],
            num: vec![7.5],
            labels: vec![],
        };
        let out = emb.flat(&g, &batch).unwrap().value();
        assert_eq!(out, vec![table[4], table[5], 7.5, table[8], table[9]]);
    }

    #[test]
    fn categorical_gradient_only_touches_looked_up_rows() {
        let emb = FieldEmbeddings::new("e", &mixed(), 2, false, &mut SeededRng::new(1));
        let g = Graph::new();
        let e = emb.embed_row(&g, &[1, 0], &[3.0]).unwrap();
        g.backward(e.sum()).unwrap();
        let grad = g.param_grad("e.categorical").unwrap();
        let touched: Vec<usize> = (0..5).filter(|r| grad[r * 2] != 0.0 || grad[r * 2 + 1] != 0.0).collect();
        assert_eq!(touched, vec![1, 3]);
    }
}
