use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::rng::SeededRng;
use crate::tensor::{Graph, Module, Parameter, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProductType {
    Inner,
    Outer,
    Both,
}

impl ProductType {
    pub const ALL: [ProductType; 3] = [ProductType::Inner, ProductType::Outer, ProductType::Both];

    /// Raw feature width before the map to the output size.
    pub fn raw_width(self, fields: usize, dim: usize) -> usize {
        let inner = fields * fields.saturating_sub(1) / 2;
        match self {
            ProductType::Inner => inner,
            ProductType::Outer => dim * dim,
            ProductType::Both => inner + dim * dim,
        }
    }
}

/// `[batch, F, m]` -> `[batch, F(F-1)/2]`: `<e_i, e_j>` for `i < j` in
/// lexicographic order.
pub fn inner_product_features<'g>(e: Var<'g>) -> Result<Var<'g>> {
    let shape = e.shape();
    if shape.len() != 3 {
        return Err(Error::op("inner_product", format!("expects [batch, fields, dim], got {shape:?}")));
    }
    let (b, f) = (shape[0], shape[1]);
    if f < 2 {
        return Err(Error::op("inner_product", format!("needs at least 2 fields, got {f}")));
    }
    let gram = e.bmm(&e.transpose()?)?.reshape(&[b, f * f])?;
    let pairs: Vec<usize> = (0..f).flat_map(|i| (i + 1..f).map(move |j| i * f + j)).collect();
    gram.index_select(1, &pairs)
}

/// `[batch, F, m]` -> `[batch, m*m]`: `flatten(s s^T)` with `s` the sum of
/// the field embeddings.
pub fn outer_product_features<'g>(e: Var<'g>) -> Result<Var<'g>> {
    let shape = e.shape();
    if shape.len() != 3 || shape[1] == 0 {
        return Err(Error::op("outer_product", format!("expects [batch, fields, dim], got {shape:?}")));
    }
    let (b, m) = (shape[0], shape[2]);
    let s = e.sum_axis(1)?;
    let col = s.reshape(&[b, m, 1])?;
    let row = s.reshape(&[b, 1, m])?;
    col.bmm(&row)?.reshape(&[b, m * m])
}

/// Product features followed by a linear map to `output` values.
#[derive(Clone, Debug)]
pub struct ProductBlock {
    pub kind: ProductType,
    pub linear: Linear,
}

impl ProductBlock {
    pub fn new(name: &str, kind: ProductType, fields: usize, dim: usize, output: usize, rng: &mut SeededRng) -> Self {
        ProductBlock {
            kind,
            linear: Linear::new(&format!("{name}.linear"), kind.raw_width(fields, dim), output, true, rng),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph, e: Var<'g>) -> Result<Var<'g>> {
        let raw = match self.kind {
            ProductType::Inner => inner_product_features(e)?,
            ProductType::Outer => outer_product_features(e)?,
            ProductType::Both => g.concat(&[inner_product_features(e)?, outer_product_features(e)?], 1)?,
        };
        self.linear.forward(g, raw)
    }
}

impl Module for ProductBlock {
    fn params(&self) -> Vec<&Parameter> {
        self.linear.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.linear.params_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(g: &Graph, rows: usize, f: usize, m: usize, vals: Vec<f64>) -> Var<'_> {
        g.constant(&[rows, f, m], vals).unwrap()
    }

    #[test]
    fn inner_examples() {
        let g = Graph::no_grad();
        let e = fields(&g, 1, 2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(inner_product_features(e).unwrap().value(), vec![0.0]);
        let e = fields(&g, 1, 2, 2, vec![1.0, 2.0, 1.0, 2.0]);
        assert_eq!(inner_product_features(e).unwrap().value(), vec![5.0]);
        let e = fields(&g, 3, 4, 2, vec![0.5; 24]);
        assert_eq!(inner_product_features(e).unwrap().shape(), vec![3, 6]);
        let e = fields(&g, 1, 1, 2, vec![1.0, 2.0]);
        assert!(inner_product_features(e).is_err());
    }

    #[test]
    fn inner_pairs_in_lexicographic_order() {
        let g = Graph::no_grad();
        let e = fields(&g, 1, 3, 1, vec![2.0, 3.0, 5.0]);
        assert_eq!(inner_product_features(e).unwrap().value(), vec![6.0, 10.0, 15.0]);
    }

    #[test]
    fn outer_examples() {
        let g = Graph::no_grad();
        let e = fields(&g, 1, 1, 2, vec![1.0, 2.0]);
        assert_eq!(outer_product_features(e).unwrap().value(), vec![1.0, 2.0, 2.0, 4.0]);
        let e = fields(&g, 1, 2, 2, vec![1.0, -2.0, -1.0, 2.0]);
        assert_eq!(outer_product_features(e).unwrap().value(), vec![0.0; 4]);
    }

    #[test]
    fn outer_matches_pairwise_summation() {
        let mut rng = SeededRng::new(4);
        let (b, f, m) = (3, 4, 3);
        let vals: Vec<f64> = (0..b * f * m).map(|_| rng.normal()).collect();
        let g = Graph::no_grad();
        let got = outer_product_features(fields(&g, b, f, m, vals.clone())).unwrap().value();
        for r in 0..b {
            for p in 0..m {
                for q in 0..m {
                    let mut want = 0.0;
                    for i in 0..f {
                        for j in 0..f {
                            want += vals[(r * f + i) * m + p] * vals[(r * f + j) * m + q];
                        }
                    }
                    assert!((got[r * m * m + p * m + q] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn both_concatenates_raw_features() {
        let mut rng = SeededRng::new(0);
        let block = ProductBlock::new("p", ProductType::Both, 3, 2, 20, &mut rng);
        assert_eq!(block.linear.input(), 3 + 4);
        let g = Graph::no_grad();
        let e = fields(&g, 2, 3, 2, vec![0.1; 12]);
        assert_eq!(block.forward(&g, e).unwrap().shape(), vec![2, 20]);
    }
}
