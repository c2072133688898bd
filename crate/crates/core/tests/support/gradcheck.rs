//! Central finite-difference oracle for graph ops.
//!
//! Each case builds a scalar loss from freshly created leaves. The analytic
//! gradient comes from `Graph::backward`; the numeric one re-evaluates the
//! forward pass with each input element nudged by ±h.

use tabular_nn::rng::SeededRng;
use tabular_nn::tensor::{Graph, Var};
use tabular_nn::Result;

pub const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const EXEMPT: f64 = 1e-8;

pub type Build = dyn for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>;

pub struct Case {
    pub name: String,
    pub inputs: Vec<(Vec<usize>, Vec<f64>)>,
    pub build: Box<Build>,
}

fn loss_of(case: &Case, inputs: &[(Vec<usize>, Vec<f64>)]) -> f64 {
    let g = Graph::new();
    let leaves: Vec<Var<'_>> = inputs.iter().map(|(s, v)| g.leaf(s, v.clone()).unwrap()).collect();
    (case.build)(&g, &leaves).unwrap().item()
}

/// Max relative error between analytic and numeric gradients over all inputs.
pub fn max_rel_error(case: &Case) -> f64 {
    let g = Graph::new();
    let leaves: Vec<Var<'_>> = case.inputs.iter().map(|(s, v)| g.leaf(s, v.clone()).unwrap()).collect();
    let loss = (case.build)(&g, &leaves).unwrap();
    g.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (k, leaf) in leaves.iter().enumerate() {
        let analytic = leaf.grad().unwrap();
        for i in 0..analytic.len() {
            let mut plus = case.inputs.clone();
            plus[k].1[i] += H;
            let mut minus = case.inputs.clone();
            minus[k].1[i] -= H;
            let numeric = (loss_of(case, &plus) - loss_of(case, &minus)) / (2.0 * H);
            let a = analytic[i];
            if a.abs() < EXEMPT && numeric.abs() < EXEMPT {
                continue;
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
            worst = worst.max(rel);
        }
    }
    worst
}

fn randn(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

/// Values bounded away from zero so kinks (leaky-relu) are never straddled.
fn away_from_zero(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v = rng.uniform_in(0.05, 2.0);
            if rng.uniform() < 0.5 {
                -v
            } else {
                v
            }
        })
        .collect()
}

fn dim(rng: &mut SeededRng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

/// Reduces an arbitrary tensor to a scalar with fixed random weights so
/// every output element carries a distinct gradient.
fn weighted_sum<'g>(g: &'g Graph, out: Var<'g>, seed: u64) -> Result<Var<'g>> {
    let mut rng = SeededRng::new(seed);
    let w = randn(&mut rng, out.numel());
    let w = g.constant(&out.shape(), w)?;
    Ok(out.mul(&w)?.sum())
}

macro_rules! case {
    ($name:expr, $inputs:expr, $body:expr) => {
        Case {
            name: $name.to_string(),
            inputs: $inputs,
            build: Box::new($body),
        }
    };
}

/// `per_op` random shapes for every differentiable op kind.
pub fn all_cases(per_op: usize, seed: u64) -> Vec<Case> {
    let mut rng = SeededRng::new(seed);
    let mut cases = Vec::new();
    for t in 0..per_op {
        let s = seed.wrapping_add(t as u64 * 7919);
        let (r, c) = (dim(&mut rng, 1, 4), dim(&mut rng, 1, 5));
        let b = dim(&mut rng, 2, 5);

        cases.push(case!("add", vec![(vec![r, c], randn(&mut rng, r * c)), (vec![r, c], randn(&mut rng, r * c))],
            move |g, x| weighted_sum(g, x[0].add(&x[1])?, s)));
        cases.push(case!("add_bias", vec![(vec![r, c], randn(&mut rng, r * c)), (vec![c], randn(&mut rng, c))],
            move |g, x| weighted_sum(g, x[0].add(&x[1])?, s)));
        cases.push(case!("sub_broadcast", vec![(vec![b, r, 1], randn(&mut rng, b * r)), (vec![r, c], randn(&mut rng, r * c))],
            move |g, x| weighted_sum(g, x[0].sub(&x[1])?, s)));
        cases.push(case!("mul", vec![(vec![r, c], randn(&mut rng, r * c)), (vec![r, c], randn(&mut rng, r * c))],
            move |g, x| weighted_sum(g, x[0].mul(&x[1])?, s)));
        cases.push(case!("mul_scalar_broadcast", vec![(vec![r, c], randn(&mut rng, r * c)), (vec![], randn(&mut rng, 1))],
            move |g, x| weighted_sum(g, x[0].mul(&x[1])?, s)));
        cases.push(case!("mul_outer_broadcast", vec![(vec![b, r, 1], randn(&mut rng, b * r)), (vec![r, c], randn(&mut rng, r * c))],
            move |g, x| weighted_sum(g, x[0].mul(&x[1])?, s)));
        cases.push(case!("affine", vec![(vec![r, c], randn(&mut rng, r * c))],
            move |g, x| weighted_sum(g, x[0].affine(-1.7, 0.3), s)));
        let k = dim(&mut rng, 1, 4);
        cases.push(case!("matmul", vec![(vec![r, k], randn(&mut rng, r * k)), (vec![k, c], randn(&mut rng, k * c))],
            move |g, x| weighted_sum(g, x[0].matmul(&x[1])?, s)));
        cases.push(case!("bmm", vec![(vec![b, r, k], randn(&mut rng, b * r * k)), (vec![b, k, c], randn(&mut rng, b * k * c))],
            move |g, x| weighted_sum(g, x[0].bmm(&x[1])?, s)));
        cases.push(case!("transpose", vec![(vec![b, r, c], randn(&mut rng, b * r * c))],
            move |g, x| weighted_sum(g, x[0].transpose()?, s)));
        cases.push(case!("leaky_relu", vec![(vec![r, c], away_from_zero(&mut rng, r * c))],
            move |g, x| weighted_sum(g, x[0].leaky_relu(0.01), s)));
        cases.push(case!("sigmoid", vec![(vec![r, c], randn(&mut rng, r * c))],
            move |g, x| weighted_sum(g, x[0].sigmoid(), s)));
        cases.push(case!("softmax", vec![(vec![b, r, c], randn(&mut rng, b * r * c))],
            move |g, x| weighted_sum(g, x[0].softmax()?, s)));
        cases.push(case!("dropout", vec![(vec![r, c], randn(&mut rng, r * c))],
            move |g, x| {
                let mut mask_rng = SeededRng::new(s);
                weighted_sum(g, x[0].dropout(0.4, true, &mut mask_rng)?, s)
            }));
        cases.push(case!("sum", vec![(vec![r, c], randn(&mut rng, r * c))],
            move |_, x| Ok(x[0].mul(&x[0])?.sum())));
        cases.push(case!("mean", vec![(vec![r, c], randn(&mut rng, r * c))],
            move |_, x| Ok(x[0].mul(&x[0])?.mean())));
        let axis = rng.below(3);
        cases.push(case!("sum_axis", vec![(vec![b, r, c], randn(&mut rng, b * r * c))],
            move |g, x| weighted_sum(g, x[0].sum_axis(axis)?, s)));
        cases.push(case!("mean_axis", vec![(vec![b, r, c], randn(&mut rng, b * r * c))],
            move |g, x| weighted_sum(g, x[0].mean_axis(axis)?, s)));
        cases.push(case!("var_axis", vec![(vec![b, r, c], randn(&mut rng, b * r * c))],
            move |g, x| weighted_sum(g, x[0].var_axis(0)?, s)));
        let c2 = dim(&mut rng, 1, 3);
        cases.push(case!("concat", vec![(vec![b, r, c], randn(&mut rng, b * r * c)), (vec![b, r, c2], randn(&mut rng, b * r * c2))],
            move |g, x| weighted_sum(g, g.concat(&[x[0], x[1]], 2)?, s)));
        cases.push(case!("concat_axis1", vec![(vec![b, r, c], randn(&mut rng, b * r * c)), (vec![b, c2, c], randn(&mut rng, b * c2 * c))],
            move |g, x| weighted_sum(g, g.concat(&[x[0], x[1]], 1)?, s)));
        cases.push(case!("reshape", vec![(vec![b, r, c], randn(&mut rng, b * r * c))],
            move |g, x| weighted_sum(g, x[0].reshape(&[b * r, c])?.mul(&x[0].reshape(&[b * r, c])?)?, s)));
        let start = rng.below(c);
        let end = start + 1 + rng.below(c - start);
        cases.push(case!("slice", vec![(vec![b, r, c], randn(&mut rng, b * r * c))],
            move |g, x| weighted_sum(g, x[0].slice(2, start, end)?, s)));
        let idx: Vec<usize> = (0..dim(&mut rng, 1, 6)).map(|_| rng.below(r)).collect();
        cases.push(case!("index_select", vec![(vec![b, r, c], randn(&mut rng, b * r * c))],
            move |g, x| weighted_sum(g, x[0].index_select(1, &idx)?, s)));
        let codes: Vec<usize> = (0..b).map(|_| rng.below(r)).collect();
        cases.push(case!("lookup", vec![(vec![r, c], randn(&mut rng, r * c))],
            move |g, x| weighted_sum(g, x[0].lookup(&codes)?, s)));
        let rows = dim(&mut rng, 2, 9);
        let ghost = dim(&mut rng, 2, 4);
        cases.push(case!("ghost_norm", vec![(vec![rows, c], randn(&mut rng, rows * c))],
            move |g, x| weighted_sum(g, x[0].ghost_normalize(ghost, 1e-5)?.0, s)));
        let labels: Vec<usize> = (0..b).map(|_| rng.below(c + 1)).collect();
        cases.push(case!("cross_entropy", vec![(vec![b, c + 1], randn(&mut rng, b * (c + 1)))],
            move |_, x| x[0].cross_entropy(&labels)));
    }
    cases
}
