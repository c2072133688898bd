//! Independent reference computations shared by the property suites and
//! the acceptance run.

use tabular_nn::blocks::{inner_product_features, AttentionBlock, AttentionSettings};
use tabular_nn::hpo::SearchSpace;
use tabular_nn::layers::{gate_partition, Ctx, GhostBatchNorm, LeakyGate};
use tabular_nn::metrics::auroc;
use tabular_nn::models::{param_count, Family};
use tabular_nn::rng::SeededRng;
use tabular_nn::tensor::Graph;

/// Plain batch norm over all rows: biased variance, eps 1e-5.
pub fn batch_norm_oracle(x: &[f64], rows: usize, cols: usize, scale: &[f64], shift: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for j in 0..cols {
        let col: Vec<f64> = (0..rows).map(|r| x[r * cols + j]).collect();
        let mean = col.iter().sum::<f64>() / rows as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / rows as f64;
        for r in 0..rows {
            out[r * cols + j] = (col[r] - mean) / (var + 1e-5).sqrt() * scale[j] + shift[j];
        }
    }
    out
}

/// Runs `cases` random ghost==batch comparisons; returns the worst abs error.
pub fn gbn_degeneracy_worst(cases: usize, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let rows = 2 + rng.below(63);
        let cols = 1 + rng.below(8);
        let x: Vec<f64> = (0..rows * cols).map(|_| 3.0 * rng.normal() + rng.uniform_in(-5.0, 5.0)).collect();
        let mut gbn = GhostBatchNorm::new("bn", cols, rows);
        gbn.scale.value = (0..cols).map(|_| rng.uniform_in(0.5, 2.0)).collect();
        gbn.shift.value = (0..cols).map(|_| rng.normal()).collect();
        let expected = batch_norm_oracle(&x, rows, cols, &gbn.scale.value, &gbn.shift.value);
        let g = Graph::new();
        let xv = g.constant(&[rows, cols], x).unwrap();
        let got = gbn.forward(&g, xv, true).unwrap().value();
        for (a, b) in got.iter().zip(&expected) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

pub fn gate_out(w: f64, b: f64, x: f64) -> (f64, f64) {
    let mut gate = LeakyGate::new("g", 1, 0.01);
    gate.w.value = vec![w];
    gate.b.value = vec![b];
    let g = Graph::no_grad();
    let o = gate.forward_full(&g, g.constant(&[1, 1], vec![x]).unwrap()).unwrap();
    (o.pre.item(), o.out.item())
}

/// Mismatches between the partition and the forward sign over `n` random
/// triples. Half are continuous, half sit on a dyadic grid that hits the
/// thresholds and `w = 0` exactly.
pub fn gate_partition_mismatches(n: usize, seed: u64) -> usize {
    let mut rng = SeededRng::new(seed);
    let mut bad = 0;
    for i in 0..n {
        let (w, b, x) = if i % 2 == 0 {
            (rng.normal(), rng.normal(), 3.0 * rng.normal())
        } else {
            let grid = |rng: &mut SeededRng| (rng.below(33) as f64 - 16.0) / 4.0;
            let (w, b) = (grid(&mut rng), grid(&mut rng));
            let x = if w != 0.0 && rng.uniform() < 0.3 { -b / w } else { grid(&mut rng) };
            (w, b, x)
        };
        let (pre, out) = gate_out(w, b, x);
        let p = gate_partition(w, b);
        let sign_ok = pre.signum() == out.signum() || (pre == 0.0 && out == 0.0);
        if !sign_ok || p.pass.contains(x) != (out > 0.0) || p.leak.contains(x) != (out <= 0.0) {
            bad += 1;
        }
    }
    bad
}

/// Mean over positive-negative pairs of [s+ > s-] + 1/2 [s+ = s-].
pub fn pair_counting(scores: &[f64], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, &p) in scores.iter().enumerate().filter(|&(i, _)| labels[i] == 1) {
        let _ = i;
        for (j, &n) in scores.iter().enumerate() {
            if labels[j] == 0 {
                pairs += 1;
                total += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
            }
        }
    }
    total / pairs as f64
}

/// Random instances with many ties; returns the worst absolute difference.
pub fn auroc_oracle_worst(instances: usize, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < instances {
        let n = 2 + rng.below(199);
        let levels = 1 + rng.below(20);
        let scores: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64 / levels as f64).collect();
        let p = rng.uniform();
        let labels: Vec<usize> = (0..n).map(|_| (rng.uniform() < p) as usize).collect();
        if labels.iter().all(|&l| l == labels[0]) {
            continue;
        }
        worst = worst.max((auroc(&scores, &labels).unwrap() - pair_counting(&scores, &labels)).abs());
        done += 1;
    }
    worst
}

/// Closed-form ordering TT > TF > FF over every grid point of every
/// family; returns the number of configurations checked.
pub fn ablation_ordering_checked() -> usize {
    let shapes = [(41, 0, 0), (57, 0, 0), (14, 4, 9), (1, 1, 2)];
    let mut checked = 0;
    for family in Family::ALL {
        for raw in [false, true] {
            if raw && family != Family::MlpPlus {
                continue;
            }
            let space = SearchSpace { family, raw_numeric_input: raw };
            for point in space.points() {
                for &(n, c, k) in &shapes {
                    let count = |s, g| param_count(&point.model.clone().with_ablation(s, g), n, c, k);
                    let (tt, tf, ff) = (count(true, true), count(true, false), count(false, false));
                    assert!(tt > tf && tf > ff, "{family} {:?}: {tt} {tf} {ff}", point.model);
                    checked += 1;
                }
            }
        }
    }
    checked
}


/// Largest `|width - F(F-1)/2|` of the inner-product features for F in 2..=max_fields.
pub fn inner_width_errors(max_fields: usize) -> usize {
    let mut rng = SeededRng::new(1);
    let mut bad = 0;
    for f in 2..=max_fields {
        let g = Graph::no_grad();
        let e: Vec<f64> = (0..3 * f * 4).map(|_| rng.normal()).collect();
        let e = g.constant(&[3, f, 4], e).unwrap();
        if inner_product_features(e).unwrap().shape() != vec![3, f * (f - 1) / 2] {
            bad += 1;
        }
    }
    bad
}

/// Worst `|row sum - 1|` over attention weights of random blocks.
pub fn attention_row_sum_worst(cases: usize, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let f = 2 + rng.below(10);
        let settings = AttentionSettings {
            n_layers: 3 + rng.below(2),
            n_heads: 2 + rng.below(2),
            dropout: [0.0, 0.1][rng.below(2)],
            leaky_activation: rng.uniform() < 0.5,
            residual: rng.uniform() < 0.5,
        };
        let block = AttentionBlock::new("att", 8, &settings, 0.01, &mut rng);
        let g = Graph::no_grad();
        let e: Vec<f64> = (0..4 * f * 8).map(|_| 2.0 * rng.normal()).collect();
        let e = g.constant(&[4, f, 8], e).unwrap();
        let (_, weights) = block.forward(&g, e, &mut Ctx::train(case as u64)).unwrap();
        for w in weights.iter().flatten() {
            for row in w.value().chunks(f) {
                worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    worst
}
