//! Small synthetic binary-classification tables.

use tabular_nn::data::{Dataset, LabelSpec};
use tabular_nn::rng::SeededRng;

pub const LABEL: &str = "y";

/// Columns x0, x1, x2 (informative numeric), c0 (informative categorical),
/// noise (pure noise) and the label `y`.
pub fn records(n: usize, seed: u64) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rng = SeededRng::new(seed);
    let header = ["x0", "x1", "x2", "c0", "noise", LABEL].map(String::from).to_vec();
    let rows = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            let c = ["a", "b", "c"][rng.below(3)];
            let noise = rng.normal();
            let score = 1.5 * x[0] - x[1] + 0.5 * x[2] * x[0] + if c == "a" { 1.0 } else { -0.5 } + 0.5 * rng.normal();
            vec![
                format!("{:.6}", x[0]),
                format!("{:.6}", x[1]),
                format!("{:.6}", x[2]),
                c.to_string(),
                format!("{noise:.6}"),
                ((score > 0.0) as u8).to_string(),
            ]
        })
        .collect();
    (header, rows)
}

pub fn dataset(n: usize, seed: u64) -> Dataset {
    let (header, rows) = records(n, seed);
    Dataset::from_records(header, rows, &LabelSpec::new(LABEL, "1")).unwrap()
}

/// The same table as CSV text.
pub fn csv(n: usize, seed: u64) -> String {
    let (header, rows) = records(n, seed);
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}
