//! Where a leaky gate column passes values and where it leaks, and how
//! that matches the forward pass.
//!
//! cargo run --example gate_partition -- [w] [b]

use tabular_nn::layers::{gate_partition, LeakyGate};
use tabular_nn::tensor::Graph;

fn main() -> tabular_nn::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let pairs = if args.len() >= 2 {
        vec![(args[0], args[1])]
    } else {
        vec![(1.0, 0.0), (2.0, -1.0), (-0.5, 1.0), (0.0, 0.3), (0.0, -0.3), (0.1, 0.2)]
    };
    for (w, b) in pairs {
        let p = gate_partition(w, b);
        println!("w = {w:+}, b = {b:+}: pass {}, leak {}", p.pass, p.leak);

        let mut gate = LeakyGate::new("gate", 1, 0.01);
        gate.w.value = vec![w];
        gate.b.value = vec![b];
        let xs = [-3.0, -1.0, -0.5, 0.0, 0.5, 1.0, 3.0];
        let g = Graph::no_grad();
        let out = gate.forward(&g, g.constant(&[xs.len(), 1], xs.to_vec())?)?.value();
        for (x, y) in xs.iter().zip(&out) {
            let side = if p.pass.contains(*x) { "pass" } else { "leak" };
            println!("    x {x:+.1} -> {y:+.4} ({side})");
        }
    }
    Ok(())
}
