//! Ghost batch norm in training and eval mode, and the running statistics
//! it accumulates.
//!
//! cargo run --example ghost_batch_norm

use tabular_nn::layers::GhostBatchNorm;
use tabular_nn::rng::SeededRng;
use tabular_nn::tensor::Graph;

fn main() -> tabular_nn::Result<()> {
    let (rows, cols, ghost) = (12, 2, 4);
    let mut rng = SeededRng::new(3);
    let x: Vec<f64> = (0..rows * cols).map(|i| 5.0 * (i % cols) as f64 + rng.normal()).collect();

    let mut bn = GhostBatchNorm::new("bn", cols, ghost);
    for step in 0..3 {
        let g = Graph::new();
        let y = bn.forward(&g, g.constant(&[rows, cols], x.clone())?, true)?.value();
        let first: Vec<String> = y.chunks(cols).take(4).map(|r| format!("{:+.3?}", r)).collect();
        println!("train step {step}: first ghost batch {}", first.join(" "));
        println!("    running mean {:.4?}  running var {:.4?}", bn.running_mean.value, bn.running_var.value);
    }
    let g = Graph::no_grad();
    let y = bn.forward(&g, g.constant(&[rows, cols], x)?, false)?.value();
    println!("eval, first row {:+.3?}", &y[..cols]);
    Ok(())
}
