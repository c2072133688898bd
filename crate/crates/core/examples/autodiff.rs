//! Builds a small graph by hand, runs the reverse sweep and checks one
//! gradient against a central difference.
//!
//! cargo run --example autodiff

use tabular_nn::tensor::Graph;

fn loss(w: &[f64]) -> tabular_nn::Result<f64> {
    let g = Graph::new();
    let x = g.constant(&[2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.0, -0.5])?;
    let w = g.leaf(&[3, 2], w.to_vec())?;
    Ok(x.matmul(&w)?.sigmoid().cross_entropy(&[1, 0])?.item())
}

fn main() -> tabular_nn::Result<()> {
    let w0 = vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6];
    let g = Graph::new();
    let x = g.constant(&[2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.0, -0.5])?;
    let w = g.leaf(&[3, 2], w0.clone())?;
    let logits = x.matmul(&w)?.sigmoid();
    let ce = logits.cross_entropy(&[1, 0])?;
    g.backward(ce)?;
    println!("graph: {} nodes, loss {:.6}", g.len(), ce.item());
    println!("logits {:?}", logits.value());

    let analytic = w.grad().expect("leaf requires grad");
    let h = 1e-6;
    for (i, a) in analytic.iter().enumerate() {
        let (mut plus, mut minus) = (w0.clone(), w0.clone());
        plus[i] += h;
        minus[i] -= h;
        let numeric = (loss(&plus)? - loss(&minus)?) / (2.0 * h);
        println!("dL/dw[{i}]  analytic {a:+.8}  numeric {numeric:+.8}");
    }
    Ok(())
}
