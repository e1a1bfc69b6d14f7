//! CountSketch and TensorSketch primitives.
//!
//! Shows the two computation routes for the sketched tensor product (FFT
//! convolution vs the materialized combined-hash reference) agreeing to
//! rounding error, and the unbiasedness of sketched inner products.
//!
//!   cargo run --release --example tensor_sketch

use ntk_sketch::seeding::derive_seed;
use ntk_sketch::sketch::{count_sketch, tensor_sketch, tensor_sketch_direct, CountSketchSpec, SketchPair};

fn main() -> ntk_sketch::Result<()> {
    let x = [0.9, -0.3, 0.4, 0.1, -1.2, 0.7];
    let y = [0.2, 0.8, -0.5, 0.3, 0.6];

    // Non-power-of-two output dimension exercises the mixed-radix FFT.
    let pair = SketchPair::new(x.len(), y.len(), 12, 7)?;
    let fast = tensor_sketch(&pair, &x, &y)?;
    let direct = tensor_sketch_direct(&pair, &x, &y)?;
    let max_dev = fast
        .iter()
        .zip(direct.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("tensor sketch, m = 12 (not a power of two):");
    println!("  FFT path vs direct combined-hash path: max |diff| = {max_dev:.2e}");

    // E<C(x), C(y)> = <x, y> over independent table draws.
    let exact: f64 = x.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
    let trials = 20_000;
    let mut mean = 0.0;
    for t in 0..trials {
        let spec = CountSketchSpec::new(5, 3, derive_seed(99, &[t]))?;
        let cx = count_sketch(&spec, &x[..5])?;
        let cy = count_sketch(&spec, &y)?;
        mean += cx.iter().zip(cy.iter()).map(|(a, b)| a * b).sum::<f64>();
    }
    mean /= trials as f64;
    println!("\ncount sketch inner products over {trials} table draws:");
    println!("  estimate {mean:.4} vs exact <x5, y> = {exact:.4}");

    // Variance decays like 1/m.
    println!("\ntensor-sketch estimator MSE by output dimension:");
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let target = dot(&x, &x) * dot(&y, &y);
    for m in [8usize, 16, 32, 64] {
        let mut mse = 0.0;
        for t in 0..2000u64 {
            let pair = SketchPair::new(x.len(), y.len(), m, derive_seed(m as u64, &[t]))?;
            let g = tensor_sketch(&pair, &x, &y)?;
            let est = dot(&g, &g);
            mse += (est - target) * (est - target);
        }
        println!("  m = {m:3}: MSE {:.4}", mse / 2000.0);
    }
    Ok(())
}
