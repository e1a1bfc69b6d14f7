//! Leverage-weighted arc-cosine features via Gibbs sampling.
//!
//! Samples directions from the norm-weighted Gaussian with a one-sweep Gibbs
//! chain, then compares the generalized condition number of the resulting
//! kernel approximation against plain Gaussian features at equal dimension.
//!
//!   cargo run --release --example gibbs_leverage

use ntk_sketch::arccos_features::{
    features_order1, gibbs_sample_directions, weighted_features_order1, FeatureOrder,
    GaussianFeatureSpec,
};
use ntk_sketch::diagnostics::generalized_condition_number;
use ntk_sketch::kernels::{arc_cosine_1, KernelKind, KernelMatrix};
use ntk_sketch::seeding::derive_seed;
use ntk_sketch::synthetic::unit_sphere_data;

fn main() -> ntk_sketch::Result<()> {
    let n = 300;
    let d = 12;
    let x = unit_sphere_data(n, d, 5)?;
    let a1 = KernelMatrix::from_array(arc_cosine_1(&x, &x)?, KernelKind::ArcCosine1)?;
    let lambda = 1e-4 * n as f64;

    // Under the weighted density q(v) ~ |v|^2 N(0, I), E|v|^2 = d + 2.
    let dirs = gibbs_sample_directions(d, 20_000, 1, 1)?;
    let mean_sq: f64 =
        dirs.norms().iter().map(|v| v * v).sum::<f64>() / dirs.count() as f64;
    println!(
        "mean |v|^2 after one Gibbs sweep: {mean_sq:.3} (N(0,I) init gives {d}, exact q gives {})",
        d + 2
    );

    println!("\ngeneralized condition number vs plain features (median of 9 seeds):");
    println!("  {:>6} {:>12} {:>12}", "m", "plain", "weighted");
    for m in [100usize, 300, 600, 1000] {
        let mut plain = Vec::new();
        let mut weighted = Vec::new();
        for s in 0..9u64 {
            let seed = derive_seed(77, &[m as u64, s]);
            let spec = GaussianFeatureSpec::new(d, m, FeatureOrder::Relu, seed)?;
            let f = features_order1(x.values(), &spec)?;
            let gram = KernelMatrix::from_array(f.gram(), KernelKind::Approx)?;
            plain.push(generalized_condition_number(&gram, &a1, lambda)?);

            let dirs = gibbs_sample_directions(d, m, 1, seed)?;
            let f = weighted_features_order1(x.values(), &dirs)?;
            let gram = KernelMatrix::from_array(f.gram(), KernelKind::Approx)?;
            weighted.push(generalized_condition_number(&gram, &a1, lambda)?);
        }
        plain.sort_by(|a, b| a.partial_cmp(b).unwrap());
        weighted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!("  {m:>6} {:>12.1} {:>12.1}", plain[4], weighted[4]);
    }
    println!("\n(smaller is better; 1 would be a perfect spectral approximation)");
    Ok(())
}
