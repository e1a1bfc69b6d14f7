//! The layered NTK random-feature pipeline versus the naive tensor map.
//!
//! Generates sketched features at a few budgets, measures entrywise error
//! against the exact NTK, and contrasts with the tensor-product construction
//! whose width explodes with depth.
//!
//!   cargo run --release --example ntk_features

use ntk_sketch::diagnostics::entrywise_mse;
use ntk_sketch::kernels::{ntk_matrix, KernelKind, KernelMatrix};
use ntk_sketch::ntk_features::{naive_feature_dim, ntk_naive_features, ntk_random_features, NtkFeatureConfig};
use ntk_sketch::synthetic::unit_sphere_data;

fn main() -> ntk_sketch::Result<()> {
    let depth = 2;
    let x = unit_sphere_data(150, 10, 3)?;
    let exact = ntk_matrix(&x, depth)?;

    println!("sketched pipeline at depth {depth} (output width = m1 + m_cs):");
    for budget in [64usize, 256, 1024, 4096] {
        let mut mses = Vec::new();
        for seed in 0..5 {
            let cfg = NtkFeatureConfig::from_total_budget(depth, budget, seed)?;
            let phi = ntk_random_features(&x, &cfg)?;
            let gram = KernelMatrix::from_array(phi.gram(), KernelKind::Approx)?;
            mses.push(entrywise_mse(&gram, &exact)?);
        }
        mses.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!("  budget {budget:5}: median entrywise MSE {:.4e}", mses[2]);
    }

    println!("\nnaive tensor construction at the same depth:");
    for (m0, m1) in [(2usize, 4usize), (4, 8), (8, 16)] {
        let dim = naive_feature_dim(depth, m0, m1, x.cols());
        let phi = ntk_naive_features(&x, depth, m0, m1, 1)?;
        let gram = KernelMatrix::from_array(phi.gram(), KernelKind::Approx)?;
        let mse = entrywise_mse(&gram, &exact)?;
        println!("  m0 = {m0}, m1 = {m1} -> width {dim:6}: entrywise MSE {mse:.4e}");
    }
    println!("\n(naive width grows like m0^L d; the sketched width is depth-independent)");

    let cfg = NtkFeatureConfig::from_total_budget(4, 512, 0)?;
    let phi = ntk_random_features(&x, &cfg)?;
    println!(
        "sketched features at depth 4 still have width {} = m1 + m_cs",
        phi.cols()
    );
    Ok(())
}
