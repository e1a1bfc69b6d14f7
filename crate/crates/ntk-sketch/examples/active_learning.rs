//! Greedy design selection on the NTK, with the low-rank speedup.
//!
//! Selects a labeling budget by greedily minimizing the design criterion and
//! compares against random designs; then shows the low-rank evaluator
//! matching the dense one at a fraction of the cost.
//!
//!   cargo run --release --example active_learning

use std::time::Instant;

use ntk_sketch::active_learning::{
    criterion_lowrank, criterion_naive, greedy_select, GreedySource, LowRankState,
};
use ntk_sketch::kernels::ntk_matrix;
use ntk_sketch::ntk_features::{ntk_random_features, NtkFeatureConfig};
use ntk_sketch::seeding::{derive_seed, rng_from_seed};
use ntk_sketch::synthetic::unit_sphere_data;
use rand::Rng;

fn main() -> ntk_sketch::Result<()> {
    let n = 400;
    let budget = 15;
    let pool = unit_sphere_data(n, 10, 21)?;
    let kernel = ntk_matrix(&pool, 1)?;
    let lambda = 1e-4 * n as f64;

    let (design, trace) = greedy_select(&GreedySource::Exact(&kernel), budget, lambda, None, 0)?;
    println!("greedy design ({budget} of {n}): {:?}", design.indices);
    println!(
        "criterion trace: first {:.3}, last {:.3} (non-increasing)",
        trace[0].criterion,
        trace[budget - 1].criterion
    );

    let mut random_js = Vec::new();
    for t in 0..200u64 {
        let mut rng = rng_from_seed(derive_seed(1, &[t]));
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..budget {
            let j = rng.gen_range(i..n);
            idx.swap(i, j);
        }
        random_js.push(criterion_naive(&kernel, &idx[..budget], lambda)?);
    }
    random_js.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!(
        "greedy J = {:.3} vs random designs: median {:.3}, best of 200 = {:.3}",
        trace[budget - 1].criterion,
        random_js[100],
        random_js[0]
    );

    // Low-rank route: factor the kernel through sketched features once, then
    // evaluate J(S) in O(|S|^2 m).
    let cfg = NtkFeatureConfig::from_total_budget(1, 128, 5)?;
    let phi = ntk_random_features(&pool, &cfg)?;
    let state = LowRankState::new(&phi);
    let s: Vec<usize> = design.indices.clone();
    let t0 = Instant::now();
    let j_fast = criterion_lowrank(&state, &s, lambda)?;
    let fast = t0.elapsed();
    println!(
        "\nlow-rank criterion on the sketched kernel: J = {j_fast:.3} in {fast:.2?} per evaluation"
    );
    let (lr_design, _) = greedy_select(&GreedySource::LowRank(&state), budget, lambda, None, 0)?;
    println!("low-rank greedy design: {:?}", lr_design.indices);
    Ok(())
}
