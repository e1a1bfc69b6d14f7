//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with:
//!   cargo test --test acceptance -- --test-threads=1 --nocapture
//!
//! The tests also pass under plain `cargo test`; a global gate serializes
//! them so the timing-sensitive criteria get the whole machine.

use std::sync::Mutex;
use std::time::Instant;

use ndarray::prelude::*;
use ntk_sketch::active_learning::{
    criterion_lowrank, criterion_naive, greedy_select, GreedySource, LowRankState,
};
use ntk_sketch::arccos_features::{
    exact_q_directions_rejection, features_order0, features_order1, gibbs_sample_directions,
    weighted_features_order1, FeatureOrder, GaussianFeatureSpec,
};
use ntk_sketch::data::LabelVector;
use ntk_sketch::diagnostics::{
    entrywise_mse, generalized_condition_number, spectral_sandwich_check,
};
use ntk_sketch::finite_width::ntk_monte_carlo;
use ntk_sketch::kernels::{
    arc_cosine_0, arc_cosine_1, nngp_matrix, ntk_matrix, statistical_dimension, KernelKind,
    KernelMatrix,
};
use ntk_sketch::krr::{fit_exact, fit_features, mse};
use ntk_sketch::ntk_features::{ntk_naive_features, ntk_random_features, NtkFeatureConfig};
use ntk_sketch::seeding::derive_seed;
use ntk_sketch::sketch::{tensor_sketch, tensor_sketch_direct, SketchPair};
use ntk_sketch::synthetic::{
    clustered_sphere_data, split_indices, synthetic_labels, unit_sphere_data,
};

static GATE: Mutex<()> = Mutex::new(());

fn gate() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn report(criterion: &str, failures: &[String]) {
    if failures.is_empty() {
        println!("[PASS] {criterion}");
    } else {
        println!("[FAIL] {criterion}");
        for f in failures {
            println!("       - {f}");
        }
        panic!("{criterion}: {} check(s) failed", failures.len());
    }
}

/// Mean and standard error of the per-column kernel estimates of a feature
/// Gram entry (columns are independent samples of the estimator).
fn feature_gram_mean_se(phi: ArrayView2<'_, f64>, i: usize, j: usize) -> (f64, f64) {
    let m = phi.ncols() as f64;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for k in 0..phi.ncols() {
        let c = phi[[i, k]] * phi[[j, k]] * m;
        sum += c;
        sumsq += c * c;
    }
    let mean = sum / m;
    let var = (sumsq / m - mean * mean).max(0.0);
    (mean, (var / m).sqrt())
}

fn check_entrywise_3se(
    label: &str,
    mean: &Array2<f64>,
    se: &Array2<f64>,
    exact: ArrayView2<'_, f64>,
    failures: &mut Vec<String>,
) {
    for ((idx, m), (s, e)) in mean
        .indexed_iter()
        .zip(se.iter().zip(exact.iter()))
    {
        if (m - e).abs() > 3.0 * s + 1e-9 {
            failures.push(format!(
                "{label} entry {idx:?}: estimate {m:.6} vs exact {e:.6} (3 SE = {:.2e})",
                3.0 * s
            ));
        }
    }
}

#[test]
fn criterion_01_exact_kernel_correctness() {
    let _g = gate();
    let start = Instant::now();
    let mut failures = Vec::new();

    // Diagonal law on unit rows, depths 1..=5.
    let xs = unit_sphere_data(6, 4, 11).unwrap();
    for depth in 1..=5usize {
        let k = ntk_matrix(&xs, depth).unwrap();
        for i in 0..6 {
            let diag = k.values()[[i, i]];
            if (diag - (depth + 1) as f64).abs() > 1e-10 {
                failures.push(format!("depth {depth} diag[{i}] = {diag}"));
            }
        }
    }

    // Depth-1 closed form: K = A1 + A0 .* (X X^T), to 1e-12.
    let x = clustered_sphere_data(10, 5, 1, 0.25, 1).unwrap();
    let ntk1 = ntk_matrix(&x, 1).unwrap();
    let a0 = arc_cosine_0(&x, &x).unwrap();
    let a1 = arc_cosine_1(&x, &x).unwrap();
    let gram = x.values().dot(&x.values().t());
    for i in 0..10 {
        for j in 0..10 {
            let expect = a1[[i, j]] + a0[[i, j]] * gram[[i, j]];
            if (ntk1.values()[[i, j]] - expect).abs() > 1e-12 {
                failures.push(format!(
                    "depth-1 identity at ({i},{j}): {} vs {expect}",
                    ntk1.values()[[i, j]]
                ));
            }
        }
    }

    // Finite-width Monte-Carlo agreement: every entry within 2% relative.
    for depth in [1usize, 2] {
        let exact = ntk_matrix(&x, depth).unwrap();
        let mc = ntk_monte_carlo(&x, depth, 50_000, 10, 7).unwrap();
        for ((i, j), e) in exact.values().indexed_iter() {
            let m = mc.values()[[i, j]];
            let rel = ((m - e) / e).abs();
            if rel > 0.02 {
                failures.push(format!(
                    "monte-carlo depth {depth} entry ({i},{j}): rel err {rel:.4}"
                ));
            }
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 120.0 {
        failures.push(format!("runtime {elapsed:.1} s exceeds 2 min"));
    }
    report(
        &format!("criterion 1: exact-kernel correctness (diag, depth-1 identity, finite-width oracle within 2%) [{elapsed:.1} s]"),
        &failures,
    );
}

#[test]
fn criterion_02_tensorsketch_exactness() {
    let _g = gate();
    let start = Instant::now();
    let mut failures = Vec::new();
    let m_choices = [7usize, 8, 16, 33, 128];
    let mut rng = ntk_sketch::seeding::rng_from_seed(2024);
    use rand::Rng;
    for trial in 0..200 {
        let d1 = rng.gen_range(1..=64);
        let d2 = rng.gen_range(1..=64);
        let m = m_choices[trial % m_choices.len()];
        let x: Vec<f64> = (0..d1).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let y: Vec<f64> = (0..d2).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let pair = SketchPair::new(d1, d2, m, derive_seed(31, &[trial as u64])).unwrap();
        let fast = tensor_sketch(&pair, &x, &y).unwrap();
        let direct = tensor_sketch_direct(&pair, &x, &y).unwrap();
        for (k, (a, b)) in fast.iter().zip(direct.iter()).enumerate() {
            if (a - b).abs() > 1e-10 {
                failures.push(format!(
                    "instance {trial} (d1={d1}, d2={d2}, m={m}) bin {k}: fft {a} vs direct {b}"
                ));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 10.0 {
        failures.push(format!("runtime {elapsed:.1} s exceeds 10 s"));
    }
    report(
        &format!("criterion 2: TensorSketch FFT path equals direct combined-hash path on 200 instances [{elapsed:.1} s]"),
        &failures,
    );
}

#[test]
fn criterion_03_unbiasedness_suite() {
    let _g = gate();
    let start = Instant::now();
    let mut failures = Vec::new();

    // Plain order-0 and order-1 features: per-column samples.
    let x = unit_sphere_data(5, 6, 21).unwrap();
    let a0 = arc_cosine_0(&x, &x).unwrap();
    let a1 = arc_cosine_1(&x, &x).unwrap();
    let m = 40_000usize;
    let f0 = features_order0(
        x.values(),
        &GaussianFeatureSpec::new(6, m, FeatureOrder::Step, 301).unwrap(),
    )
    .unwrap();
    let f1 = features_order1(
        x.values(),
        &GaussianFeatureSpec::new(6, m, FeatureOrder::Relu, 302).unwrap(),
    )
    .unwrap();
    for (label, phi, exact) in [("order-0", &f0, &a0), ("order-1", &f1, &a1)] {
        for i in 0..5 {
            for j in 0..5 {
                let (mean, se) = feature_gram_mean_se(phi.values(), i, j);
                if (mean - exact[[i, j]]).abs() > 3.0 * se + 1e-9 {
                    failures.push(format!(
                        "{label} ({i},{j}): {mean:.5} vs {:.5} (3 SE {:.2e})",
                        exact[[i, j]],
                        3.0 * se
                    ));
                }
            }
        }
    }

    // Weighted order-1 with the exact-q rejection oracle at d = 3.
    let x3 = unit_sphere_data(5, 3, 23).unwrap();
    let a1_3 = arc_cosine_1(&x3, &x3).unwrap();
    let dirs = exact_q_directions_rejection(3, m, 303).unwrap();
    let fw = weighted_features_order1(x3.values(), &dirs).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let (mean, se) = feature_gram_mean_se(fw.values(), i, j);
            if (mean - a1_3[[i, j]]).abs() > 3.0 * se + 1e-9 {
                failures.push(format!(
                    "weighted order-1 ({i},{j}): {mean:.5} vs {:.5}",
                    a1_3[[i, j]]
                ));
            }
        }
    }

    // NNGP features at depth 1: the order-1 chain applied through the
    // pipeline entry point; columns are again independent samples.
    let nngp_exact = nngp_matrix(&x, 1).unwrap();
    let cfg = NtkFeatureConfig {
        depth: 1,
        m0: 1,
        m1: 20_000,
        m_cs: 0,
        use_gibbs: false,
        gibbs_sweeps: 1,
        normalize_output: false,
        seed: 304,
    };
    let psi = ntk_sketch::ntk_features::nngp_random_features(&x, &cfg).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let (mean, se) = feature_gram_mean_se(psi.values(), i, j);
            if (mean - nngp_exact.values()[[i, j]]).abs() > 3.0 * se + 1e-9 {
                failures.push(format!(
                    "nngp ({i},{j}): {mean:.5} vs {:.5}",
                    nngp_exact.values()[[i, j]]
                ));
            }
        }
    }

    // Full pipeline at depth 1: mean over independent seeds.
    let x6 = unit_sphere_data(6, 5, 29).unwrap();
    let exact = ntk_matrix(&x6, 1).unwrap();
    let seeds = 50u64;
    let mut mean = Array2::<f64>::zeros((6, 6));
    let mut sumsq = Array2::<f64>::zeros((6, 6));
    for s in 0..seeds {
        let cfg = NtkFeatureConfig::new(1, 20_000, 20_000, 2_000, 400 + s).unwrap();
        let gram = ntk_random_features(&x6, &cfg).unwrap().gram();
        mean += &gram;
        sumsq += &gram.mapv(|v| v * v);
    }
    mean /= seeds as f64;
    let se = Array2::from_shape_fn((6, 6), |(i, j)| {
        let var = (sumsq[[i, j]] / seeds as f64 - mean[[i, j]] * mean[[i, j]]).max(0.0);
        (var / seeds as f64).sqrt()
    });
    check_entrywise_3se("pipeline depth-1", &mean, &se, exact.values(), &mut failures);

    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 300.0 {
        failures.push(format!("runtime {elapsed:.1} s exceeds 5 min"));
    }
    report(
        &format!("criterion 3: Monte-Carlo Grams unbiased within 3 SE (order-0/1, weighted via rejection oracle, NNGP, depth-1 pipeline) [{elapsed:.1} s]"),
        &failures,
    );
}

#[test]
fn criterion_04_error_bound_regime() {
    let _g = gate();
    let start = Instant::now();
    let mut failures = Vec::new();
    let depth = 2usize;
    let eps = 0.5f64;
    // Error bound L eps (1 + eps/2)^2 + eps at L = 2, eps = 1/2.
    let bound = depth as f64 * eps * (1.0 + eps / 2.0).powi(2) + eps;
    let x = unit_sphere_data(2, 6, 37).unwrap();
    let exact = ntk_matrix(&x, depth).unwrap().values()[[0, 1]];
    let trials = 100u64;
    let mut hits = 0usize;
    for t in 0..trials {
        let cfg = NtkFeatureConfig::new(depth, 4096, 4096, 8192, 4000 + t).unwrap();
        let phi = ntk_random_features(&x, &cfg).unwrap();
        let est = phi.values().row(0).dot(&phi.values().row(1));
        if (est - exact).abs() <= bound {
            hits += 1;
        }
    }
    if hits < 80 {
        failures.push(format!(
            "only {hits}/100 seeds within the error bound {bound:.4}"
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        &format!("criterion 4: depth-2 error bound held in {hits}/100 seeds (bound {bound:.4}) [{elapsed:.1} s]"),
        &failures,
    );
}

#[test]
fn criterion_05_condition_number_ordering() {
    let _g = gate();
    let start = Instant::now();
    let mut failures = Vec::new();
    let n = 300usize;
    let lambda = 1e-4 * n as f64;
    let seeds = 20u64;
    let m_grid: Vec<usize> = (1..=10).map(|k| k * 100).collect();
    let datasets = [
        ("sphere-d10", unit_sphere_data(n, 10, 51).unwrap()),
        ("sphere-d30", unit_sphere_data(n, 30, 52).unwrap()),
        (
            "clustered-d15",
            clustered_sphere_data(n, 15, 5, 0.3, 53).unwrap(),
        ),
    ];
    for (name, x) in &datasets {
        let a1 = KernelMatrix::from_array(
            arc_cosine_1(x, x).unwrap(),
            KernelKind::ArcCosine1,
        )
        .unwrap();
        for &m in &m_grid {
            let mut plain_kappas = Vec::new();
            let mut weighted_kappas = Vec::new();
            for s in 0..seeds {
                let seed = derive_seed(5000, &[s, m as u64]);
                let spec =
                    GaussianFeatureSpec::new(x.cols(), m, FeatureOrder::Relu, seed).unwrap();
                let plain = features_order1(x.values(), &spec).unwrap();
                let gram = KernelMatrix::from_array(plain.gram(), KernelKind::Approx).unwrap();
                plain_kappas.push(generalized_condition_number(&gram, &a1, lambda).unwrap());

                let dirs = gibbs_sample_directions(x.cols(), m, 1, seed).unwrap();
                let weighted = weighted_features_order1(x.values(), &dirs).unwrap();
                let gram =
                    KernelMatrix::from_array(weighted.gram(), KernelKind::Approx).unwrap();
                weighted_kappas.push(generalized_condition_number(&gram, &a1, lambda).unwrap());
            }
            let median = |v: &mut Vec<f64>| {
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v[v.len() / 2]
            };
            let plain_med = median(&mut plain_kappas);
            let weighted_med = median(&mut weighted_kappas);
            if weighted_med > plain_med {
                failures.push(format!(
                    "{name} m={m}: weighted median {weighted_med:.3e} > plain {plain_med:.3e}"
                ));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        &format!("criterion 5: Gibbs-weighted features have median condition number <= plain at every m on 3 datasets [{elapsed:.1} s]"),
        &failures,
    );
}

#[test]
fn criterion_06_spectral_sandwich() {
    let _g = gate();
    let start = Instant::now();
    let mut failures = Vec::new();
    let n = 64usize;
    let d = 8usize;
    let lambda_prime = 0.1;
    let lambda = lambda_prime * n as f64;
    let eps = 0.5;
    let delta = 0.2; // failure budget: the sandwich must hold in >= 80% of seeds
    let cap = 1usize << 14;
    let x = unit_sphere_data(n, d, 61).unwrap();

    // Statistical dimensions and the spectral norm of X set the lower bounds.
    let a0 = KernelMatrix::from_array(arc_cosine_0(&x, &x).unwrap(), KernelKind::ArcCosine0).unwrap();
    let a1 = KernelMatrix::from_array(arc_cosine_1(&x, &x).unwrap(), KernelKind::ArcCosine1).unwrap();
    let s_lambda = statistical_dimension(&a0, lambda)
        .unwrap()
        .max(statistical_dimension(&a1, lambda).unwrap());
    let gram = x.values().dot(&x.values().t());
    let spectral_sq = {
        use ndarray_linalg::{Eigh, UPLO};
        let (eigs, _) = gram.eigh(UPLO::Lower).unwrap();
        eigs[n - 1]
    };
    let log_term = (48.0 * s_lambda / delta).ln();
    let m0 = ((48.0 * n as f64 / (eps * eps * lambda)) * log_term).ceil() as usize;
    let m1 = ((16.0 / 3.0) * d as f64 * spectral_sq / (eps * eps * lambda) * log_term).ceil()
        as usize;
    let m_cs = (297.0 / (eps * eps * delta) * (n as f64 / (lambda + 1.0)).powi(2)).ceil() as usize;
    let (m0, m1, m_cs) = (m0.min(cap), m1.min(cap), m_cs.min(cap));
    println!(
        "       sandwich dims: s_lambda {s_lambda:.2}, m0 {m0}, m1 {m1}, m_cs {m_cs} (cap {cap})"
    );

    let exact = ntk_matrix(&x, 1).unwrap();
    let seeds = 50u64;
    let mut holds = 0usize;
    let mut witnesses = Vec::new();
    for s in 0..seeds {
        let cfg = NtkFeatureConfig::new(1, m0, m1, m_cs, 6000 + s).unwrap();
        let gram = KernelMatrix::from_array(
            ntk_random_features(&x, &cfg).unwrap().gram(),
            KernelKind::Approx,
        )
        .unwrap();
        let check = spectral_sandwich_check(&gram, &exact, lambda, eps).unwrap();
        witnesses.push(check.witness);
        if check.holds {
            holds += 1;
        }
    }
    let wmin = witnesses.iter().cloned().fold(f64::INFINITY, f64::min);
    let wmax = witnesses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!("       witnesses over {seeds} seeds: [{wmin:.4}, {wmax:.4}], held {holds}/{seeds}");
    if holds * 100 < 80 * seeds as usize {
        failures.push(format!("sandwich held in only {holds}/{seeds} seeds"));
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        &format!("criterion 6: depth-1 spectral sandwich held in {holds}/{seeds} seeds at eps=0.5 [{elapsed:.1} s]"),
        &failures,
    );
}

#[test]
fn criterion_07_mse_vs_dimension_ordering() {
    let _g = gate();
    let start = Instant::now();
    let mut failures = Vec::new();
    let n = 200usize;
    let d = 10usize;
    let x = unit_sphere_data(n, d, 71).unwrap();
    let seeds = 10u64;
    for depth in [2usize, 3] {
        let exact = ntk_matrix(&x, depth).unwrap();
        // Matched total dimension: naive dims set the budget for the sketch.
        let (m0_naive, m1_naive) = if depth == 2 { (4, 8) } else { (3, 6) };
        let total =
            ntk_sketch::ntk_features::naive_feature_dim(depth, m0_naive, m1_naive, d) as usize;
        let cfg_budget = NtkFeatureConfig::from_total_budget(depth, total, 0).unwrap();
        let mut sketch_mses = Vec::new();
        let mut naive_mses = Vec::new();
        for s in 0..seeds {
            let cfg = NtkFeatureConfig {
                seed: 7000 + s,
                ..cfg_budget.clone()
            };
            let sketch_gram = KernelMatrix::from_array(
                ntk_random_features(&x, &cfg).unwrap().gram(),
                KernelKind::Approx,
            )
            .unwrap();
            sketch_mses.push(entrywise_mse(&sketch_gram, &exact).unwrap());
            let naive_gram = KernelMatrix::from_array(
                ntk_naive_features(&x, depth, m0_naive, m1_naive, 7000 + s)
                    .unwrap()
                    .gram(),
                KernelKind::Approx,
            )
            .unwrap();
            naive_mses.push(entrywise_mse(&naive_gram, &exact).unwrap());
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        let sketch_med = median(&mut sketch_mses);
        let naive_med = median(&mut naive_mses);
        println!(
            "       depth {depth}, dimension {total}: sketch MSE {sketch_med:.4e}, naive MSE {naive_med:.4e}"
        );
        if sketch_med > naive_med {
            failures.push(format!(
                "depth {depth}: sketch median MSE {sketch_med:.4e} > naive {naive_med:.4e}"
            ));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        &format!("criterion 7: sketched features beat the naive tensor construction at matched dimension (depths 2, 3) [{elapsed:.1} s]"),
        &failures,
    );
}

#[test]
fn criterion_08_krr_equivalence_and_speed() {
    let _g = gate();
    let start = Instant::now();
    let mut failures = Vec::new();

    // Dual-primal equivalence at n = 50.
    {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ntk_sketch::seeding::rng_from_seed(81);
        let n = 50usize;
        let phi_train: Array2<f64> =
            Array2::from_shape_fn((n, n), |_| StandardNormal.sample(&mut rng));
        let phi_test: Array2<f64> =
            Array2::from_shape_fn((20, n), |_| StandardNormal.sample(&mut rng));
        let y = LabelVector::from_array(Array1::from_shape_fn(n, |i| (i as f64 * 0.3).cos()))
            .unwrap();
        let k = KernelMatrix::from_array(phi_train.dot(&phi_train.t()), KernelKind::Approx)
            .unwrap();
        let xdummy = unit_sphere_data(n, 3, 1).unwrap();
        for lp in [1e-5, 1e-2, 0.5] {
            let dual = fit_exact(&k, &xdummy, &y, lp).unwrap();
            let primal = fit_features(
                &ntk_sketch::ntk_features::FeatureBlock::new(
                    phi_train.clone(),
                    0,
                    ntk_sketch::ntk_features::FeatureKind::Phi,
                )
                .unwrap(),
                &y,
                lp,
            )
            .unwrap();
            let dual_pred = phi_test
                .dot(&phi_train.t())
                .dot(&dual.dual_coefficients().unwrap());
            let primal_pred = primal
                .predict_with_features(
                    &ntk_sketch::ntk_features::FeatureBlock::new(
                        phi_test.clone(),
                        0,
                        ntk_sketch::ntk_features::FeatureKind::Phi,
                    )
                    .unwrap(),
                )
                .unwrap();
            for (i, (a, b)) in dual_pred.iter().zip(primal_pred.values().iter()).enumerate() {
                if (a - b).abs() > 1e-8 {
                    failures.push(format!(
                        "dual/primal mismatch at lambda'={lp}, test point {i}: {a} vs {b}"
                    ));
                }
            }
        }
    }

    // End-to-end timing at n = 5000, m = 512, d = 20, depth 2.
    let n = 5000usize;
    let holdout = 500usize;
    let pool = unit_sphere_data(n + holdout, 20, 83).unwrap();
    let labels = synthetic_labels(&pool, 0.1, 84).unwrap();
    let (train_idx, test_idx) = split_indices(n + holdout, holdout, 85);
    let train = pool.select_rows(&train_idx).unwrap();
    let test = pool.select_rows(&test_idx).unwrap();
    let y_train = labels.select(&train_idx).unwrap();
    let y_test = labels.select(&test_idx).unwrap();
    let lp = 1e-4;

    let t_feature = Instant::now();
    let cfg = NtkFeatureConfig::from_total_budget(2, 512, 86).unwrap();
    let phi = ntk_random_features(&train, &cfg).unwrap();
    let primal = fit_features(&phi, &y_train, lp).unwrap();
    let feature_preds = primal.predict(&test).unwrap();
    let feature_secs = t_feature.elapsed().as_secs_f64();
    let feature_mse = mse(&feature_preds, &y_test).unwrap();

    let t_exact = Instant::now();
    let k = ntk_matrix(&train, 2).unwrap();
    let dual = fit_exact(&k, &train, &y_train, lp).unwrap();
    let exact_preds = dual.predict(&test).unwrap();
    let exact_secs = t_exact.elapsed().as_secs_f64();
    let exact_mse = mse(&exact_preds, &y_test).unwrap();

    let ratio = exact_secs / feature_secs;
    println!(
        "       exact path {exact_secs:.2} s (test MSE {exact_mse:.4}), feature path {feature_secs:.2} s (test MSE {feature_mse:.4}), ratio {ratio:.1}x"
    );
    if ratio < 3.0 {
        failures.push(format!(
            "feature path only {ratio:.2}x faster (need >= 3x): exact {exact_secs:.2} s vs features {feature_secs:.2} s"
        ));
    }

    let elapsed = start.elapsed().as_secs_f64();
    report(
        &format!("criterion 8: dual-primal equivalence to 1e-8 and feature path {ratio:.1}x faster at n=5000 [{elapsed:.1} s]"),
        &failures,
    );
}

#[test]
fn criterion_09_active_learning() {
    let _g = gate();
    let start = Instant::now();
    let mut failures = Vec::new();

    // Low-rank J equals naive J on feature-Gram kernels, n <= 200, m <= 32.
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ntk_sketch::seeding::rng_from_seed(91);
    for (n, m) in [(50usize, 8usize), (120, 16), (200, 32)] {
        let phi: Array2<f64> = Array2::from_shape_fn((n, m), |_| StandardNormal.sample(&mut rng));
        let k = KernelMatrix::from_array(phi.dot(&phi.t()), KernelKind::Approx).unwrap();
        let state = LowRankState::from_matrix(phi);
        let lambda = 1e-4 * n as f64;
        // Designs from a greedy run plus assorted fixed ones.
        let (design, _) = greedy_select(&GreedySource::LowRank(&state), m.min(12), lambda, None, 5)
            .unwrap();
        let mut test_designs: Vec<Vec<usize>> = vec![
            vec![0],
            vec![n - 1, 0, n / 2],
            design.indices.clone(),
        ];
        test_designs.push((0..m.min(10)).collect());
        for s in test_designs {
            let naive = criterion_naive(&k, &s, lambda).unwrap();
            let fast = criterion_lowrank(&state, &s, lambda).unwrap();
            if (naive - fast).abs() > 1e-8 * naive.abs().max(1.0) {
                failures.push(format!(
                    "n={n} m={m} S={s:?}: naive {naive} vs lowrank {fast}"
                ));
            }
        }
    }

    // Greedy beats the median of 100 random designs; trace non-increasing.
    let pool = unit_sphere_data(200, 8, 93).unwrap();
    let kernel = ntk_matrix(&pool, 1).unwrap();
    let lambda = 1e-4 * 200.0;
    let (design, trace) =
        greedy_select(&GreedySource::Exact(&kernel), 20, lambda, None, 9).unwrap();
    for w in trace.windows(2) {
        if w[1].criterion > w[0].criterion + 1e-10 {
            failures.push(format!(
                "greedy trace increased: {} -> {}",
                w[0].criterion, w[1].criterion
            ));
        }
    }
    use rand::Rng;
    for k_budget in [5usize, 10, 20] {
        let greedy_j = criterion_naive(&kernel, &design.indices[..k_budget], lambda).unwrap();
        let mut random_js = Vec::new();
        for t in 0..100u64 {
            let mut r = ntk_sketch::seeding::rng_from_seed(derive_seed(94, &[t]));
            let mut pool_idx: Vec<usize> = (0..200).collect();
            for i in 0..k_budget {
                let j = r.gen_range(i..200);
                pool_idx.swap(i, j);
            }
            random_js.push(criterion_naive(&kernel, &pool_idx[..k_budget], lambda).unwrap());
        }
        random_js.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = random_js[50];
        if greedy_j > median {
            failures.push(format!(
                "budget {k_budget}: greedy J {greedy_j:.4} worse than median random {median:.4}"
            ));
        }
    }

    // Low-rank evaluation speed: n=2000, m=64, |S|=32; the naive evaluator
    // must also build K = Phi Phi^T, mirroring its real cost.
    {
        let n = 2000usize;
        let m = 64usize;
        let phi: Array2<f64> = Array2::from_shape_fn((n, m), |_| StandardNormal.sample(&mut rng));
        let s: Vec<usize> = (0..32).map(|i| i * 61 % n).collect();
        let lambda = 0.5;
        let t_naive = Instant::now();
        let k = KernelMatrix::from_array(phi.dot(&phi.t()), KernelKind::Approx).unwrap();
        let naive_j = criterion_naive(&k, &s, lambda).unwrap();
        let naive_secs = t_naive.elapsed().as_secs_f64();
        let state = LowRankState::from_matrix(phi); // preprocessing outside the loop
        let t_fast = Instant::now();
        let mut fast_j = 0.0;
        let reps = 20;
        for _ in 0..reps {
            fast_j = criterion_lowrank(&state, &s, lambda).unwrap();
        }
        let fast_secs = t_fast.elapsed().as_secs_f64() / reps as f64;
        println!(
            "       low-rank evaluation {:.3} ms vs naive {:.1} ms (J {fast_j:.3} vs {naive_j:.3})",
            fast_secs * 1e3,
            naive_secs * 1e3
        );
        if naive_secs < 5.0 * fast_secs {
            failures.push(format!(
                "low-rank evaluation only {:.1}x faster than naive",
                naive_secs / fast_secs
            ));
        }
        if (naive_j - fast_j).abs() > 1e-8 * naive_j.abs() {
            failures.push("low-rank J diverged from naive at n=2000".into());
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    report(
        &format!("criterion 9: low-rank J matches naive to 1e-8, greedy beats random medians, trace non-increasing [{elapsed:.1} s]"),
        &failures,
    );
}

#[test]
fn criterion_10_cli_determinism() {
    let _g = gate();
    let start = Instant::now();
    let mut failures = Vec::new();
    let bin = env!("CARGO_BIN_EXE_ntk-sketch");
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).display().to_string();

    let dataset = path("pool.csv");
    let run = |args: &[String]| {
        let out = std::process::Command::new(bin)
            .args(args)
            .output()
            .expect("binary runs");
        (out.status.code().unwrap_or(-1), out)
    };
    // Seed dataset for the file-based subcommands.
    let (code, _) = run(&[
        "synth".into(),
        "--n".into(),
        "60".into(),
        "--d".into(),
        "6".into(),
        "--labels".into(),
        "--seed".into(),
        "3".into(),
        "--out".into(),
        dataset.clone(),
    ]);
    assert_eq!(code, 0);

    // (name, args, output files) per subcommand; each runs twice into "a"/"b"
    // locations and every produced byte must match.
    let cases: Vec<(&str, Vec<String>, Vec<String>)> = vec![
        (
            "synth",
            vec![
                "synth".into(),
                "--n".into(),
                "40".into(),
                "--d".into(),
                "5".into(),
                "--clusters".into(),
                "3".into(),
                "--labels".into(),
                "--seed".into(),
                "11".into(),
            ],
            vec!["OUT".into(), "OUT.manifest.json".into()],
        ),
        (
            "features",
            vec![
                "features".into(),
                "--input".into(),
                dataset.clone(),
                "--label-column".into(),
                "6".into(),
                "--normalize".into(),
                "--depth".into(),
                "2".into(),
                "--m".into(),
                "64".into(),
                "--gibbs".into(),
                "--seed".into(),
                "12".into(),
            ],
            vec!["OUT".into(), "OUT.manifest.json".into()],
        ),
        (
            "exact",
            vec![
                "exact".into(),
                "--input".into(),
                dataset.clone(),
                "--label-column".into(),
                "6".into(),
                "--normalize".into(),
                "--depth".into(),
                "2".into(),
                "--kind".into(),
                "ntk".into(),
                "--seed".into(),
                "13".into(),
            ],
            vec!["OUT".into(), "OUT.manifest.json".into()],
        ),
        (
            "bench",
            vec![
                "bench".into(),
                "--n".into(),
                "80".into(),
                "--d".into(),
                "8".into(),
                "--depth".into(),
                "2".into(),
                "--m-grid".into(),
                "32,64".into(),
                "--seeds".into(),
                "2".into(),
                "--holdout".into(),
                "20".into(),
                "--no-timing".into(),
                "--seed".into(),
                "14".into(),
            ],
            vec!["OUT".into(), "OUT.manifest.json".into()],
        ),
        (
            "active",
            vec![
                "active".into(),
                "--n".into(),
                "50".into(),
                "--d".into(),
                "6".into(),
                "--budget".into(),
                "5".into(),
                "--lowrank-m".into(),
                "32".into(),
                "--seed".into(),
                "15".into(),
            ],
            vec![
                "OUT.indices.txt".into(),
                "OUT.trace.csv".into(),
                "OUT.out.manifest.json".into(),
            ],
        ),
    ];

    for (name, base_args, outputs) in cases {
        let bench_start = Instant::now();
        for rep in ["a", "b"] {
            let mut args = base_args.clone();
            let stem = path(&format!("{name}_{rep}"));
            if name == "active" {
                args.push("--out-prefix".into());
                args.push(stem.clone());
            } else {
                args.push("--out".into());
                args.push(stem.clone());
            }
            let (code, out) = run(&args);
            if code != 0 {
                failures.push(format!(
                    "{name} run {rep} exited {code}: {}",
                    String::from_utf8_lossy(&out.stderr)
                ));
            }
        }
        if name == "bench" && bench_start.elapsed().as_secs_f64() > 60.0 {
            failures.push("bench smoke run exceeded 60 s".into());
        }
        for output in outputs {
            let fa = path(&output.replace("OUT", &format!("{name}_a")));
            let fb = path(&output.replace("OUT", &format!("{name}_b")));
            match (std::fs::read(&fa), std::fs::read(&fb)) {
                (Ok(a), Ok(b)) => {
                    // Manifests embed the output path itself; compare after
                    // masking the differing stem.
                    let (a, b) = if output.ends_with(".json") {
                        (
                            String::from_utf8_lossy(&a)
                                .replace(&format!("{name}_a"), "X")
                                .into_bytes(),
                            String::from_utf8_lossy(&b)
                                .replace(&format!("{name}_b"), "X")
                                .into_bytes(),
                        )
                    } else {
                        (a, b)
                    };
                    if a != b {
                        failures.push(format!("{name}: output {output} differs between runs"));
                    }
                }
                _ => failures.push(format!("{name}: missing output {output}")),
            }
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    report(
        &format!("criterion 10: every CLI subcommand is byte-identical across same-seed runs [{elapsed:.1} s]"),
        &failures,
    );
}
