//! Kernel ridge regression: exact kernel versus random features.
//!
//! Fits both paths on the same synthetic regression task, compares wall time
//! and test error, and round-trips the feature model through its on-disk
//! format (JSON manifest + coefficient blob).
//!
//!   cargo run --release --example ridge_regression

use std::time::Instant;

use ntk_sketch::kernels::ntk_matrix;
use ntk_sketch::krr::{fit_exact, fit_features, mse, RidgeModel};
use ntk_sketch::ntk_features::{ntk_random_features, NtkFeatureConfig};
use ntk_sketch::synthetic::{split_indices, synthetic_labels, unit_sphere_data};

fn main() -> ntk_sketch::Result<()> {
    let n = 2000;
    let holdout = 400;
    let depth = 2;
    let lambda_prime = 1e-4;
    let pool = unit_sphere_data(n + holdout, 15, 1)?;
    let labels = synthetic_labels(&pool, 0.1, 2)?;
    let (train_idx, test_idx) = split_indices(n + holdout, holdout, 3);
    let train = pool.select_rows(&train_idx)?;
    let test = pool.select_rows(&test_idx)?;
    let y_train = labels.select(&train_idx)?;
    let y_test = labels.select(&test_idx)?;

    let t0 = Instant::now();
    let kernel = ntk_matrix(&train, depth)?;
    let dual = fit_exact(&kernel, &train, &y_train, lambda_prime)?;
    let exact_preds = dual.predict(&test)?;
    let exact_time = t0.elapsed();

    let t1 = Instant::now();
    let cfg = NtkFeatureConfig::from_total_budget(depth, 512, 9)?;
    let phi = ntk_random_features(&train, &cfg)?;
    let primal = fit_features(&phi, &y_train, lambda_prime)?;
    // Test features are regenerated from the stored seed, so the train and
    // test random maps are identical.
    let feature_preds = primal.predict(&test)?;
    let feature_time = t1.elapsed();

    println!("n = {n} training points, depth {depth}, lambda' = {lambda_prime}");
    println!(
        "exact kernel path:   {:>8.2?}  test MSE {:.4}",
        exact_time,
        mse(&exact_preds, &y_test)?
    );
    println!(
        "feature path (512):  {:>8.2?}  test MSE {:.4}",
        feature_time,
        mse(&feature_preds, &y_test)?
    );

    let dir = tempfile::tempdir().expect("tempdir");
    let stem = dir.path().join("model");
    primal.save(&stem)?;
    let reloaded = RidgeModel::load(&stem)?;
    let again = reloaded.predict(&test)?;
    let identical = again
        .values()
        .iter()
        .zip(feature_preds.values().iter())
        .all(|(a, b)| a == b);
    println!("\nmodel save/load round trip bit-identical: {identical}");
    Ok(())
}
