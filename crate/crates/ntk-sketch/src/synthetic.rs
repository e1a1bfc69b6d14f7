//! Seeded synthetic datasets so every benchmark and test runs without
//! external downloads.

use ndarray::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{normalize_rows, DataMatrix, LabelVector};
use crate::error::Result;
use crate::seeding::rng_from_seed;

/// `n` points drawn uniformly on the unit sphere in `R^d`.
pub fn unit_sphere_data(n: usize, d: usize, seed: u64) -> Result<DataMatrix> {
    let mut rng = rng_from_seed(seed);
    loop {
        let raw = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng));
        let dm = DataMatrix::from_array(raw)?;
        // A zero row has probability zero; retry guards against it anyway.
        match normalize_rows(&dm) {
            Ok(x) => return Ok(x),
            Err(_) => continue,
        }
    }
}

/// Clustered points on the unit sphere: `clusters` centers, Gaussian spread
/// around each, re-normalized to the sphere.
pub fn clustered_sphere_data(
    n: usize,
    d: usize,
    clusters: usize,
    spread: f64,
    seed: u64,
) -> Result<DataMatrix> {
    let clusters = clusters.max(1);
    let centers = unit_sphere_data(clusters, d, seed.wrapping_add(0x5eed))?;
    let mut rng = rng_from_seed(seed);
    let mut raw = Array2::zeros((n, d));
    for i in 0..n {
        let c = centers.row(i % clusters);
        for j in 0..d {
            let noise: f64 = StandardNormal.sample(&mut rng);
            raw[[i, j]] = c[j] + spread * noise;
        }
    }
    normalize_rows(&DataMatrix::from_array(raw)?)
}

/// Smooth nonlinear regression targets `y = sin(3 sqrt(d) <x, w>) + noise`.
pub fn synthetic_labels(x: &DataMatrix, noise: f64, seed: u64) -> Result<LabelVector> {
    let mut rng = rng_from_seed(seed);
    let d = x.cols();
    let mut w = Array1::<f64>::zeros(d);
    for v in w.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
    }
    let wn = w.dot(&w).sqrt();
    if wn > 0.0 {
        w.mapv_inplace(|v| v / wn);
    }
    let mut y = Array1::zeros(x.rows());
    for (i, row) in x.values().rows().into_iter().enumerate() {
        let t = row.dot(&w) * (d as f64).sqrt();
        let eps: f64 = StandardNormal.sample(&mut rng);
        y[i] = (3.0 * t).sin() + noise * eps;
    }
    LabelVector::from_array(y)
}

/// Deterministic index split into train/test of sizes `(n - holdout, holdout)`.
pub fn split_indices(n: usize, holdout: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let holdout = holdout.min(n);
    let test = order[..holdout].to_vec();
    let train = order[holdout..].to_vec();
    (train, test)
}
