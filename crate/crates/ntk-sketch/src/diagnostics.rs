//! Quantitative comparison of approximate and exact kernels.
//!
//! All spectral quantities are defined through the regularized congruence
//! `M = (K + lambda I)^{-1/2} (K_hat + lambda I) (K + lambda I)^{-1/2}`:
//! the generalized condition number is `max eig(M) / min eig(M)` (equal to 1
//! for a perfect approximation), and the two-sided spectral sandwich
//! `(1-eps)(K+lambda I) <= K_hat+lambda I <= (1+eps)(K+lambda I)` holds
//! exactly when every eigenvalue of `M` lies in `[1-eps, 1+eps]`.

use ndarray::prelude::*;
use ndarray_linalg::{Eigh, UPLO};

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;

/// Mean over all `n^2` entries of the squared difference.
pub fn entrywise_mse(approx: &KernelMatrix, exact: &KernelMatrix) -> Result<f64> {
    if approx.size() != exact.size() {
        return Err(Error::DimensionMismatch(format!(
            "kernel sizes differ: {} vs {}",
            approx.size(),
            exact.size()
        )));
    }
    let n = approx.size() as f64;
    Ok(approx
        .values()
        .iter()
        .zip(exact.values().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / (n * n))
}

/// Eigenvalues of the regularized congruence `M`, ascending.
fn congruence_eigenvalues(
    approx: &KernelMatrix,
    exact: &KernelMatrix,
    lambda: f64,
) -> Result<Array1<f64>> {
    if approx.size() != exact.size() {
        return Err(Error::DimensionMismatch(format!(
            "kernel sizes differ: {} vs {}",
            approx.size(),
            exact.size()
        )));
    }
    if lambda <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let n = exact.size();
    let shifted = exact.values().to_owned() + Array2::<f64>::eye(n) * lambda;
    let (vals, vecs) = shifted.eigh(UPLO::Lower)?;
    // Eigenvalues are >= lambda in exact arithmetic; clamp rounding noise.
    let inv_sqrt: Array1<f64> = vals.mapv(|v| 1.0 / v.max(1e-12 * lambda).sqrt());
    // W = U diag(1/sqrt(vals)); M = W^T (K_hat + lambda I) W.
    let mut w = vecs;
    for (mut col, s) in w.columns_mut().into_iter().zip(inv_sqrt.iter()) {
        col.mapv_inplace(|v| v * s);
    }
    let shifted_approx = approx.values().to_owned() + Array2::<f64>::eye(n) * lambda;
    let m = w.t().dot(&shifted_approx).dot(&w);
    // Symmetrize rounding noise before the second eigendecomposition.
    let m = (&m + &m.t()) / 2.0;
    let (eigs, _) = m.eigh(UPLO::Lower)?;
    Ok(eigs)
}

/// Generalized condition number of `(K+lambda I)^{-1/2}(K_hat+lambda I)(K+lambda I)^{-1/2}`.
pub fn generalized_condition_number(
    approx: &KernelMatrix,
    exact: &KernelMatrix,
    lambda: f64,
) -> Result<f64> {
    let eigs = congruence_eigenvalues(approx, exact, lambda)?;
    let min = eigs[0];
    let max = eigs[eigs.len() - 1];
    if min <= 0.0 {
        return Err(Error::Numerical(format!(
            "congruence has non-positive eigenvalue {min:.3e}"
        )));
    }
    let kappa = max / min;
    if kappa < 1.0 - 1e-9 {
        return Err(Error::Numerical(format!(
            "condition number {kappa} below 1 beyond tolerance"
        )));
    }
    Ok(kappa.max(1.0))
}

/// Outcome of a spectral-sandwich test, with the extremal generalized
/// eigenvalue as a debuggable witness.
#[derive(Debug, Clone, Copy)]
pub struct SandwichCheck {
    pub holds: bool,
    pub witness: f64,
}

/// Checks `(1-eps)(K+lambda I) <= K_hat+lambda I <= (1+eps)(K+lambda I)`.
pub fn spectral_sandwich_check(
    approx: &KernelMatrix,
    exact: &KernelMatrix,
    lambda: f64,
    epsilon: f64,
) -> Result<SandwichCheck> {
    if epsilon <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let eigs = congruence_eigenvalues(approx, exact, lambda)?;
    let mut witness = 1.0;
    for &mu in eigs.iter() {
        if (mu - 1.0).abs() > (witness - 1.0f64).abs() {
            witness = mu;
        }
    }
    Ok(SandwichCheck {
        holds: (witness - 1.0).abs() <= epsilon,
        witness,
    })
}
