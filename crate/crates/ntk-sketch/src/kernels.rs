//! Closed-form arc-cosine kernels and the NNGP/NTK recursion.
//!
//! For inputs `x, y` with angle `theta`, the order-0 and order-1 arc-cosine
//! kernels are
//!
//! ```text
//! A0(x, y) = 1 - acos(cos theta) / pi
//! A1(x, y) = |x| |y| * f(cos theta),   f(c) = (sqrt(1 - c^2) + (pi - acos c) c) / pi
//! ```
//!
//! The NTK of an `L`-step fully-connected ReLU network is obtained by
//! iterating the matrix maps `F0`/`F1` (the same formulas applied entrywise
//! with diagonal normalization) starting from the Gram matrix:
//!
//! ```text
//! K_ntk(0) = K_nngp(0) = X X^T
//! K_nngp(l) = F1(K_nngp(l-1))
//! K_ntk(l)  = K_nngp(l) + K_ntk(l-1) .* F0(K_nngp(l-1))
//! ```
//!
//! which costs `O(n^2 (d + L))` for `n` points in `d` dimensions. On
//! unit-norm rows the NNGP diagonal stays 1 and the NTK diagonal equals
//! `l + 1` after `l` steps.

use ndarray::prelude::*;
use ndarray::Zip;
use ndarray_linalg::{Eigh, UPLO};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};

/// Provenance of a kernel matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    ArcCosine0,
    ArcCosine1,
    Nngp(usize),
    Ntk(usize),
    Approx,
}

/// Symmetric positive-semidefinite kernel matrix with provenance.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    values: Array2<f64>,
    kind: KernelKind,
}

impl KernelMatrix {
    /// Wraps a square matrix, enforcing symmetry within `1e-10` of its scale.
    pub fn from_array(values: Array2<f64>, kind: KernelKind) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "kernel matrix must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut max_asym = 0.0f64;
        for i in 0..values.nrows() {
            for j in (i + 1)..values.ncols() {
                max_asym = max_asym.max((values[[i, j]] - values[[j, i]]).abs());
            }
        }
        if max_asym > 1e-10 * scale {
            return Err(Error::NotSymmetric(max_asym));
        }
        Ok(Self { values, kind })
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

/// `f(c)` from the order-1 arc-cosine kernel, for `c` in `[-1, 1]`.
pub fn arccos_order1_scalar(c: f64) -> f64 {
    let c = c.clamp(-1.0, 1.0);
    ((1.0 - c * c).sqrt() + (std::f64::consts::PI - c.acos()) * c) / std::f64::consts::PI
}

/// `1 - acos(c) / pi`, for `c` in `[-1, 1]`.
pub fn arccos_order0_scalar(c: f64) -> f64 {
    let c = c.clamp(-1.0, 1.0);
    1.0 - c.acos() / std::f64::consts::PI
}

fn row_norms(x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let mut norms = Array1::zeros(x.nrows());
    for (i, row) in x.rows().into_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        if n == 0.0 {
            return Err(Error::ZeroNormRow(i));
        }
        norms[i] = n;
    }
    Ok(norms)
}

fn arc_cosine_cross(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    order1: bool,
) -> Result<Array2<f64>> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "inputs have {} and {} columns",
            x.ncols(),
            y.ncols()
        )));
    }
    let nx = row_norms(x)?;
    let ny = row_norms(y)?;
    let mut out = x.dot(&y.t());
    Zip::indexed(&mut out).par_for_each(|(i, j), v| {
        // Gram entries can exceed the norm product by ~1e-16; clamp before acos.
        let c = (*v / (nx[i] * ny[j])).clamp(-1.0, 1.0);
        *v = if order1 {
            nx[i] * ny[j] * arccos_order1_scalar(c)
        } else {
            arccos_order0_scalar(c)
        };
    });
    Ok(out)
}

/// Order-0 arc-cosine cross matrix `[A0]_ij = A0(x_i, y_j)`.
pub fn arc_cosine_0(x: &DataMatrix, y: &DataMatrix) -> Result<Array2<f64>> {
    arc_cosine_cross(x.values(), y.values(), false)
}

/// Order-1 arc-cosine cross matrix `[A1]_ij = A1(x_i, y_j)`.
pub fn arc_cosine_1(x: &DataMatrix, y: &DataMatrix) -> Result<Array2<f64>> {
    arc_cosine_cross(x.values(), y.values(), true)
}

/// Raw-view variants used by the random-feature test harnesses.
pub fn arc_cosine_0_views(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    arc_cosine_cross(x, y, false)
}

pub fn arc_cosine_1_views(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    arc_cosine_cross(x, y, true)
}

fn diag_sqrt(k: &Array2<f64>) -> Result<Array1<f64>> {
    let mut s = Array1::zeros(k.nrows());
    for i in 0..k.nrows() {
        let d = k[[i, i]];
        if d <= 0.0 {
            return Err(Error::NonPositiveDiagonal(i));
        }
        s[i] = d.sqrt();
    }
    Ok(s)
}

/// Applies `F0` entrywise, normalizing by the current diagonal.
pub fn f0_map(k: &Array2<f64>) -> Result<Array2<f64>> {
    let s = diag_sqrt(k)?;
    let mut out = k.clone();
    Zip::indexed(&mut out).par_for_each(|(i, j), v| {
        *v = arccos_order0_scalar(*v / (s[i] * s[j]));
    });
    Ok(out)
}

/// Applies `F1` entrywise, normalizing by the current diagonal.
pub fn f1_map(k: &Array2<f64>) -> Result<Array2<f64>> {
    let s = diag_sqrt(k)?;
    let mut out = k.clone();
    Zip::indexed(&mut out).par_for_each(|(i, j), v| {
        *v = s[i] * s[j] * arccos_order1_scalar(*v / (s[i] * s[j]));
    });
    Ok(out)
}

/// NNGP kernel matrix after `depth` recursion steps.
pub fn nngp_matrix(x: &DataMatrix, depth: usize) -> Result<KernelMatrix> {
    if depth == 0 {
        return Err(Error::InvalidParameter("depth must be >= 1".into()));
    }
    let mut k = x.values().dot(&x.values().t());
    for _ in 0..depth {
        k = f1_map(&k)?;
    }
    KernelMatrix::from_array(k, KernelKind::Nngp(depth))
}

/// NTK matrix after `depth` recursion steps.
pub fn ntk_matrix(x: &DataMatrix, depth: usize) -> Result<KernelMatrix> {
    if depth == 0 {
        return Err(Error::InvalidParameter("depth must be >= 1".into()));
    }
    let mut nngp = x.values().dot(&x.values().t());
    let mut ntk = nngp.clone();
    for _ in 0..depth {
        let f0 = f0_map(&nngp)?;
        nngp = f1_map(&nngp)?;
        Zip::from(&mut ntk)
            .and(&nngp)
            .and(&f0)
            .par_for_each(|t, &g, &d| *t = g + *t * d);
    }
    KernelMatrix::from_array(ntk, KernelKind::Ntk(depth))
}

/// Cross kernel between test and train points, matching `kind`.
///
/// The NNGP diagonal of a single point is constant across recursion steps
/// (`F1` fixes the diagonal), so the pairwise recursion only needs the cross
/// entries and the input norms.
pub fn cross_kernel(
    kind: KernelKind,
    x_test: &DataMatrix,
    x_train: &DataMatrix,
) -> Result<Array2<f64>> {
    match kind {
        KernelKind::ArcCosine0 => arc_cosine_0(x_test, x_train),
        KernelKind::ArcCosine1 => arc_cosine_1(x_test, x_train),
        KernelKind::Nngp(depth) | KernelKind::Ntk(depth) => {
            if x_test.cols() != x_train.cols() {
                return Err(Error::DimensionMismatch(format!(
                    "test has {} columns, train has {}",
                    x_test.cols(),
                    x_train.cols()
                )));
            }
            let ntest = row_norms(x_test.values())?;
            let ntrain = row_norms(x_train.values())?;
            let mut nngp = x_test.values().dot(&x_train.values().t());
            let want_ntk = matches!(kind, KernelKind::Ntk(_));
            let mut ntk = nngp.clone();
            for _ in 0..depth {
                Zip::indexed(&mut nngp)
                    .and(&mut ntk)
                    .par_for_each(|(i, j), g, t| {
                        let scale = ntest[i] * ntrain[j];
                        let c = (*g / scale).clamp(-1.0, 1.0);
                        let g_next = scale * arccos_order1_scalar(c);
                        *t = g_next + *t * arccos_order0_scalar(c);
                        *g = g_next;
                    });
            }
            Ok(if want_ntk { ntk } else { nngp })
        }
        KernelKind::Approx => Err(Error::ProvenanceMismatch(
            "cannot rebuild a cross kernel for an approximate kernel matrix".into(),
        )),
    }
}

/// Statistical dimension `s_lambda(K) = tr(K (K + lambda I)^-1)`.
///
/// Computed from the eigenvalues so that semidefinite (and slightly
/// indefinite, after rounding) inputs are handled; negative eigenvalues are
/// clamped to zero.
pub fn statistical_dimension(k: &KernelMatrix, lambda: f64) -> Result<f64> {
    if lambda <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let (eigs, _) = k.values().eigh(UPLO::Lower)?;
    Ok(eigs
        .iter()
        .map(|&mu| {
            let mu = mu.max(0.0);
            mu / (mu + lambda)
        })
        .sum())
}
