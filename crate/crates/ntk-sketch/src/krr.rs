//! Kernel ridge regression, exact (dual) and via random features (primal).
//!
//! With regularizer `lambda' * n` (the conventional scaling of the ridge
//! parameter by the sample count):
//!
//! ```text
//! dual:   alpha = (K + lambda' n I)^-1 y,      y_hat(x) = K(x, X) alpha
//! primal: beta  = (Phi^T Phi + lambda' n I)^-1 Phi^T y,  y_hat(x) = Phi(x) . beta
//! ```
//!
//! The primal solve is `O(n m^2 + m^3)` against the dual's `O(n^3)`; for
//! `K = Phi Phi^T` the two predictors are algebraically identical
//! (`Phi^T (Phi Phi^T + c I)^-1 = (Phi^T Phi + c I)^-1 Phi^T`).
//!
//! A primal model does not store the training features: it stores the
//! feature-map config and replays it by seed on test data, so train and test
//! share the identical random map and the model stays small.

use std::io::Read;
use std::path::Path;

use ndarray::prelude::*;
use ndarray_linalg::{Cholesky, SolveTriangular, UPLO};
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::kernels::{cross_kernel, KernelKind, KernelMatrix};
use crate::ntk_features::{
    ntk_random_features, nngp_random_features, FeatureBlock, FeatureProvenance,
};

/// Fitted ridge regression state.
#[derive(Debug, Clone)]
pub enum RidgeModel {
    Dual {
        alpha: Array1<f64>,
        train: DataMatrix,
        kernel_kind: KernelKind,
        lambda_prime: f64,
    },
    Primal {
        beta: Array1<f64>,
        source: Option<FeatureProvenance>,
        lambda_prime: f64,
    },
}

fn check_lambda(lambda_prime: f64) -> Result<()> {
    if !(lambda_prime > 0.0 && lambda_prime.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda' must be positive and finite, got {lambda_prime}"
        )));
    }
    Ok(())
}

/// Solves `A x = b` for symmetric positive-definite `A` via Cholesky.
fn spd_solve(a: &Array2<f64>, b: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let chol = a
        .cholesky(UPLO::Lower)
        .map_err(|e| Error::NotPositiveDefinite(format!("Cholesky factorization failed: {e}")))?;
    let half = chol.solve_triangular(UPLO::Lower, ndarray_linalg::Diag::NonUnit, &b.to_owned())?;
    let x = chol
        .t()
        .to_owned()
        .solve_triangular(UPLO::Upper, ndarray_linalg::Diag::NonUnit, &half)?;
    Ok(x)
}

fn residual_check(a: &Array2<f64>, x: &Array1<f64>, b: ArrayView1<'_, f64>) -> Result<()> {
    let r = a.dot(x) - &b;
    let rmax = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bmax = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if rmax > 1e-8 * bmax.max(1e-300) {
        return Err(Error::Numerical(format!(
            "ridge solve residual {rmax:.3e} exceeds 1e-8 * {bmax:.3e}"
        )));
    }
    Ok(())
}

/// Fits the dual model `alpha = (K + lambda' n I)^-1 y`.
///
/// `train` is retained so predictions can rebuild the cross kernel with the
/// same provenance.
pub fn fit_exact(
    kernel: &KernelMatrix,
    train: &DataMatrix,
    y: &LabelVector,
    lambda_prime: f64,
) -> Result<RidgeModel> {
    check_lambda(lambda_prime)?;
    let n = kernel.size();
    if train.rows() != n || y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "kernel is {n}x{n}, train has {} rows, labels {}",
            train.rows(),
            y.len()
        )));
    }
    let ridge = lambda_prime * n as f64;
    let a = kernel.values().to_owned() + Array2::<f64>::eye(n) * ridge;
    let alpha = spd_solve(&a, y.values())?;
    residual_check(&a, &alpha, y.values())?;
    Ok(RidgeModel::Dual {
        alpha,
        train: train.clone(),
        kernel_kind: kernel.kind(),
        lambda_prime,
    })
}

/// Fits the primal model through the `m x m` normal equations.
///
/// If the factorization fails, one retry adds a jitter of `1e-10 tr(G)/m`
/// to the diagonal and says so on stderr.
pub fn fit_features(phi: &FeatureBlock, y: &LabelVector, lambda_prime: f64) -> Result<RidgeModel> {
    check_lambda(lambda_prime)?;
    let n = phi.rows();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "features have {n} rows, labels {}",
            y.len()
        )));
    }
    let ridge = lambda_prime * n as f64;
    let m = phi.cols();
    let mut g = phi.values().t().dot(&phi.values()) + Array2::<f64>::eye(m) * ridge;
    let rhs = phi.values().t().dot(&y.values());
    let beta = match spd_solve(&g, rhs.view()) {
        Ok(beta) => beta,
        Err(first) => {
            let jitter = 1e-10 * g.diag().sum() / m as f64;
            eprintln!(
                "warning: normal-equation factorization failed ({first}); \
                 retrying with jitter {jitter:.3e}"
            );
            for i in 0..m {
                g[[i, i]] += jitter;
            }
            spd_solve(&g, rhs.view())?
        }
    };
    residual_check(&g, &beta, rhs.view())?;
    Ok(RidgeModel::Primal {
        beta,
        source: phi.source().cloned(),
        lambda_prime,
    })
}

impl RidgeModel {
    pub fn lambda_prime(&self) -> f64 {
        match self {
            RidgeModel::Dual { lambda_prime, .. } | RidgeModel::Primal { lambda_prime, .. } => {
                *lambda_prime
            }
        }
    }

    pub fn dual_coefficients(&self) -> Option<ArrayView1<'_, f64>> {
        match self {
            RidgeModel::Dual { alpha, .. } => Some(alpha.view()),
            RidgeModel::Primal { .. } => None,
        }
    }

    pub fn primal_coefficients(&self) -> Option<ArrayView1<'_, f64>> {
        match self {
            RidgeModel::Primal { beta, .. } => Some(beta.view()),
            RidgeModel::Dual { .. } => None,
        }
    }

    /// Predicts on raw inputs. Dual models rebuild the exact cross kernel;
    /// primal models regenerate test features from the stored seeds/config.
    pub fn predict(&self, x_test: &DataMatrix) -> Result<LabelVector> {
        match self {
            RidgeModel::Dual {
                alpha,
                train,
                kernel_kind,
                ..
            } => {
                let k_cross = cross_kernel(*kernel_kind, x_test, train)?;
                LabelVector::from_array(k_cross.dot(alpha))
            }
            RidgeModel::Primal { source, .. } => {
                let phi_test = match source {
                    Some(FeatureProvenance::NtkPipeline(cfg)) => ntk_random_features(x_test, cfg)?,
                    Some(FeatureProvenance::NngpPipeline(cfg)) => {
                        nngp_random_features(x_test, cfg)?
                    }
                    None => {
                        return Err(Error::ProvenanceMismatch(
                            "primal model has no feature replay state; \
                             use predict_with_features"
                                .into(),
                        ))
                    }
                };
                self.predict_with_features(&phi_test)
            }
        }
    }

    /// Predicts from precomputed test features, enforcing that they were
    /// generated under the same random map as the training features.
    pub fn predict_with_features(&self, phi_test: &FeatureBlock) -> Result<LabelVector> {
        let RidgeModel::Primal { beta, source, .. } = self else {
            return Err(Error::InvalidParameter(
                "feature-space prediction requires a primal model".into(),
            ));
        };
        match (source, phi_test.source()) {
            (Some(a), Some(b)) if a == b => {}
            (None, None) => {} // caller manages the shared map
            _ => {
                return Err(Error::ProvenanceMismatch(
                    "test features were generated under a different seed/config \
                     than the training features"
                        .into(),
                ))
            }
        }
        if phi_test.cols() != beta.len() {
            return Err(Error::DimensionMismatch(format!(
                "test features have {} columns, model expects {}",
                phi_test.cols(),
                beta.len()
            )));
        }
        LabelVector::from_array(phi_test.values().dot(beta))
    }

    /// Serializes the model as `<stem>.json` (manifest) plus `<stem>.bin`
    /// (coefficient blob: little-endian f64 sections, each prefixed with a
    /// little-endian u64 length).
    pub fn save(&self, stem: &Path) -> Result<()> {
        let manifest = match self {
            RidgeModel::Dual {
                train,
                kernel_kind,
                lambda_prime,
                ..
            } => ModelManifest {
                mode: "dual".into(),
                lambda_prime: *lambda_prime,
                kernel_kind: Some(*kernel_kind),
                feature_source: None,
                train_rows: train.rows(),
                train_cols: train.cols(),
            },
            RidgeModel::Primal {
                source,
                lambda_prime,
                ..
            } => ModelManifest {
                mode: "primal".into(),
                lambda_prime: *lambda_prime,
                kernel_kind: None,
                feature_source: source.clone(),
                train_rows: 0,
                train_cols: 0,
            },
        };
        let json_path = stem.with_extension("json");
        let bin_path = stem.with_extension("bin");
        std::fs::write(
            &json_path,
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )
        .map_err(|source| Error::Io {
            path: json_path.display().to_string(),
            source,
        })?;
        let mut blob: Vec<u8> = Vec::new();
        let mut write_section = |values: &[f64]| {
            blob.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        };
        match self {
            RidgeModel::Dual { alpha, train, .. } => {
                write_section(alpha.as_slice().expect("contiguous"));
                let flat: Vec<f64> = train.values().iter().copied().collect();
                write_section(&flat);
            }
            RidgeModel::Primal { beta, .. } => {
                write_section(beta.as_slice().expect("contiguous"));
            }
        }
        std::fs::write(&bin_path, blob).map_err(|source| Error::Io {
            path: bin_path.display().to_string(),
            source,
        })
    }

    pub fn load(stem: &Path) -> Result<RidgeModel> {
        let json_path = stem.with_extension("json");
        let bin_path = stem.with_extension("bin");
        let manifest: ModelManifest = serde_json::from_str(
            &std::fs::read_to_string(&json_path).map_err(|source| Error::Io {
                path: json_path.display().to_string(),
                source,
            })?,
        )
        .map_err(|e| Error::Parse {
            row: 0,
            col: 0,
            message: format!("bad model manifest: {e}"),
        })?;
        let mut file = std::fs::File::open(&bin_path).map_err(|source| Error::Io {
            path: bin_path.display().to_string(),
            source,
        })?;
        let mut blob = Vec::new();
        file.read_to_end(&mut blob).map_err(|source| Error::Io {
            path: bin_path.display().to_string(),
            source,
        })?;
        let mut offset = 0usize;
        let mut read_section = || -> Result<Vec<f64>> {
            if offset + 8 > blob.len() {
                return Err(Error::Parse {
                    row: 0,
                    col: offset,
                    message: "truncated coefficient blob".into(),
                });
            }
            let len = u64::from_le_bytes(blob[offset..offset + 8].try_into().unwrap()) as usize;
            offset += 8;
            if offset + 8 * len > blob.len() {
                return Err(Error::Parse {
                    row: 0,
                    col: offset,
                    message: "truncated coefficient section".into(),
                });
            }
            let mut out = Vec::with_capacity(len);
            for k in 0..len {
                out.push(f64::from_le_bytes(
                    blob[offset + 8 * k..offset + 8 * (k + 1)].try_into().unwrap(),
                ));
            }
            offset += 8 * len;
            Ok(out)
        };
        match manifest.mode.as_str() {
            "dual" => {
                let alpha = read_section()?;
                let flat = read_section()?;
                let train = DataMatrix::from_array(
                    Array2::from_shape_vec((manifest.train_rows, manifest.train_cols), flat)
                        .map_err(|e| Error::Parse {
                            row: 0,
                            col: 0,
                            message: format!("bad training-matrix shape: {e}"),
                        })?,
                )?;
                Ok(RidgeModel::Dual {
                    alpha: Array1::from_vec(alpha),
                    train,
                    kernel_kind: manifest.kernel_kind.ok_or_else(|| Error::Parse {
                        row: 0,
                        col: 0,
                        message: "dual manifest missing kernel kind".into(),
                    })?,
                    lambda_prime: manifest.lambda_prime,
                })
            }
            "primal" => Ok(RidgeModel::Primal {
                beta: Array1::from_vec(read_section()?),
                source: manifest.feature_source,
                lambda_prime: manifest.lambda_prime,
            }),
            other => Err(Error::Parse {
                row: 0,
                col: 0,
                message: format!("unknown model mode {other:?}"),
            }),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelManifest {
    mode: String,
    lambda_prime: f64,
    kernel_kind: Option<KernelKind>,
    feature_source: Option<FeatureProvenance>,
    train_rows: usize,
    train_cols: usize,
}

/// Mean squared error between predictions and ground truth.
pub fn mse(predictions: &LabelVector, truth: &LabelVector) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "prediction length {} vs truth {}",
            predictions.len(),
            truth.len()
        )));
    }
    let n = predictions.len() as f64;
    Ok(predictions
        .values()
        .iter()
        .zip(truth.values().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}
