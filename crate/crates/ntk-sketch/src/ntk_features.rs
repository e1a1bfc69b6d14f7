//! Layered NTK random features via CountSketch.
//!
//! One layer of the pipeline maps the running order-1 features `Psi` and the
//! running NTK features `Phi` as
//!
//! ```text
//! Lambda_l = sqrt(2/m0) Step(W^T Psi_{l-1})          (order-0 block)
//! Psi_l    = sqrt(2/m1) ReLU(W'^T Psi_{l-1})         (order-1 block)
//! Gamma_l  = ifft(fft(C0(Lambda_l)) .* fft(C1(Phi_{l-1})))
//! Phi_l    = [Psi_l, Gamma_l]
//! ```
//!
//! starting from `Phi_0 = Psi_0 = x`, with fresh Gaussian draws and fresh,
//! mutually independent CountSketch tables per layer. The output width is
//! `m1 + m_cs` regardless of depth or input dimension, and for one layer the
//! expected Gram is exactly the depth-1 NTK `A1 + A0 .* (X X^T)`. Total cost
//! is `O(n (d (m0 + m1) + m_cs log m_cs) L)`.
//!
//! The `use_gibbs` switch replaces the order-1 block with the
//! leverage-weighted features of [`crate::arccos_features`]; the order-0
//! block stays plain (plain sampling is already leverage-optimal for order 0).
//!
//! [`ntk_naive_features`] is the tensor-product construction the sketch
//! replaces: `Phi_{l+1} = [Psi_{l+1}, a0(Psi_l) (x) Phi_l]`, whose width
//! `(sum_k m0^k) m1 + m0^L d` grows exponentially with depth. It is kept (at
//! test scale) as the reference for accuracy-per-dimension comparisons.

use ndarray::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arccos_features::{
    features_order0, features_order1, gibbs_sample_directions, weighted_features_order1,
    FeatureOrder, GaussianFeatureSpec,
};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::seeding::{
    derive_seed, ROLE_RELU_WEIGHTS, ROLE_SKETCH_LEFT, ROLE_SKETCH_RIGHT, ROLE_STEP_WEIGHTS,
};
use crate::sketch::{tensor_sketch_rows, CountSketchSpec, SketchPair};

/// Which block of the pipeline a feature matrix is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Psi,
    Lambda,
    Gamma,
    Phi,
}

/// Configuration of the layered feature map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtkFeatureConfig {
    pub depth: usize,
    pub m0: usize,
    pub m1: usize,
    pub m_cs: usize,
    pub use_gibbs: bool,
    pub gibbs_sweeps: usize,
    pub normalize_output: bool,
    pub seed: u64,
}

impl NtkFeatureConfig {
    pub fn new(depth: usize, m0: usize, m1: usize, m_cs: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            depth,
            m0,
            m1,
            m_cs,
            use_gibbs: false,
            gibbs_sweeps: 1,
            normalize_output: false,
            seed,
        };
        cfg.validate(false)?;
        Ok(cfg)
    }

    /// Splits a total feature budget as `m_cs = m/2`, `m0 = m1 = m - m_cs`.
    pub fn from_total_budget(depth: usize, m: usize, seed: u64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter(
                "total feature budget must be >= 2".into(),
            ));
        }
        let m_cs = m / 2;
        let m01 = m - m_cs;
        Self::new(depth, m01, m01, m_cs, seed)
    }

    pub fn with_gibbs(mut self, sweeps: usize) -> Self {
        self.use_gibbs = true;
        self.gibbs_sweeps = sweeps;
        self
    }

    fn validate(&self, nngp_only: bool) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidParameter("depth must be >= 1".into()));
        }
        if self.m0 == 0 || self.m1 == 0 {
            return Err(Error::InvalidParameter("m0 and m1 must be >= 1".into()));
        }
        // m_cs = 0 is only meaningful when no sketched block is produced.
        if self.m_cs == 0 && !nngp_only {
            return Err(Error::InvalidParameter(
                "m_cs must be >= 1 unless only NNGP features are requested".into(),
            ));
        }
        Ok(())
    }
}

/// A matrix of random features plus the metadata needed to reproduce it.
#[derive(Debug, Clone)]
pub struct FeatureBlock {
    values: Array2<f64>,
    layer: usize,
    kind: FeatureKind,
    source: Option<FeatureProvenance>,
}

/// How a feature block was generated; enough to replay the identical random
/// map on new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureProvenance {
    NtkPipeline(NtkFeatureConfig),
    NngpPipeline(NtkFeatureConfig),
}

impl FeatureBlock {
    pub fn new(values: Array2<f64>, layer: usize, kind: FeatureKind) -> Result<Self> {
        for v in values.iter() {
            if !v.is_finite() {
                return Err(Error::Numerical("non-finite feature entry".into()));
            }
        }
        Ok(Self {
            values,
            layer,
            kind,
            source: None,
        })
    }

    fn with_source(mut self, source: FeatureProvenance) -> Self {
        self.source = Some(source);
        self
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn source(&self) -> Option<&FeatureProvenance> {
        self.source.as_ref()
    }

    /// Empirical kernel `Phi Phi^T`.
    pub fn gram(&self) -> Array2<f64> {
        self.values.dot(&self.values.t())
    }
}

fn normalize_feature_rows(mut values: Array2<f64>) -> Result<Array2<f64>> {
    for (i, mut row) in values.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNormRow(i));
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(values)
}

/// One pipeline layer shared by the NTK and NNGP entry points.
struct LayerState {
    psi: Array2<f64>,
    phi: Array2<f64>,
}

fn pipeline_layer(
    state: LayerState,
    layer: usize,
    cfg: &NtkFeatureConfig,
    with_sketch: bool,
) -> Result<LayerState> {
    let prev_dim = state.psi.ncols();
    let lambda_spec = GaussianFeatureSpec::new(
        prev_dim,
        cfg.m0,
        FeatureOrder::Step,
        derive_seed(cfg.seed, &[layer as u64, ROLE_STEP_WEIGHTS]),
    )?;
    let psi_seed = derive_seed(cfg.seed, &[layer as u64, ROLE_RELU_WEIGHTS]);
    let psi = if cfg.use_gibbs {
        let dirs = gibbs_sample_directions(prev_dim, cfg.m1, cfg.gibbs_sweeps, psi_seed)?;
        weighted_features_order1(state.psi.view(), &dirs)?
    } else {
        let spec = GaussianFeatureSpec::new(prev_dim, cfg.m1, FeatureOrder::Relu, psi_seed)?;
        features_order1(state.psi.view(), &spec)?
    };
    if !with_sketch {
        return Ok(LayerState {
            psi: psi.into_values(),
            phi: state.phi,
        });
    }
    let lambda = features_order0(state.psi.view(), &lambda_spec)?;
    let pair = SketchPair::from_specs(
        CountSketchSpec::new(
            cfg.m0,
            cfg.m_cs,
            derive_seed(cfg.seed, &[layer as u64, ROLE_SKETCH_LEFT]),
        )?,
        CountSketchSpec::new(
            state.phi.ncols(),
            cfg.m_cs,
            derive_seed(cfg.seed, &[layer as u64, ROLE_SKETCH_RIGHT]),
        )?,
    )?;
    let gamma = tensor_sketch_rows(&pair, lambda.values(), state.phi.view())?;
    let psi = psi.into_values();
    let phi = ndarray::concatenate(Axis(1), &[psi.view(), gamma.view()])
        .expect("row counts match by construction");
    Ok(LayerState { psi, phi })
}

/// Runs the full pipeline and returns `Phi` at the final layer
/// (`n x (m1 + m_cs)`).
pub fn ntk_random_features(x: &DataMatrix, cfg: &NtkFeatureConfig) -> Result<FeatureBlock> {
    cfg.validate(false)?;
    let mut state = LayerState {
        psi: x.values().to_owned(),
        phi: x.values().to_owned(),
    };
    for layer in 1..=cfg.depth {
        state = pipeline_layer(state, layer, cfg, true)?;
    }
    let phi = if cfg.normalize_output {
        normalize_feature_rows(state.phi)?
    } else {
        state.phi
    };
    debug_assert_eq!(phi.ncols(), cfg.m1 + cfg.m_cs);
    Ok(FeatureBlock::new(phi, cfg.depth, FeatureKind::Phi)?
        .with_source(FeatureProvenance::NtkPipeline(cfg.clone())))
}

/// Runs only the order-1 chain and returns `Psi` at the final layer
/// (`n x m1`); `m_cs` is ignored.
pub fn nngp_random_features(x: &DataMatrix, cfg: &NtkFeatureConfig) -> Result<FeatureBlock> {
    cfg.validate(true)?;
    let mut state = LayerState {
        psi: x.values().to_owned(),
        phi: Array2::zeros((x.rows(), 1)),
    };
    for layer in 1..=cfg.depth {
        state = pipeline_layer(state, layer, cfg, false)?;
    }
    let psi = if cfg.normalize_output {
        normalize_feature_rows(state.psi)?
    } else {
        state.psi
    };
    Ok(FeatureBlock::new(psi, cfg.depth, FeatureKind::Psi)?
        .with_source(FeatureProvenance::NngpPipeline(cfg.clone())))
}

/// Output width of the naive tensor-product construction.
pub fn naive_feature_dim(depth: usize, m0: usize, m1: usize, d: usize) -> u128 {
    let m0 = m0 as u128;
    let mut geom = 0u128; // sum_{k=0}^{depth-1} m0^k
    let mut pow = 1u128;
    for _ in 0..depth {
        geom = geom.saturating_add(pow);
        pow = pow.saturating_mul(m0);
    }
    geom.saturating_mul(m1 as u128)
        .saturating_add(pow.saturating_mul(d as u128))
}

/// Row-wise Kronecker product `out[i] = a[i] (x) b[i]`.
fn row_kron(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let (n, da, db) = (a.nrows(), a.ncols(), b.ncols());
    let mut out = Array2::zeros((n, da * db));
    for i in 0..n {
        for j in 0..da {
            let aij = a[[i, j]];
            if aij == 0.0 {
                continue;
            }
            for k in 0..db {
                out[[i, j * db + k]] = aij * b[[i, k]];
            }
        }
    }
    out
}

/// Explicit tensor-product features, no sketching; width is exponential in
/// depth and guarded at 10^6 columns.
pub fn ntk_naive_features(
    x: &DataMatrix,
    depth: usize,
    m0: usize,
    m1: usize,
    seed: u64,
) -> Result<FeatureBlock> {
    if depth == 0 || m0 == 0 || m1 == 0 {
        return Err(Error::InvalidParameter(
            "depth, m0 and m1 must be >= 1".into(),
        ));
    }
    let dim = naive_feature_dim(depth, m0, m1, x.cols());
    if dim > 1_000_000 {
        return Err(Error::SizeGuard(format!(
            "naive construction would produce {dim} columns (limit 10^6)"
        )));
    }
    let mut psi = x.values().to_owned();
    let mut phi = x.values().to_owned();
    for layer in 1..=depth {
        let prev_dim = psi.ncols();
        let a0_spec = GaussianFeatureSpec::new(
            prev_dim,
            m0,
            FeatureOrder::Step,
            derive_seed(seed, &[layer as u64, ROLE_STEP_WEIGHTS]),
        )?;
        let a1_spec = GaussianFeatureSpec::new(
            prev_dim,
            m1,
            FeatureOrder::Relu,
            derive_seed(seed, &[layer as u64, ROLE_RELU_WEIGHTS]),
        )?;
        let lambda = features_order0(psi.view(), &a0_spec)?;
        let next_psi = features_order1(psi.view(), &a1_spec)?.into_values();
        let tensor = row_kron(lambda.values(), phi.view());
        phi = ndarray::concatenate(Axis(1), &[next_psi.view(), tensor.view()])
            .expect("row counts match");
        psi = next_psi;
    }
    FeatureBlock::new(phi, depth, FeatureKind::Phi)
}
