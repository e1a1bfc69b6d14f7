//! Random features for arc-cosine kernels of orders 0 and 1.
//!
//! Plain features draw Gaussian directions `w ~ N(0, I_d)`:
//!
//! ```text
//! a0(x) = sqrt(2/m0) Step(W^T x)     E<a0(x), a0(y)> = A0(x, y)
//! a1(x) = sqrt(2/m1) ReLU(W'^T x)    E<a1(x), a1(y)> = A1(x, y)
//! ```
//!
//! with `Step(0) := 0` and `ReLU'(0) := 0` (a measure-zero tie-break).
//!
//! The leverage-weighted order-1 variant samples directions from the
//! norm-weighted Gaussian density
//!
//! ```text
//! q(v) = |v|^2 exp(-|v|^2 / 2) / ((2 pi)^{d/2} d)
//! ```
//!
//! and reweights columns as `sqrt(2d/m) ReLU(X v_k) / |v_k|`, which keeps the
//! Gram unbiased for `A1` while bounding every column norm by `|X|_2`.
//! Sampling `q` exactly is awkward, so each direction runs a short Gibbs
//! sweep: the conditional of one coordinate given the others (with
//! `z = sum of the other squared coordinates`) has CDF
//!
//! ```text
//! Phi_c(x; z) = (erf(x / sqrt 2) + 1) / 2 - x exp(-x^2/2) / (sqrt(2 pi) (z + 1))
//! ```
//!
//! inverted here by bisection with Newton refinement (`Phi_c` is strictly
//! increasing: its derivative is `phi(x) (z + x^2) / (z + 1)`). One sweep is
//! enough in practice.

use ndarray::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ntk_features::{FeatureBlock, FeatureKind};
use crate::seeding::{derive_seed, rng_from_seed, ROLE_GIBBS_CHAIN};

/// Which arc-cosine order a plain Gaussian feature map targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureOrder {
    Step,
    Relu,
}

/// Specification of a plain Gaussian feature map.
#[derive(Debug, Clone)]
pub struct GaussianFeatureSpec {
    pub input_dim: usize,
    pub count: usize,
    pub order: FeatureOrder,
    pub seed: u64,
}

impl GaussianFeatureSpec {
    pub fn new(input_dim: usize, count: usize, order: FeatureOrder, seed: u64) -> Result<Self> {
        if input_dim == 0 || count == 0 {
            return Err(Error::InvalidParameter(
                "feature dimensions must be >= 1".into(),
            ));
        }
        Ok(Self {
            input_dim,
            count,
            order,
            seed,
        })
    }

    /// Draws the `input_dim x count` Gaussian direction matrix.
    pub fn draw_directions(&self) -> Array2<f64> {
        let mut rng = rng_from_seed(self.seed);
        Array2::from_shape_fn((self.input_dim, self.count), |_| {
            StandardNormal.sample(&mut rng)
        })
    }
}

fn check_input(x: ArrayView2<'_, f64>, dim: usize) -> Result<()> {
    if x.ncols() != dim {
        return Err(Error::DimensionMismatch(format!(
            "data has {} columns, feature map expects {}",
            x.ncols(),
            dim
        )));
    }
    Ok(())
}

/// Order-0 features `sqrt(2/m) Step(X W)`; entries are 0 or `sqrt(2/m)`.
pub fn features_order0(x: ArrayView2<'_, f64>, spec: &GaussianFeatureSpec) -> Result<FeatureBlock> {
    if spec.order != FeatureOrder::Step {
        return Err(Error::InvalidParameter(
            "features_order0 requires an order-0 spec".into(),
        ));
    }
    check_input(x, spec.input_dim)?;
    let scale = (2.0 / spec.count as f64).sqrt();
    let mut z = x.dot(&spec.draw_directions());
    z.par_mapv_inplace(|v| if v > 0.0 { scale } else { 0.0 });
    FeatureBlock::new(z, 0, FeatureKind::Lambda)
}

/// Order-1 features `sqrt(2/m) ReLU(X W)`; entries are nonnegative.
pub fn features_order1(x: ArrayView2<'_, f64>, spec: &GaussianFeatureSpec) -> Result<FeatureBlock> {
    if spec.order != FeatureOrder::Relu {
        return Err(Error::InvalidParameter(
            "features_order1 requires an order-1 spec".into(),
        ));
    }
    check_input(x, spec.input_dim)?;
    let scale = (2.0 / spec.count as f64).sqrt();
    let mut z = x.dot(&spec.draw_directions());
    z.par_mapv_inplace(|v| if v > 0.0 { scale * v } else { 0.0 });
    FeatureBlock::new(z, 0, FeatureKind::Psi)
}

/// Directions drawn (approximately) from the norm-weighted Gaussian `q`.
#[derive(Debug, Clone)]
pub struct WeightedDirectionSet {
    directions: Array2<f64>, // column k = v_k
    norms: Vec<f64>,
    pub gibbs_sweeps: usize,
    pub seed: u64,
}

impl WeightedDirectionSet {
    /// Wraps externally sampled directions (columns); used by the exact-q
    /// rejection oracle in the test suite.
    pub fn from_directions(directions: Array2<f64>, seed: u64) -> Result<Self> {
        let mut norms = Vec::with_capacity(directions.ncols());
        for (k, col) in directions.columns().into_iter().enumerate() {
            let n = col.dot(&col).sqrt();
            if n == 0.0 {
                return Err(Error::ZeroNormDirection(k));
            }
            norms.push(n);
        }
        Ok(Self {
            directions,
            norms,
            gibbs_sweeps: 0,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.directions.nrows()
    }

    pub fn count(&self) -> usize {
        self.directions.ncols()
    }

    pub fn directions(&self) -> ArrayView2<'_, f64> {
        self.directions.view()
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }
}

/// Normal CDF `(erf(x / sqrt 2) + 1) / 2`.
fn normal_cdf(x: f64) -> f64 {
    (libm::erf(x / std::f64::consts::SQRT_2) + 1.0) / 2.0
}

/// Conditional CDF of one coordinate given the sum of squares `z` of the rest.
pub fn conditional_cdf(x: f64, z: f64) -> f64 {
    normal_cdf(x)
        - x * (-x * x / 2.0).exp() / ((2.0 * std::f64::consts::PI).sqrt() * (z + 1.0))
}

/// Inverts [`conditional_cdf`] in `u`, to `1e-12` in u-space.
///
/// The CDF is strictly increasing and the tails beyond +-12 carry less than
/// 1e-30 mass, so a bisection bracket on `[-12, 12]` always contains the
/// root; Newton steps accelerate convergence once inside.
pub fn invert_conditional_cdf(u: f64, z: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidParameter(format!("u must be in [0,1], got {u}")));
    }
    if z < 0.0 {
        return Err(Error::InvalidParameter(format!("z must be >= 0, got {z}")));
    }
    let (mut lo, mut hi) = (-12.0f64, 12.0f64);
    if u <= conditional_cdf(lo, z) {
        return Ok(lo);
    }
    if u >= conditional_cdf(hi, z) {
        return Ok(hi);
    }
    let mut x = 0.0f64;
    for _ in 0..160 {
        let f = conditional_cdf(x, z) - u;
        if f.abs() <= 1e-12 {
            return Ok(x);
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let phi = (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let deriv = phi * (z + x * x) / (z + 1.0);
        let width = hi - lo;
        let newton = x - f / deriv;
        // For z < 1 the conditional density is bimodal and a raw Newton step
        // can 2-cycle across the inflection; only accept candidates landing
        // in the middle half of the bracket so every iteration shrinks it by
        // at least a quarter.
        let (guard_lo, guard_hi) = (lo + 0.25 * width, hi - 0.25 * width);
        x = if deriv > 0.0 && newton >= guard_lo && newton <= guard_hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::Numerical(
        "conditional CDF inversion did not converge".into(),
    ))
}

/// Samples `m` directions with `sweeps` full Gibbs sweeps each.
///
/// `sweeps = 0` returns the `N(0, I)` initialization. Chains are independent
/// and seeded per index, so the result does not depend on scheduling.
pub fn gibbs_sample_directions(
    d: usize,
    m: usize,
    sweeps: usize,
    seed: u64,
) -> Result<WeightedDirectionSet> {
    if d == 0 || m == 0 {
        return Err(Error::InvalidParameter("d and m must be >= 1".into()));
    }
    let chains: Vec<Result<Vec<f64>>> = (0..m)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_from_seed(derive_seed(seed, &[ROLE_GIBBS_CHAIN, k as u64]));
            let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            for _ in 0..sweeps {
                let mut sum_sq: f64 = v.iter().map(|a| a * a).sum();
                for j in 0..d {
                    let z = (sum_sq - v[j] * v[j]).max(0.0);
                    let u: f64 = rng.gen();
                    let newv = invert_conditional_cdf(u, z)?;
                    v[j] = newv;
                    sum_sq = z + newv * newv;
                }
            }
            Ok(v)
        })
        .collect();
    let mut directions = Array2::zeros((d, m));
    for (k, chain) in chains.into_iter().enumerate() {
        let chain = chain?;
        for (j, val) in chain.into_iter().enumerate() {
            directions[[j, k]] = val;
        }
    }
    let set = WeightedDirectionSet::from_directions(directions, seed)?;
    Ok(WeightedDirectionSet {
        gibbs_sweeps: sweeps,
        ..set
    })
}

/// Reference sampler for the norm-weighted density `q`: proposal `N(0, I)`,
/// acceptance ratio `|v|^2 / cap` with `cap` large enough that the clipped
/// tail carries under 1e-17 mass (chi-square tail bound on `|v|^2`).
///
/// Exact up to that negligible truncation, but slow (acceptance rate `d/cap`):
/// it exists to validate the Gibbs sampler end to end and is not used by the
/// feature pipeline.
pub fn exact_q_directions_rejection(
    d: usize,
    m: usize,
    seed: u64,
) -> Result<WeightedDirectionSet> {
    if d == 0 || m == 0 {
        return Err(Error::InvalidParameter("d and m must be >= 1".into()));
    }
    if d > 8 {
        return Err(Error::InvalidParameter(
            "rejection sampler is a low-dimensional reference (d <= 8)".into(),
        ));
    }
    let cap = 100.0; // P(chi2_{d+2} > 100) < 1e-17 for d <= 8
    let mut rng = rng_from_seed(seed);
    let mut directions = Array2::zeros((d, m));
    for k in 0..m {
        loop {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm_sq: f64 = v.iter().map(|a| a * a).sum();
            let u: f64 = rng.gen();
            if u < (norm_sq / cap).min(1.0) {
                for (j, val) in v.into_iter().enumerate() {
                    directions[[j, k]] = val;
                }
                break;
            }
        }
    }
    WeightedDirectionSet::from_directions(directions, seed)
}

/// Leverage-weighted order-1 features
/// `sqrt(2d/m) [ReLU(X v_1)/|v_1|, ..., ReLU(X v_m)/|v_m|]`.
pub fn weighted_features_order1(
    x: ArrayView2<'_, f64>,
    dirs: &WeightedDirectionSet,
) -> Result<FeatureBlock> {
    check_input(x, dirs.dim())?;
    let d = dirs.dim() as f64;
    let m = dirs.count() as f64;
    let base = (2.0 * d / m).sqrt();
    let mut z = x.dot(&dirs.directions());
    for (k, mut col) in z.columns_mut().into_iter().enumerate() {
        let scale = base / dirs.norms[k];
        col.mapv_inplace(|v| if v > 0.0 { scale * v } else { 0.0 });
    }
    FeatureBlock::new(z, 0, FeatureKind::Psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{arc_cosine_0_views, arc_cosine_1_views};
    use crate::synthetic::unit_sphere_data;
    use approx::assert_abs_diff_eq;

    #[test]
    fn order0_entries_and_row_norm_bound() {
        let x = unit_sphere_data(5, 4, 3).unwrap();
        let spec = GaussianFeatureSpec::new(4, 64, FeatureOrder::Step, 1).unwrap();
        let f = features_order0(x.values(), &spec).unwrap();
        let scale = (2.0 / 64.0f64).sqrt();
        for &v in f.values().iter() {
            assert!(v == 0.0 || (v - scale).abs() < 1e-15);
        }
        for row in f.values().rows() {
            assert!(row.dot(&row) <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn step_at_zero_contributes_nothing() {
        // A zero input row makes every projection exactly zero.
        let x = array![[0.0, 0.0, 0.0]];
        let spec = GaussianFeatureSpec::new(3, 16, FeatureOrder::Step, 5).unwrap();
        let f = features_order0(x.view(), &spec).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
        let spec1 = GaussianFeatureSpec::new(3, 16, FeatureOrder::Relu, 5).unwrap();
        let f1 = features_order1(x.view(), &spec1).unwrap();
        assert!(f1.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_features_are_positively_homogeneous() {
        let x = unit_sphere_data(3, 5, 9).unwrap();
        let x2 = x.values().mapv(|v| 2.0 * v);
        let spec = GaussianFeatureSpec::new(5, 32, FeatureOrder::Relu, 7).unwrap();
        let f = features_order1(x.values(), &spec).unwrap();
        let f2 = features_order1(x2.view(), &spec).unwrap();
        for (a, b) in f.values().iter().zip(f2.values().iter()) {
            // Scaling by 2 is exact in floating point.
            assert_eq!(2.0 * a, *b);
        }
    }

    fn gram_mean_and_se(
        phi: ArrayView2<'_, f64>,
        i: usize,
        j: usize,
    ) -> (f64, f64) {
        // Each feature column contributes an independent sample of the kernel
        // estimate; mean over columns is the Gram entry.
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

    #[test]
    fn order0_gram_matches_a0_within_3_se() {
        let x = unit_sphere_data(5, 6, 21).unwrap();
        let spec = GaussianFeatureSpec::new(6, 40_000, FeatureOrder::Step, 2).unwrap();
        let f = features_order0(x.values(), &spec).unwrap();
        let a0 = arc_cosine_0_views(x.values(), x.values()).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let (mean, se) = gram_mean_and_se(f.values(), i, j);
                assert!(
                    (mean - a0[[i, j]]).abs() <= 3.0 * se + 1e-9,
                    "({i},{j}): est {mean} exact {} se {se}",
                    a0[[i, j]]
                );
            }
        }
    }

    #[test]
    fn order1_gram_matches_a1_within_3_se() {
        let x = unit_sphere_data(5, 6, 22).unwrap();
        let spec = GaussianFeatureSpec::new(6, 100_000, FeatureOrder::Relu, 3).unwrap();
        let f = features_order1(x.values(), &spec).unwrap();
        let a1 = arc_cosine_1_views(x.values(), x.values()).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let (mean, se) = gram_mean_and_se(f.values(), i, j);
                assert!(
                    (mean - a1[[i, j]]).abs() <= 3.0 * se + 1e-9,
                    "({i},{j}): est {mean} exact {} se {se}",
                    a1[[i, j]]
                );
            }
        }
    }

    #[test]
    fn conditional_cdf_at_zero_is_half() {
        for z in [0.0, 0.3, 1.0, 10.0, 1e3] {
            assert_abs_diff_eq!(conditional_cdf(0.0, z), 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(invert_conditional_cdf(0.5, z).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn conditional_cdf_is_monotone() {
        for z in [0.0, 0.5, 2.0, 100.0] {
            let mut prev = conditional_cdf(-12.0, z);
            let mut x = -12.0;
            while x <= 12.0 {
                let cur = conditional_cdf(x, z);
                assert!(cur >= prev - 1e-15, "z={z} x={x}");
                prev = cur;
                x += 0.05;
            }
        }
    }

    #[test]
    fn cdf_inversion_round_trips() {
        for z in [0.0, 1e-3, 0.7, 5.0, 100.0, 1e3] {
            for &u in &[1e-6, 1e-3, 0.1, 0.25, 0.5, 0.75, 0.9, 0.999, 1.0 - 1e-6] {
                let x = invert_conditional_cdf(u, z).unwrap();
                assert!(
                    (conditional_cdf(x, z) - u).abs() <= 1e-10,
                    "u={u} z={z} x={x}"
                );
            }
        }
    }

    #[test]
    fn one_dimensional_chain_has_fourth_moment_three() {
        // For d = 1 the conditional is the exact marginal (z = 0), so a single
        // sweep samples q exactly; under q, E[v^2] = E_p[v^4] = 3.
        let m = 100_000;
        let dirs = gibbs_sample_directions(1, m, 1, 123).unwrap();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for &v in dirs.directions().iter() {
            let s = v * v;
            sum += s;
            sumsq += s * s;
        }
        let mean = sum / m as f64;
        let var = (sumsq / m as f64 - mean * mean).max(0.0);
        let se = (var / m as f64).sqrt();
        assert!((mean - 3.0).abs() <= 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn gibbs_zero_sweeps_is_standard_normal_init() {
        let m = 50_000;
        let d = 4;
        let dirs = gibbs_sample_directions(d, m, 0, 9).unwrap();
        let mean_norm_sq: f64 =
            dirs.norms().iter().map(|n| n * n).sum::<f64>() / m as f64;
        // E|v|^2 = d for N(0, I); generous 5-sigma band (var of |v|^2 is 2d).
        let se = (2.0 * d as f64 / m as f64).sqrt();
        assert!((mean_norm_sq - d as f64).abs() <= 5.0 * se);
    }

    #[test]
    fn gibbs_is_deterministic_per_seed() {
        let a = gibbs_sample_directions(3, 50, 2, 77).unwrap();
        let b = gibbs_sample_directions(3, 50, 2, 77).unwrap();
        assert_eq!(a.directions(), b.directions());
        let c = gibbs_sample_directions(3, 50, 2, 78).unwrap();
        assert_ne!(a.directions(), c.directions());
    }

    #[test]
    fn unit_norm_directions_reduce_to_scaled_plain_features() {
        let x = unit_sphere_data(4, 3, 15).unwrap();
        // Hand-built unit directions.
        let dirs = Array2::from_shape_vec(
            (3, 2),
            vec![1.0, 0.0, 0.0, 0.6, 0.0, 0.8],
        )
        .unwrap();
        let set = WeightedDirectionSet::from_directions(dirs.clone(), 0).unwrap();
        let weighted = weighted_features_order1(x.values(), &set).unwrap();
        let plain_scale = (2.0 / 2.0f64).sqrt(); // sqrt(2/m), m = 2
        let d_scale = 3.0f64.sqrt();
        let z = x.values().dot(&dirs);
        for i in 0..4 {
            for k in 0..2 {
                let plain = plain_scale * z[[i, k]].max(0.0);
                assert_abs_diff_eq!(
                    weighted.values()[[i, k]],
                    d_scale * plain,
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn empirical_grams_are_positive_semidefinite() {
        use ndarray_linalg::{Eigh, UPLO};
        let x = unit_sphere_data(6, 4, 77).unwrap();
        let spec = GaussianFeatureSpec::new(4, 64, FeatureOrder::Relu, 3).unwrap();
        let f = features_order1(x.values(), &spec).unwrap();
        let gram = f.values().dot(&f.values().t());
        let (eigs, _) = gram.eigh(UPLO::Lower).unwrap();
        let scale = eigs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(eigs[0] >= -1e-10 * scale, "eig_min {}", eigs[0]);
    }

    #[test]
    fn zero_direction_is_rejected() {
        let dirs = Array2::zeros((3, 1));
        assert!(matches!(
            WeightedDirectionSet::from_directions(dirs, 0),
            Err(Error::ZeroNormDirection(0))
        ));
    }

    #[test]
    fn weighted_gram_with_exact_q_directions_matches_a1_within_3_se() {
        let x = unit_sphere_data(4, 3, 31).unwrap();
        let dirs = exact_q_directions_rejection(3, 60_000, 5).unwrap();
        let f = weighted_features_order1(x.values(), &dirs).unwrap();
        let a1 = arc_cosine_1_views(x.values(), x.values()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let (mean, se) = gram_mean_and_se(f.values(), i, j);
                assert!(
                    (mean - a1[[i, j]]).abs() <= 3.0 * se + 1e-9,
                    "({i},{j}): est {mean} exact {} se {se}",
                    a1[[i, j]]
                );
            }
        }
    }

    #[test]
    fn gibbs_bias_shrinks_with_more_sweeps() {
        // One sweep from the N(0, I) start is visibly biased (a single sweep
        // is a speed choice, not an unbiasedness claim); the chain must
        // converge to the exact-q Gram as sweeps grow.
        let x = unit_sphere_data(3, 3, 31).unwrap();
        let a1 = arc_cosine_1_views(x.values(), x.values()).unwrap();
        let gram_err = |sweeps: usize| {
            let dirs = gibbs_sample_directions(3, 40_000, sweeps, 17).unwrap();
            let f = weighted_features_order1(x.values(), &dirs).unwrap();
            let gram = f.values().dot(&f.values().t());
            let mut err = 0.0f64;
            for i in 0..3 {
                for j in 0..3 {
                    err = err.max((gram[[i, j]] - a1[[i, j]]).abs());
                }
            }
            err
        };
        let short = gram_err(1);
        let long = gram_err(64);
        assert!(long < 0.02, "64-sweep error {long}");
        assert!(long < short, "short {short} long {long}");
    }
}
