//! CountSketch and TensorSketch transforms.
//!
//! CountSketch hashes each input coordinate to one of `m` bins with a random
//! sign: `[C(x)]_i = sum_{j: h(j) = i} s(j) x_j`. It is linear, runs in one
//! pass over the input, and `E[<C(x), C(y)>] = <x, y>`.
//!
//! TensorSketch applies a CountSketch with combined tables
//! `H(j1, j2) = h1(j1) + h2(j2) mod m`, `S(j1, j2) = s1(j1) s2(j2)` to the
//! tensor product `x (x) y` without materializing it: the result equals the
//! circular convolution of the component sketches,
//!
//! ```text
//! C(x (x) y) = ifft(fft(C1(x)) .* fft(C2(y)))
//! ```
//!
//! for any output dimension `m >= 1` (the FFT here is complex-to-complex with
//! mixed-radix/Bluestein support, so `m` need not be a power of two).
//! [`tensor_sketch_direct`] materializes the tensor product and applies the
//! combined tables; it exists to cross-validate the FFT path exactly.
//!
//! Hash and sign tables are stored arrays drawn from a seeded counter-based
//! generator, which gives fully independent table entries; the analysis only
//! needs pairwise/3-wise independence, so this is strictly stronger.

use std::sync::Arc;

use ndarray::prelude::*;
use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::seeding::rng_from_seed;

/// Hash and sign tables for one CountSketch transform.
#[derive(Debug, Clone)]
pub struct CountSketchSpec {
    input_dim: usize,
    output_dim: usize,
    hash: Vec<u32>,
    sign: Vec<i8>,
    seed: u64,
}

impl CountSketchSpec {
    pub fn new(input_dim: usize, output_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidParameter(
                "sketch dimensions must be >= 1".into(),
            ));
        }
        if output_dim > u32::MAX as usize {
            return Err(Error::SizeGuard("sketch output dimension too large".into()));
        }
        let mut rng = rng_from_seed(seed);
        let mut hash = Vec::with_capacity(input_dim);
        let mut sign = Vec::with_capacity(input_dim);
        for _ in 0..input_dim {
            hash.push(rng.gen_range(0..output_dim as u32));
            sign.push(if rng.gen::<bool>() { 1 } else { -1 });
        }
        Ok(Self {
            input_dim,
            output_dim,
            hash,
            sign,
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn hash_table(&self) -> &[u32] {
        &self.hash
    }

    pub fn sign_table(&self) -> &[i8] {
        &self.sign
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "sketch expects dimension {}, got {}",
                self.input_dim, len
            )));
        }
        Ok(())
    }
}

/// Single-pass CountSketch of a vector.
pub fn count_sketch(spec: &CountSketchSpec, x: &[f64]) -> Result<Vec<f64>> {
    spec.check_len(x.len())?;
    let mut out = vec![0.0; spec.output_dim];
    for (j, &v) in x.iter().enumerate() {
        out[spec.hash[j] as usize] += f64::from(spec.sign[j]) * v;
    }
    Ok(out)
}

/// Two independent CountSketches with a shared output dimension.
#[derive(Debug, Clone)]
pub struct SketchPair {
    first: CountSketchSpec,
    second: CountSketchSpec,
}

impl SketchPair {
    /// Draws the two sketches from independently derived seeds.
    pub fn new(d1: usize, d2: usize, output_dim: usize, seed: u64) -> Result<Self> {
        let first = CountSketchSpec::new(d1, output_dim, crate::seeding::derive_seed(seed, &[0]))?;
        let second = CountSketchSpec::new(d2, output_dim, crate::seeding::derive_seed(seed, &[1]))?;
        Ok(Self { first, second })
    }

    pub fn from_specs(first: CountSketchSpec, second: CountSketchSpec) -> Result<Self> {
        if first.output_dim != second.output_dim {
            return Err(Error::DimensionMismatch(format!(
                "sketch pair output dims differ: {} vs {}",
                first.output_dim, second.output_dim
            )));
        }
        Ok(Self { first, second })
    }

    pub fn first(&self) -> &CountSketchSpec {
        &self.first
    }

    pub fn second(&self) -> &CountSketchSpec {
        &self.second
    }

    pub fn output_dim(&self) -> usize {
        self.first.output_dim
    }
}

struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    len: usize,
}

impl FftPair {
    fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            len,
        }
    }

    /// Circular convolution through the frequency domain.
    fn convolve(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut fa: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut fb: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut fa);
        self.forward.process(&mut fb);
        for (u, v) in fa.iter_mut().zip(fb.iter()) {
            *u *= *v;
        }
        self.inverse.process(&mut fa);
        let scale = 1.0 / self.len as f64;
        let mut out = Vec::with_capacity(self.len);
        let input_norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let magnitude = (input_norm(a) * input_norm(b)).max(1.0);
        for c in fa {
            let re = c.re * scale;
            let im = c.im * scale;
            // The product of two real-vector transforms is real; residue above
            // 1e-6 of the input magnitude signals an FFT defect.
            assert!(
                im.abs() <= 1e-6 * magnitude,
                "imaginary residue {im:e} exceeds tolerance"
            );
            out.push(re);
        }
        out
    }
}

/// TensorSketch of `x (x) y` via the FFT convolution identity.
pub fn tensor_sketch(pair: &SketchPair, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let cx = count_sketch(&pair.first, x)?;
    let cy = count_sketch(&pair.second, y)?;
    Ok(FftPair::new(pair.output_dim()).convolve(&cx, &cy))
}

/// Reference TensorSketch: materializes `x (x) y` and applies the combined
/// hash `h1(j1) + h2(j2) mod m` and sign `s1(j1) s2(j2)`.
///
/// Test-scale only; the tensor product is guarded at 10^6 entries.
pub fn tensor_sketch_direct(pair: &SketchPair, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    pair.first.check_len(x.len())?;
    pair.second.check_len(y.len())?;
    if x.len().saturating_mul(y.len()) > 1_000_000 {
        return Err(Error::SizeGuard(format!(
            "direct tensor sketch of {} x {} entries exceeds 10^6",
            x.len(),
            y.len()
        )));
    }
    let m = pair.output_dim();
    let mut out = vec![0.0; m];
    for (j1, &vx) in x.iter().enumerate() {
        let h1 = pair.first.hash[j1] as usize;
        let s1 = f64::from(pair.first.sign[j1]);
        for (j2, &vy) in y.iter().enumerate() {
            let h = (h1 + pair.second.hash[j2] as usize) % m;
            let s = s1 * f64::from(pair.second.sign[j2]);
            out[h] += s * vx * vy;
        }
    }
    Ok(out)
}

/// Row-wise TensorSketch of two matrices with equal row counts.
///
/// Runs in `O(n (d1 + d2 + m log m))`; rows are independent and processed in
/// parallel.
pub fn tensor_sketch_rows(
    pair: &SketchPair,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "row counts differ: {} vs {}",
            x.nrows(),
            y.nrows()
        )));
    }
    pair.first.check_len(x.ncols())?;
    pair.second.check_len(y.ncols())?;
    let m = pair.output_dim();
    let fft = FftPair::new(m);
    let n = x.nrows();
    let mut out = Array2::zeros((n, m));
    let rows: Vec<(usize, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let cx = count_sketch(&pair.first, x.row(i).as_standard_layout().as_slice().unwrap())
                .expect("dimensions already checked");
            let cy = count_sketch(&pair.second, y.row(i).as_standard_layout().as_slice().unwrap())
                .expect("dimensions already checked");
            (i, fft.convolve(&cx, &cy))
        })
        .collect();
    for (i, row) in rows {
        out.row_mut(i).assign(&Array1::from_vec(row));
    }
    Ok(out)
}
