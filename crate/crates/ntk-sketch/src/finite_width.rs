//! Finite-width Monte-Carlo reference for the NTK.
//!
//! Builds the actual network `h_0 = x`, `h_l = sqrt(2/width) ReLU(h_{l-1} W_l)`,
//! `f = h_L . w`, samples all parameters from `N(0, 1)`, and averages the
//! gradient Gram `<df/dtheta(x_i), df/dtheta(x_j)>` over independent trials.
//! The gradient inner products decompose layer by layer,
//!
//! ```text
//! <df(x), df(y)> = sum_l <h_{l-1}(x), h_{l-1}(y)> <g_l(x), g_l(y)> + <h_L(x), h_L(y)>
//! g_l = sqrt(2/width) Step(z_l) .* b_l,   b_L = w,   b_{l-1} = W_l g_l
//! ```
//!
//! which is exact backpropagation without forming per-parameter gradients.
//! `Step(0) := 0`, matching the exact recursion's convention.
//!
//! This is a test oracle: it is meant for small `n` and converges at the
//! Monte-Carlo rate, but it knows nothing about arc-cosine kernels or the
//! NNGP/NTK recursion, so agreement with [`crate::kernels::ntk_matrix`] is a
//! real end-to-end check. Hidden weight matrices at realistic widths do not
//! fit in memory (`width^2` entries); layers above a size threshold are
//! streamed column by column with per-column seeds and never materialized.
//! For the last hidden layer the backward factor `b_L = w` is known up
//! front, so its forward pass, Gram contributions and backward product fuse
//! into a single sweep that generates each weight exactly once. Streamed
//! weights are `f32` (the Monte-Carlo noise floor sits orders of magnitude
//! above the rounding error); all accumulation outputs are `f64`.

use ndarray::prelude::*;
use rand::rngs::SmallRng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::kernels::{KernelKind, KernelMatrix};
use crate::seeding::{derive_seed, ROLE_COLUMN, ROLE_TRIAL};

/// Weight matrices with at least this many entries are streamed.
const STREAM_THRESHOLD: usize = 4_000_000;

const LANES: usize = 16;
const SUPER_CHUNKS: usize = 64;

/// Monte-Carlo estimate of the NTK matrix from `trials` random networks of
/// the given hidden width. Deterministic for fixed arguments: every weight
/// column has its own derived seed, so the result is independent of thread
/// count and of whether a layer took the streamed or materialized path.
pub fn ntk_monte_carlo(
    x: &DataMatrix,
    depth: usize,
    width: usize,
    trials: usize,
    seed: u64,
) -> Result<KernelMatrix> {
    if depth == 0 || width == 0 || trials == 0 {
        return Err(Error::InvalidParameter(
            "depth, width and trials must be >= 1".into(),
        ));
    }
    let n = x.rows();
    let mut acc = Array2::<f64>::zeros((n, n));
    for trial in 0..trials {
        let trial_seed = derive_seed(seed, &[ROLE_TRIAL, trial as u64]);
        acc += &ntk_single_trial(x, depth, width, trial_seed);
    }
    acc /= trials as f64;
    // Hand-accumulated Grams carry ~1e-16 asymmetry; make it exact.
    let sym = (&acc + &acc.t()) / 2.0;
    KernelMatrix::from_array(sym, KernelKind::Approx)
}

fn gaussian_column(seed: u64, len: usize, out: &mut [f32]) {
    let mut rng = SmallRng::seed_from_u64(seed);
    for v in out[..len].iter_mut() {
        let g: f32 = StandardNormal.sample(&mut rng);
        *v = g;
    }
}

fn gaussian_column_f64(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = SmallRng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            let g: f32 = StandardNormal.sample(&mut rng);
            f64::from(g)
        })
        .collect()
}

/// Materializes a weight matrix column by column (small layers only).
fn materialize_weights(layer_seed: u64, rows: usize, cols: usize) -> Array2<f64> {
    let mut w = Array2::<f64>::zeros((rows, cols));
    for c in 0..cols {
        let col = gaussian_column_f64(derive_seed(layer_seed, &[ROLE_COLUMN, c as u64]), rows);
        for (r, v) in col.into_iter().enumerate() {
            w[[r, c]] = v;
        }
    }
    w
}

struct TrialLayer {
    /// Post-activation `h_l`, `n x width`; `None` when the layer was fused.
    h: Option<Array2<f64>>,
    /// Materialized weights, kept for the backward pass on small layers.
    w: Option<Array2<f64>>,
    seed: u64,
    in_dim: usize,
}

struct FusedTail {
    gram_h: Array2<f64>,
    gram_g: Array2<f64>,
    b_prev: Array2<f64>,
}

fn ntk_single_trial(x: &DataMatrix, depth: usize, width: usize, trial_seed: u64) -> Array2<f64> {
    let n = x.rows();
    let scale = (2.0 / width as f64).sqrt();
    let out_seed = derive_seed(trial_seed, &[depth as u64 + 1]);
    let w_out = gaussian_column_f64(out_seed, width);

    // Forward pass. The last hidden layer fuses forward and backward when
    // streamed, because b_L = w is already known.
    let mut layers: Vec<TrialLayer> = Vec::with_capacity(depth);
    let mut h_prev = x.values().to_owned();
    let mut fused_tail: Option<FusedTail> = None;
    for l in 1..=depth {
        let in_dim = h_prev.ncols();
        let layer_seed = derive_seed(trial_seed, &[l as u64]);
        let streamed = in_dim.saturating_mul(width) >= STREAM_THRESHOLD;
        if streamed && l == depth {
            let tail = fused_last_layer(&h_prev, &w_out, width, scale, layer_seed);
            layers.push(TrialLayer {
                h: None,
                w: None,
                seed: layer_seed,
                in_dim,
            });
            fused_tail = Some(tail);
        } else if streamed {
            let h = stream_forward(&h_prev, width, scale, layer_seed);
            layers.push(TrialLayer {
                h: Some(h.clone()),
                w: None,
                seed: layer_seed,
                in_dim,
            });
            h_prev = h;
        } else {
            let w = materialize_weights(layer_seed, in_dim, width);
            let mut h = h_prev.dot(&w);
            h.par_mapv_inplace(|v| if v > 0.0 { scale * v } else { 0.0 });
            layers.push(TrialLayer {
                h: Some(h.clone()),
                w: Some(w),
                seed: layer_seed,
                in_dim,
            });
            h_prev = h;
        }
    }

    // Gram of each kept activation level; h_grams[l] = H_l H_l^T.
    let mut h_grams: Vec<Array2<f64>> = Vec::with_capacity(depth + 1);
    h_grams.push(x.values().dot(&x.values().t()));
    for layer in &layers {
        if let Some(h) = &layer.h {
            h_grams.push(h.dot(&h.t()));
        }
    }

    // Backward pass, accumulating sum_l (H_{l-1} H_{l-1}^T) .* (G_l G_l^T)
    // plus the output-layer term H_L H_L^T.
    let mut ntk: Array2<f64>;
    let mut b: Array2<f64>;
    let mut layer_idx: usize; // layer whose g is derived from b next
    if let Some(tail) = fused_tail {
        ntk = &tail.gram_h + &(&h_grams[depth - 1] * &tail.gram_g);
        if depth == 1 {
            return ntk;
        }
        b = tail.b_prev;
        layer_idx = depth - 1;
    } else {
        ntk = h_grams[depth].clone();
        b = Array2::from_shape_fn((n, width), |(_, j)| w_out[j]);
        layer_idx = depth;
    }
    loop {
        let layer = &layers[layer_idx - 1];
        let h = layer.h.as_ref().expect("unfused layer keeps h");
        // g_l = scale * Step(z_l) .* b_l; Step(z) = (h > 0) since h = scale*relu(z).
        let mut g = b;
        ndarray::Zip::from(&mut g).and(h).par_for_each(|gv, &hv| {
            *gv = if hv > 0.0 { scale * *gv } else { 0.0 };
        });
        ntk += &(&h_grams[layer_idx - 1] * &g.dot(&g.t()));
        if layer_idx == 1 {
            break;
        }
        b = match &layer.w {
            Some(w) => g.dot(&w.t()),
            None => stream_backward(&g, layer.in_dim, layer.seed),
        };
        layer_idx -= 1;
    }
    ntk
}

/// `h_next = scale * relu(h_prev W)` with `W` streamed column by column.
fn stream_forward(
    h_prev: &Array2<f64>,
    width: usize,
    scale: f64,
    layer_seed: u64,
) -> Array2<f64> {
    let n = h_prev.nrows();
    let p = h_prev.ncols();
    let chunk = width.div_ceil(SUPER_CHUNKS);
    let pieces: Vec<Array2<f64>> = (0..SUPER_CHUNKS)
        .into_par_iter()
        .map(|sc| {
            let c0 = (sc * chunk).min(width);
            let c1 = ((sc + 1) * chunk).min(width);
            let mut out = Array2::<f64>::zeros((n, c1 - c0));
            let mut wcol = vec![0.0f32; p];
            for c in c0..c1 {
                gaussian_column(derive_seed(layer_seed, &[ROLE_COLUMN, c as u64]), p, &mut wcol);
                for i in 0..n {
                    let row = h_prev.row(i);
                    let mut z = 0.0f64;
                    for (a, &w) in wcol.iter().enumerate() {
                        z += row[a] * f64::from(w);
                    }
                    out[[i, c - c0]] = if z > 0.0 { scale * z } else { 0.0 };
                }
            }
            out
        })
        .collect();
    ndarray::concatenate(
        Axis(1),
        &pieces.iter().map(|p| p.view()).collect::<Vec<_>>(),
    )
    .expect("chunk rows agree")
}

/// `b_prev = g W^T` with `W` re-streamed from the same per-column seeds.
fn stream_backward(g: &Array2<f64>, p: usize, layer_seed: u64) -> Array2<f64> {
    let n = g.nrows();
    let width = g.ncols();
    let chunk = width.div_ceil(SUPER_CHUNKS);
    let partials: Vec<Array2<f64>> = (0..SUPER_CHUNKS)
        .into_par_iter()
        .map(|sc| {
            let c0 = (sc * chunk).min(width);
            let c1 = ((sc + 1) * chunk).min(width);
            let mut part = Array2::<f64>::zeros((n, p));
            let mut wcol = vec![0.0f32; p];
            for c in c0..c1 {
                gaussian_column(derive_seed(layer_seed, &[ROLE_COLUMN, c as u64]), p, &mut wcol);
                for i in 0..n {
                    let gv = g[[i, c]];
                    if gv == 0.0 {
                        continue;
                    }
                    let mut row = part.row_mut(i);
                    for (a, &w) in wcol.iter().enumerate() {
                        row[a] += gv * f64::from(w);
                    }
                }
            }
            part
        })
        .collect();
    let mut b = Array2::<f64>::zeros((n, p));
    for part in partials {
        b += &part;
    }
    b
}

// ---------------------------------------------------------------------------
// Fused last-layer sweep.
//
// For n <= LANES data points the inner loops run over fixed-width f32 lanes
// and each weight column is generated exactly once: the column's forward
// products, the h/g Gram contributions and the backward rank-1 update into
// b_prev all happen while the column is hot in cache.
// ---------------------------------------------------------------------------

struct FusedPartial {
    gram_h: Vec<f64>, // n x n
    gram_g: Vec<f64>, // n x n
    b_prev: Vec<f32>, // p x LANES, lane-padded
}

/// Columns processed together per sweep, so each `h`/`b` cache line is
/// reused four times.
const GROUP: usize = 4;

#[inline(always)]
fn fwd_group_inner(p: usize, w: &[&[f32]; GROUP], h_pad: &[f32], z: &mut [[f32; LANES]; GROUP]) {
    let h_pad = &h_pad[..p * LANES];
    for a in 0..p {
        let h: &[f32; LANES] = h_pad[a * LANES..a * LANES + LANES].try_into().unwrap();
        for c in 0..GROUP {
            let wv = w[c][a];
            let zc = &mut z[c];
            for i in 0..LANES {
                zc[i] += wv * h[i];
            }
        }
    }
}

#[inline(always)]
fn bwd_group_inner(p: usize, w: &[&[f32]; GROUP], b_pad: &mut [f32], g: &[[f32; LANES]; GROUP]) {
    let b_pad = &mut b_pad[..p * LANES];
    for a in 0..p {
        let dst: &mut [f32; LANES] = (&mut b_pad[a * LANES..a * LANES + LANES])
            .try_into()
            .unwrap();
        for c in 0..GROUP {
            let wv = w[c][a];
            let gc = &g[c];
            for i in 0..LANES {
                dst[i] += wv * gc[i];
            }
        }
    }
}

// The explicit-intrinsic versions keep the four 16-lane accumulators in
// registers across the whole column sweep, which the autovectorizer does not
// manage on its own.

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn fwd_group_avx2(p: usize, w: &[&[f32]; GROUP], h_pad: &[f32], z: &mut [[f32; LANES]; GROUP]) {
    use std::arch::x86_64::*;
    let mut acc = [[_mm256_setzero_ps(); 2]; GROUP];
    for c in 0..GROUP {
        acc[c][0] = _mm256_loadu_ps(z[c].as_ptr());
        acc[c][1] = _mm256_loadu_ps(z[c].as_ptr().add(8));
    }
    let hp = h_pad.as_ptr();
    let wp: [*const f32; GROUP] = [w[0].as_ptr(), w[1].as_ptr(), w[2].as_ptr(), w[3].as_ptr()];
    for a in 0..p {
        let h0 = _mm256_loadu_ps(hp.add(a * LANES));
        let h1 = _mm256_loadu_ps(hp.add(a * LANES + 8));
        for c in 0..GROUP {
            let wv = _mm256_set1_ps(*wp[c].add(a));
            acc[c][0] = _mm256_fmadd_ps(wv, h0, acc[c][0]);
            acc[c][1] = _mm256_fmadd_ps(wv, h1, acc[c][1]);
        }
    }
    for c in 0..GROUP {
        _mm256_storeu_ps(z[c].as_mut_ptr(), acc[c][0]);
        _mm256_storeu_ps(z[c].as_mut_ptr().add(8), acc[c][1]);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn bwd_group_avx2(p: usize, w: &[&[f32]; GROUP], b_pad: &mut [f32], g: &[[f32; LANES]; GROUP]) {
    use std::arch::x86_64::*;
    let mut gv = [[_mm256_setzero_ps(); 2]; GROUP];
    for c in 0..GROUP {
        gv[c][0] = _mm256_loadu_ps(g[c].as_ptr());
        gv[c][1] = _mm256_loadu_ps(g[c].as_ptr().add(8));
    }
    let bp = b_pad.as_mut_ptr();
    let wp: [*const f32; GROUP] = [w[0].as_ptr(), w[1].as_ptr(), w[2].as_ptr(), w[3].as_ptr()];
    for a in 0..p {
        let mut d0 = _mm256_loadu_ps(bp.add(a * LANES));
        let mut d1 = _mm256_loadu_ps(bp.add(a * LANES + 8));
        for c in 0..GROUP {
            let wv = _mm256_set1_ps(*wp[c].add(a));
            d0 = _mm256_fmadd_ps(wv, gv[c][0], d0);
            d1 = _mm256_fmadd_ps(wv, gv[c][1], d1);
        }
        _mm256_storeu_ps(bp.add(a * LANES), d0);
        _mm256_storeu_ps(bp.add(a * LANES + 8), d1);
    }
}

fn simd_available() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

fn fused_columns(
    cols: std::ops::Range<usize>,
    n: usize,
    p: usize,
    scale: f64,
    layer_seed: u64,
    h_pad: &[f32],
    w_out: &[f64],
) -> FusedPartial {
    let fast = simd_available();
    let c2 = scale as f32;
    let mut part = FusedPartial {
        gram_h: vec![0.0; n * n],
        gram_g: vec![0.0; n * n],
        b_prev: vec![0.0f32; p * LANES],
    };
    let mut wcols: Vec<Vec<f32>> = (0..GROUP).map(|_| vec![0.0f32; p]).collect();
    let mut z = [[0.0f32; LANES]; GROUP];
    let mut g = [[0.0f32; LANES]; GROUP];
    let mut c = cols.start;
    while c < cols.end {
        let gw = GROUP.min(cols.end - c);
        for (k, wcol) in wcols.iter_mut().enumerate() {
            if k < gw {
                gaussian_column(
                    derive_seed(layer_seed, &[ROLE_COLUMN, (c + k) as u64]),
                    p,
                    wcol,
                );
            } else {
                // Partial group at the range end: zero columns are inert.
                wcol.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let wrefs: [&[f32]; GROUP] = [&wcols[0], &wcols[1], &wcols[2], &wcols[3]];
        for zk in z.iter_mut() {
            *zk = [0.0f32; LANES];
        }
        if fast {
            #[cfg(target_arch = "x86_64")]
            unsafe {
                fwd_group_avx2(p, &wrefs, h_pad, &mut z)
            };
        } else {
            fwd_group_inner(p, &wrefs, h_pad, &mut z);
        }
        for k in 0..gw {
            let wb = w_out[c + k] as f32;
            let mut h_l = [0.0f64; LANES];
            let mut g_l = [0.0f64; LANES];
            for i in 0..n {
                if z[k][i] > 0.0 {
                    h_l[i] = f64::from(c2 * z[k][i]);
                    g_l[i] = f64::from(c2 * wb);
                    g[k][i] = c2 * wb;
                } else {
                    g[k][i] = 0.0;
                }
            }
            for i in 0..n {
                for j in 0..n {
                    part.gram_h[i * n + j] += h_l[i] * h_l[j];
                    part.gram_g[i * n + j] += g_l[i] * g_l[j];
                }
            }
        }
        for gk in g.iter_mut().skip(gw) {
            *gk = [0.0f32; LANES];
        }
        if fast {
            #[cfg(target_arch = "x86_64")]
            unsafe {
                bwd_group_avx2(p, &wrefs, &mut part.b_prev, &g)
            };
        } else {
            bwd_group_inner(p, &wrefs, &mut part.b_prev, &g);
        }
        c += gw;
    }
    part
}

fn fused_last_layer(
    h_prev: &Array2<f64>,
    w_out: &[f64],
    width: usize,
    scale: f64,
    layer_seed: u64,
) -> FusedTail {
    let n = h_prev.nrows();
    let p = h_prev.ncols();
    if n > LANES {
        // Wide-n fallback: two streamed passes instead of the fused sweep.
        let h = stream_forward(h_prev, width, scale, layer_seed);
        let gram_h = h.dot(&h.t());
        let mut g = Array2::from_shape_fn((n, width), |(_, j)| w_out[j]);
        ndarray::Zip::from(&mut g).and(&h).par_for_each(|gv, &hv| {
            *gv = if hv > 0.0 { scale * *gv } else { 0.0 };
        });
        let gram_g = g.dot(&g.t());
        let b_prev = stream_backward(&g, p, layer_seed);
        return FusedTail {
            gram_h,
            gram_g,
            b_prev,
        };
    }
    let mut h_pad = vec![0.0f32; p * LANES];
    for a in 0..p {
        for i in 0..n {
            h_pad[a * LANES + i] = h_prev[[i, a]] as f32;
        }
    }
    let chunk = width.div_ceil(SUPER_CHUNKS);
    let partials: Vec<FusedPartial> = (0..SUPER_CHUNKS)
        .into_par_iter()
        .map(|sc| {
            let c0 = (sc * chunk).min(width);
            let c1 = ((sc + 1) * chunk).min(width);
            fused_columns(c0..c1, n, p, scale, layer_seed, &h_pad, w_out)
        })
        .collect();
    // Fixed chunk boundaries and an ordered reduce keep the result
    // independent of thread scheduling.
    let mut gram_h = Array2::<f64>::zeros((n, n));
    let mut gram_g = Array2::<f64>::zeros((n, n));
    let mut b_pad = vec![0.0f64; p * LANES];
    for part in partials {
        for i in 0..n {
            for j in 0..n {
                gram_h[[i, j]] += part.gram_h[i * n + j];
                gram_g[[i, j]] += part.gram_g[i * n + j];
            }
        }
        for (dst, &src) in b_pad.iter_mut().zip(part.b_prev.iter()) {
            *dst += f64::from(src);
        }
    }
    let mut b_prev = Array2::<f64>::zeros((n, p));
    for a in 0..p {
        for i in 0..n {
            b_prev[[i, a]] = b_pad[a * LANES + i];
        }
    }
    FusedTail {
        gram_h,
        gram_g,
        b_prev,
    }
}
