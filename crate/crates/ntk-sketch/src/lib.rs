//! Neural tangent kernels for fully-connected ReLU networks, computed exactly
//! or approximated by sketched random features.
//!
//! The library has three layers:
//!
//! * exact kernels — arc-cosine kernels of order 0/1, the NNGP/NTK recursion,
//!   a finite-width Monte-Carlo reference, and statistical dimensions
//!   ([`kernels`], [`finite_width`]);
//! * randomized approximations — CountSketch/TensorSketch primitives
//!   ([`sketch`]), arc-cosine random features with an optional
//!   leverage-weighted Gibbs sampler ([`arccos_features`]), and the layered
//!   NTK feature pipeline ([`ntk_features`]);
//! * consumers — kernel ridge regression ([`krr`]), approximation diagnostics
//!   ([`diagnostics`]), and greedy design selection ([`active_learning`]).
//!
//! Every randomized entry point takes an explicit seed and is bit-for-bit
//! reproducible: the same seed yields the same tables, the same Gaussians,
//! the same features, independent of thread count.
//!
//! See the crate examples for end-to-end usage of each capability; the
//! `ntk-sketch` binary exposes the same operations on CSV/LIBSVM files.

extern crate blas_src;

pub mod active_learning;
pub mod arccos_features;
pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod finite_width;
pub mod kernels;
pub mod krr;
pub mod ntk_features;
pub mod seeding;
pub mod sketch;
pub mod synthetic;

pub use data::{DataMatrix, DatasetFormat, LabelVector};
pub use error::{Error, Result};
pub use kernels::{KernelKind, KernelMatrix};
pub use ntk_features::{FeatureBlock, FeatureKind, NtkFeatureConfig};
