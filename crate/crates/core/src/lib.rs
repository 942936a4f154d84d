//! Angular Schmidt-mode simulator for bright squeezed vacuum generated in a
//! traveling-wave parametric amplifier made of two crystals separated by an
//! air gap.
//!
//! The pipeline is
//!
//! 1. [`kernel`]: sample the two-photon amplitude `F(θs, θi)` on an angular grid,
//! 2. [`schmidt`]: decompose the weighted kernel into Schmidt modes,
//! 3. [`gain`]: amplify every Schmidt mode with its own two-mode squeezer and
//!    compute photon numbers, `g²(0)` and the far-field profile,
//! 4. [`sweep`]: repeat for a range of gap lengths and analyse the oscillations.
//!
//! [`oracle`] propagates the full plane-wave Bogoliubov transformation and is
//! used to cross-check [`gain`] on small grids.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix the scalar to `f64`, which is what the command-line tool uses.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod gain;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod oracle;
pub mod peaks;
pub mod scalar;
pub mod schmidt;
pub mod svg;
pub mod sweep;
pub mod validate;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type OpaGeometry = kernel::OpaGeometry<f64>;
pub type GeometryParams = kernel::GeometryParams<f64>;
pub type AngularGrid = grid::AngularGrid<f64>;
pub type TpaKernel = kernel::TpaKernel<f64>;
pub type SchmidtDecomposition = schmidt::SchmidtDecomposition<f64>;
pub type GainReport = gain::GainReport<f64>;
pub type NrfModel = gain::NrfModel<f64>;
pub type BogoliubovPropagator = oracle::BogoliubovPropagator<f64>;
pub type SweepResult = sweep::SweepResult<f64>;
pub type PreparedSweep = sweep::PreparedSweep<f64>;
