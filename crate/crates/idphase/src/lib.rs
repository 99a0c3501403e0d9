//! Phase unwrapping for structured-light 3D scanning.
//!
//! A projector sweeps sinusoidal fringes across a scene; three phase-shifted
//! intensity images determine the phase of each pixel only modulo 2π. This
//! crate recovers the integer fringe count `k` per pixel so that the absolute
//! phase `Φ = φ + 2πk` is smooth, then converts phase to depth.
//!
//! Module map:
//!
//! - [`raster`] — grid containers, PFM/PGM/mask file I/O, interpolation
//! - [`phaseshift`] — three-step fringe synthesis and decoding
//! - [`mincut`] — max-flow/min-cut on 4-connected grids, binary energy reduction
//! - [`unwrap`] — quadratic phase-difference energy, jump moves, pyramid driver
//! - [`diffeo`] — Möbius/rectangle-to-disk conformal maps, Brenier-potential
//!   optimal transport, and resampling warps
//! - [`ensemble`] — unwrap under several domain reparametrizations, vote
//! - [`baselines`] — Itoh scanline, Goldstein branch cuts, quality-guided
//!   growth, unweighted least squares
//! - [`simbench`] — synthetic scenes, noise, error metrics, benchmark suites
//! - [`reconstruct`] — phase-to-depth and PLY export

pub mod baselines;
pub mod diffeo;
pub mod ensemble;
pub mod mincut;
pub mod phaseshift;
pub mod raster;
pub mod reconstruct;
pub mod simbench;
pub mod spectral;
pub mod unwrap;

mod error;

pub use error::{Error, Result};
