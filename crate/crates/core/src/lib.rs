//! Cramér-Rao bounds for joint range/direction estimation in a bistatic
//! sensing link: a dielectric waveguide with pinching antennas (PAs) on
//! the transmit side, a uniform linear array (ULA) on the receive side.
//!
//! The crate is organised bottom-up:
//!
//! - [`scene`]: planar geometry (layouts, target, exact distances).
//! - [`response`]: near-field steering vectors and the noiseless
//!   matched-filter observation `g = S·b`.
//! - [`sensitivity`]: analytical derivatives of every quantity in the
//!   observation chain.
//! - [`crb`]: closed-form bounds from the `(i, s, k)` terms, degeneracy
//!   detection, and an independent 4×4 Fisher-information oracle.
//! - [`placement`]: multi-start projected pattern search over PA positions.
//! - [`experiments`]: Monte Carlo sweeps over the receive array size,
//!   slope fits and degeneracy studies.
//! - [`validation`]: finite-difference and FIM cross-checks, used by the
//!   `validate` subcommand.
//! - [`config`] / [`output`]: the CLI's configuration schema and file formats.

pub mod config;
pub mod crb;
pub mod error;
pub mod experiments;
pub mod numerics;
pub mod output;
pub mod placement;
pub mod response;
pub mod scene;
pub mod sensitivity;
pub mod validation;

pub use error::{Error, Result};
pub use num_complex::Complex64;
