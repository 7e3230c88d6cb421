//! Uplink power-domain NOMA assisted by a partitioned continuous reconfigurable
//! intelligent surface (CRIS).
//!
//! The crate models K single-antenna users reflecting off a rectangular surface
//! that is split into vertical partitions, one per user. Each partition applies
//! a continuous phase profile that coherently aligns its designated user; the
//! other users' signals pass through as zero-mean random components. On top of
//! that channel model the crate provides:
//!
//! * closed-form effective-channel moments driven by Gauss hypergeometric
//!   kernels ([`special`], [`channel`]),
//! * analytical per-user bit error rates for gray-mapped square QAM under
//!   successive interference cancellation, via characteristic-function
//!   inversion ([`ber`]),
//! * a Monte Carlo simulator over spatially correlated fields that shares its
//!   detector with the analytical path ([`grid`], [`sim`]),
//! * a penalty-method optimizer for per-user transmit powers and partition
//!   widths ([`opt`]),
//! * scenario configs, BER sweeps, and CSV/JSON export ([`scenario`],
//!   [`sweep`]) backing the `cris-noma` binary.

// Negated comparisons reject NaN along with the wrong sign; index loops
// walk parallel per-user arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod ber;
pub mod channel;
pub mod grid;
pub mod opt;
pub mod qam;
pub mod quad;
pub mod scenario;
pub mod sim;
pub mod special;
pub mod sweep;

use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("negative variance: {0}")]
    NegativeVariance(String),
    #[error("unsupported modulation: {0}")]
    UnsupportedModulation(String),
    #[error("grid resolution too coarse: {0}")]
    ResolutionTooCoarse(String),
    #[error("correlation factorization failed: {0}")]
    Factorization(String),
    #[error("phase alignment failed: {0}")]
    Alignment(String),
    #[error("no feasible point: {0}")]
    NoFeasiblePoint(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config validation failed:\n{0}")]
    Validation(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Gaussian tail probability Q(x) = P(N(0,1) > x).
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Converts dBm to linear milliwatts.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Converts linear milliwatts to dBm.
pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}
