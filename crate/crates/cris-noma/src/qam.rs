//! Gray-mapped square QAM primitives shared by the analytical tables and the
//! symbol-level detector.
//!
//! Square QAM factors into two independent √M-PAM dimensions, so everything
//! here works per real dimension: integer levels ±1, ±3, ..., ±(√M−1),
//! reflected Gray labels, and a nearest-level slicer whose tie rule (boundary
//! goes to the smaller level) both the enumeration and the simulator use.

use crate::channel::is_square_qam;
use crate::{Error, Result};

/// One real PAM dimension of a square QAM constellation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pam {
    side: u32,
}

impl Pam {
    /// PAM dimension of square QAM with the given order.
    pub fn from_qam_order(m: u32) -> Result<Self> {
        if !is_square_qam(m) {
            return Err(Error::UnsupportedModulation(format!(
                "M = {m} is not a square gray-mapped QAM order"
            )));
        }
        Ok(Pam {
            side: (m as f64).sqrt().round() as u32,
        })
    }

    /// Number of levels per dimension (√M).
    pub fn side(&self) -> u32 {
        self.side
    }

    /// Bits carried per real dimension.
    pub fn bits_per_dim(&self) -> u32 {
        self.side.trailing_zeros()
    }

    /// Level value for an index in 0..side: 2i − (side − 1).
    pub fn level(&self, idx: usize) -> f64 {
        (2 * idx as i64 - (self.side as i64 - 1)) as f64
    }

    /// Integer level value, for exact symbolic work.
    pub fn level_int(&self, idx: usize) -> i64 {
        2 * idx as i64 - (self.side as i64 - 1)
    }

    /// All level indices.
    pub fn indices(&self) -> impl Iterator<Item = usize> {
        0..self.side as usize
    }

    /// Decision thresholds between adjacent levels: even integers.
    pub fn threshold_int(&self, j: usize) -> i64 {
        2 * j as i64 - (self.side as i64 - 2)
    }

    /// Nearest-level decision: index of the level whose region contains x.
    ///
    /// Regions are (t_{i-1}, t_i], so a boundary value resolves to the
    /// smaller level; the analytical enumeration counts the same way.
    pub fn slice(&self, x: f64) -> usize {
        let raw = ((x + self.side as f64 - 2.0) / 2.0).ceil() as i64;
        raw.clamp(0, self.side as i64 - 1) as usize
    }

    /// Reflected Gray label of a level index.
    pub fn gray_label(&self, idx: usize) -> u32 {
        let i = idx as u32;
        i ^ (i >> 1)
    }

    /// Hamming distance between the Gray labels of two level indices.
    pub fn diff_bits(&self, a: usize, b: usize) -> u32 {
        (self.gray_label(a) ^ self.gray_label(b)).count_ones()
    }
}

/// One real dimension of SIC detection on y = Σ_k h_k m_k + n.
///
/// Stage k slices (y − Σ_{j<k} h_j m̂_j)/h_k on user k's PAM grid; decisions
/// feed forward whether right or wrong. Returns the decided level index per
/// user. h entries must be the aligned (real) effective channels.
pub fn sic_detect(pams: &[Pam], h: &[f64], y: f64) -> Vec<usize> {
    debug_assert_eq!(pams.len(), h.len());
    let mut residual = y;
    let mut decisions = Vec::with_capacity(pams.len());
    for (pam, &hk) in pams.iter().zip(h) {
        let idx = if hk > 0.0 {
            pam.slice(residual / hk)
        } else {
            // Vanished channel: slicer input saturates; take the middle-low
            // level deterministically via slice(0).
            pam.slice(0.0)
        };
        residual -= hk * pam.level(idx);
        decisions.push(idx);
    }
    decisions
}
