//! Effective-channel statistics for the partitioned surface.
//!
//! For user k the aligned partition contributes the coherent component γ_kk
//! with E[γ_kk] = √(P_k η_k / ν_k) (π/4) W_k H, while every partition i
//! carries a zero-mean residual γ_ki for the non-designated users. Second
//! moments reduce to single radial integrals over the pair-distance geometry
//! of a W × H rectangle, weighted by the hypergeometric kernels of
//! [`crate::special`]. γ_kk is modeled gamma, Re(γ_ki) zero-mean Gaussian;
//! their characteristic functions combine into the effective-channel CF used
//! by the analytical BER.

use crate::quad::integrate;
use crate::special::{kernel_gi, kernel_gk, CorrelationModel, SeriesLen};
use crate::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

/// Relative tolerance for the moment quadratures outside optimizer loops.
pub const MOMENT_QUAD_TOL: f64 = 1e-10;

/// Per-user link-budget and modulation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct UserLinkParams {
    /// Transmit power in mW.
    pub tx_power_mw: f64,
    /// Cascaded distance path gain η = (d_ur d_rb)^{-ψ}.
    pub path_gain: f64,
    /// QAM energy normalization ν = 2(M-1)/3.
    pub nu: f64,
    /// Square QAM order M (4, 16, 64, ...).
    pub mod_order: u32,
}

/// True when M describes gray-mapped square QAM: a power of 4.
pub fn is_square_qam(m: u32) -> bool {
    m >= 4 && m.is_power_of_two() && m.trailing_zeros().is_multiple_of(2)
}

/// QAM energy normalization ν = 2(M-1)/3 for integer levels ±1, ±3, ...
pub fn qam_nu(m: u32) -> f64 {
    2.0 * (m as f64 - 1.0) / 3.0
}

impl UserLinkParams {
    /// Builds link parameters from geometry: η = d_ur^{-ψ} d_rb^{-ψ}.
    pub fn from_geometry(
        tx_power_mw: f64,
        distance_m: f64,
        bs_distance_m: f64,
        path_loss_exp: f64,
        mod_order: u32,
    ) -> Result<Self> {
        if !(tx_power_mw > 0.0) || !(distance_m > 0.0) || !(bs_distance_m > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "power and distances must be positive (P={tx_power_mw}, d_ur={distance_m}, d_rb={bs_distance_m})"
            )));
        }
        if !is_square_qam(mod_order) {
            return Err(Error::UnsupportedModulation(format!(
                "M = {mod_order} is not square gray-mapped QAM (need a power of 4)"
            )));
        }
        Ok(UserLinkParams {
            tx_power_mw,
            path_gain: distance_m.powf(-path_loss_exp) * bs_distance_m.powf(-path_loss_exp),
            nu: qam_nu(mod_order),
            mod_order,
        })
    }

    /// Amplitude prefactor √(P η / ν) shared by all γ_k· components.
    pub fn amplitude_prefactor(&self) -> f64 {
        (self.tx_power_mw * self.path_gain / self.nu).sqrt()
    }

    /// Returns a copy at a different transmit power.
    pub fn with_power_mw(&self, tx_power_mw: f64) -> Self {
        UserLinkParams {
            tx_power_mw,
            ..self.clone()
        }
    }
}

/// Vertical split of the W × H surface into per-user partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionLayout {
    /// Partition widths in meters, summing to the surface width.
    pub widths: Vec<f64>,
    /// Surface height in meters.
    pub height: f64,
}

impl PartitionLayout {
    pub fn new(widths: Vec<f64>, height: f64) -> Result<Self> {
        if widths.is_empty() {
            return Err(Error::InvalidArgument("layout needs at least one partition".into()));
        }
        if !(height > 0.0) {
            return Err(Error::InvalidArgument(format!("height {height} must be positive")));
        }
        if widths.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(format!("negative partition width in {widths:?}")));
        }
        Ok(PartitionLayout { widths, height })
    }

    /// Equal split of total width across k partitions.
    pub fn equal_split(total_width: f64, height: f64, k: usize) -> Result<Self> {
        PartitionLayout::new(vec![total_width / k as f64; k], height)
    }

    pub fn total_width(&self) -> f64 {
        self.widths.iter().sum()
    }

    pub fn user_count(&self) -> usize {
        self.widths.len()
    }
}

/// Radial moment kernel selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKernel {
    /// g_k: the |h||g| product moment kernel of the aligned partition.
    Desired,
    /// g_i: the residual cross-moment kernel.
    Interference,
    /// g ≡ 1; isolates the rectangle geometry for diagnostics.
    Unit,
}

/// E[γ_kk] = √(P η / ν) (π/4) W H.
pub fn mean_gamma_kk(link: &UserLinkParams, width: f64, height: f64) -> f64 {
    link.amplitude_prefactor() * FRAC_PI_4 * width * height
}

fn eval_kernel(
    kernel: MomentKernel,
    corr: &CorrelationModel,
    r: f64,
    len: SeriesLen,
) -> Result<f64> {
    match kernel {
        MomentKernel::Unit => Ok(1.0),
        _ => {
            let rho = corr.correlation(r)?;
            let rho_sq = (rho * rho).min(1.0);
            match kernel {
                MomentKernel::Desired => kernel_gk(rho_sq, len),
                MomentKernel::Interference => kernel_gi(rho_sq, len),
                MomentKernel::Unit => unreachable!(),
            }
        }
    }
}

/// Pair-distance geometry integral for a w × h rectangle:
///
///   ∫ r g(r) B(r) dr over the three radial regimes, where B weights the
///   chord population. With g ≡ 1 the pieces sum to (wh)²/4.
///
/// Written for w >= h; callers swap. Quadrature panels are capped at λ/8 under
/// sinc correlation so the oscillatory kernels are resolved.
fn omega_geometry(
    width: f64,
    height: f64,
    kernel: MomentKernel,
    corr: &CorrelationModel,
    len: SeriesLen,
    rel_tol: f64,
) -> Result<f64> {
    let (w, h) = if width >= height {
        (width, height)
    } else {
        (height, width)
    };
    if w <= 0.0 || h <= 0.0 {
        return Ok(0.0);
    }
    let diag = w.hypot(h);
    let scale = (w * h) * (w * h) / 4.0;
    let tol = rel_tol * scale;
    let cap = match corr {
        CorrelationModel::Sinc { wavelength } => Some(wavelength / 8.0),
        CorrelationModel::None => None,
    };
    let g = |r: f64| eval_kernel(kernel, corr, r, len).unwrap_or(f64::NAN);

    // r < h: full annulus of offsets fits inside the rectangle support.
    let p1 = integrate(
        |r| r * g(r) * (w * h * FRAC_PI_2 - (w + h) * r + r * r / 2.0),
        0.0,
        h,
        tol,
        cap,
    )?;
    // h <= r < w: vertical clipping only.
    let p2 = if w > h {
        integrate(
            |r| {
                let b = w * h * (h / r).asin() + w * (r * r - h * h).sqrt() - w * r - h * h / 2.0;
                r * g(r) * b
            },
            h,
            w,
            tol,
            cap,
        )?
    } else {
        0.0
    };
    // w <= r <= diag: both directions clipped; enters with a minus sign.
    let p3 = integrate(
        |r| {
            let b = w * h * ((w / r).min(1.0).acos() - (h / r).min(1.0).asin())
                + (w * w + h * h + r * r) / 2.0
                - w * (r * r - h * h).max(0.0).sqrt()
                - h * (r * r - w * w).max(0.0).sqrt();
            r * g(r) * b
        },
        w,
        diag,
        tol,
        cap,
    )?;
    let total = p1 + p2 - p3;
    if !total.is_finite() {
        return Err(Error::Quadrature(format!(
            "omega geometry integral diverged for w={w}, h={h}"
        )));
    }
    Ok(total)
}

/// Second moment Ω for a partition of the given width:
///
///   Ω = (P η / ν) (π²/4) ∫ r g(r) B(r) dr
///
/// With the desired kernel and the user's own partition this is E[γ_kk²];
/// with the interference kernel and partition i it is E[|γ_ki|²], using the
/// transmitting user's power, path gain, and ν.
pub fn omega(
    link: &UserLinkParams,
    width: f64,
    height: f64,
    kernel: MomentKernel,
    corr: &CorrelationModel,
    len: SeriesLen,
    rel_tol: f64,
) -> Result<f64> {
    let pref = link.tx_power_mw * link.path_gain / link.nu;
    let geo = omega_geometry(width, height, kernel, corr, len, rel_tol)?;
    Ok(pref * (PI * PI / 4.0) * geo)
}

/// Gamma/Gaussian summary of one user's effective channel.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannelStats {
    /// E[γ_kk].
    pub mean_kk: f64,
    /// Var[γ_kk].
    pub var_kk: f64,
    /// Gamma shape α with α θ = mean, α θ² = var. INFINITY when var = 0 at
    /// positive mean (point mass), 0 when the partition is empty.
    pub gamma_shape: f64,
    /// Gamma scale θ (0 in both degenerate cases).
    pub gamma_scale: f64,
    /// Var[Re(γ_ki)] per partition i; the self entry is 0 and unused.
    pub var_re_ki: Vec<f64>,
}

impl EffectiveChannelStats {
    fn from_moments(mean: f64, var: f64, var_re_ki: Vec<f64>) -> Self {
        let (shape, scale) = if mean <= 0.0 {
            (0.0, 0.0)
        } else if var <= mean * mean * 1e-14 {
            (f64::INFINITY, 0.0)
        } else {
            (mean * mean / var, var / mean)
        };
        EffectiveChannelStats {
            mean_kk: mean,
            var_kk: var,
            gamma_shape: shape,
            gamma_scale: scale,
            var_re_ki,
        }
    }

    /// Total variance of h_eff = γ_kk + Σ Re(γ_ki).
    pub fn total_var(&self) -> f64 {
        self.var_kk + self.var_re_ki.iter().sum::<f64>()
    }

    /// Sum of the interference variances Σ_{i≠k} Var[Re(γ_ki)].
    pub fn interference_var(&self) -> f64 {
        self.var_re_ki.iter().sum()
    }
}

/// Moment statistics for every user under the given layout.
///
/// Negative variance estimates beyond 1e-9 relative slack are an error;
/// smaller negatives (quadrature noise) clamp to zero.
pub fn effective_stats(
    links: &[UserLinkParams],
    layout: &PartitionLayout,
    corr: &CorrelationModel,
    len: SeriesLen,
    rel_tol: f64,
) -> Result<Vec<EffectiveChannelStats>> {
    let k = links.len();
    if layout.user_count() != k {
        return Err(Error::InvalidArgument(format!(
            "{} links but {} partitions",
            k,
            layout.user_count()
        )));
    }
    let h = layout.height;
    // Geometry integrals depend only on the partition, not the user; compute once.
    let mut geo_gk = Vec::with_capacity(k);
    let mut geo_gi = Vec::with_capacity(k);
    for &w in &layout.widths {
        geo_gk.push(omega_geometry(w, h, MomentKernel::Desired, corr, len, rel_tol)?);
        geo_gi.push(omega_geometry(w, h, MomentKernel::Interference, corr, len, rel_tol)?);
    }
    let mut out = Vec::with_capacity(k);
    for (ki, link) in links.iter().enumerate() {
        let pref_sq = link.tx_power_mw * link.path_gain / link.nu;
        let mean = mean_gamma_kk(link, layout.widths[ki], h);
        let second = pref_sq * (PI * PI / 4.0) * geo_gk[ki];
        let mut var = second - mean * mean;
        if var < 0.0 {
            if var < -1e-9 * mean * mean - 1e-300 {
                return Err(Error::NegativeVariance(format!(
                    "user {ki}: E[γ²] = {second} below mean² = {}",
                    mean * mean
                )));
            }
            var = 0.0;
        }
        let var_re: Vec<f64> = (0..k)
            .map(|i| {
                if i == ki {
                    0.0
                } else {
                    0.5 * pref_sq * (PI * PI / 4.0) * geo_gi[i]
                }
            })
            .collect();
        out.push(EffectiveChannelStats::from_moments(mean, var, var_re));
    }
    Ok(out)
}

/// CF of the gamma-approximated coherent component: (1 - jθz)^{-α}.
///
/// Degenerate stats collapse to the point-mass CF exp(jz·mean).
pub fn cf_gamma_kk(stats: &EffectiveChannelStats, z: f64) -> Complex64 {
    if !stats.gamma_shape.is_finite() || stats.gamma_scale == 0.0 {
        return Complex64::new(0.0, z * stats.mean_kk).exp();
    }
    let w = Complex64::new(1.0, -stats.gamma_scale * z);
    (-stats.gamma_shape * w.ln()).exp()
}

/// CF of one zero-mean Gaussian residual: exp(-Var z²/2).
pub fn cf_re_gamma_ki(var: f64, z: f64) -> Complex64 {
    Complex64::new((-0.5 * var * z * z).exp(), 0.0)
}

/// CF of h_eff = γ_kk + Σ_{i≠k} Re(γ_ki) under the independence model.
pub fn cf_effective(stats: &EffectiveChannelStats, z: f64) -> Complex64 {
    cf_gamma_kk(stats, z) * cf_re_gamma_ki(stats.interference_var(), z)
}
