//! Symbol-level Monte Carlo of the SIC receiver over correlated surface fields.
//!
//! One trial draws all fading fields, forms the effective gamma matrix,
//! solves the per-partition phase alignment, and transmits one superimposed
//! Gray-mapped QAM symbol through the aligned channel. Trials are seeded
//! individually from the run seed, so results are independent of execution
//! order and thread count.

use crate::ber::NoiseModel;
use crate::channel::{qam_nu, UserLinkParams};
use crate::grid::{derived_seed, sample_channels, ChannelSample, CorrelationFactor, SurfaceGrid};
use crate::qam::{sic_detect, Pam};
use crate::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::io::{Read, Write};

/// Per-user bit error rate of the SIC detector at fixed aligned channels,
/// estimated over `n_dims` independent real dimensions.
///
/// The detector is the same slicer cascade the analytical enumeration
/// integrates, so this doubles as the conditional-BER oracle for the
/// Q-term tables. Panics on modulation orders that are not square QAM.
pub fn conditioned_ber_mc(
    mod_orders: &[u32],
    sic_order: &[usize],
    h: &[f64],
    sigma_n: f64,
    n_dims: usize,
    seed: u64,
) -> Vec<f64> {
    let k = mod_orders.len();
    assert_eq!(sic_order.len(), k);
    assert_eq!(h.len(), k);
    let pams: Vec<Pam> = mod_orders
        .iter()
        .map(|&m| Pam::from_qam_order(m).expect("square QAM order"))
        .collect();
    let stage_pams: Vec<Pam> = sic_order.iter().map(|&u| pams[u].clone()).collect();
    let stage_h: Vec<f64> = sic_order.iter().map(|&u| h[u]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut err_bits = vec![0u64; k];
    let mut tx = vec![0usize; k];
    for _ in 0..n_dims {
        let mut y = 0.0;
        for u in 0..k {
            let idx = rng.gen_range(0..pams[u].side() as usize);
            tx[u] = idx;
            y += h[u] * pams[u].level(idx);
        }
        let z: f64 = rng.sample(StandardNormal);
        y += sigma_n * z;
        let decided = sic_detect(&stage_pams, &stage_h, y);
        for (s, &u) in sic_order.iter().enumerate() {
            err_bits[u] += pams[u].diff_bits(decided[s], tx[u]) as u64;
        }
    }
    (0..k)
        .map(|u| err_bits[u] as f64 / (n_dims as f64 * pams[u].bits_per_dim() as f64))
        .collect()
}

/// Effective cascaded amplitudes for one field draw: row k holds user k's
/// contributions through each partition. Diagonal entries are real and
/// nonnegative (the partition aligns its own user point by point), the
/// off-diagonal entries keep their residual complex phase.
#[derive(Debug, Clone)]
pub struct GammaMatrix {
    pub k: usize,
    /// Row-major k×k entries, entry (k, i) = γ_ki.
    pub entries: Vec<Complex64>,
}

impl GammaMatrix {
    pub fn get(&self, user: usize, partition: usize) -> Complex64 {
        self.entries[user * self.k + partition]
    }

    pub fn diag(&self, user: usize) -> f64 {
        self.entries[user * self.k + user].re
    }

    /// Rescales row k by `scales[k]`; used to move a unit-power draw to a
    /// target power via the √P dependence of the amplitude prefactor.
    pub fn scaled_rows(&self, scales: &[f64]) -> GammaMatrix {
        debug_assert_eq!(scales.len(), self.k);
        let mut entries = self.entries.clone();
        for (u, &s) in scales.iter().enumerate() {
            for e in &mut entries[u * self.k..(u + 1) * self.k] {
                *e *= s;
            }
        }
        GammaMatrix {
            k: self.k,
            entries,
        }
    }
}

/// Cascade-and-align reduction of one field draw to the gamma matrix.
///
/// Each element first accumulates its continuum cascade
/// m_ke = Σ_points h_k·g·weight, then applies the single phase that aligns
/// its designated user: the diagonal collects |m_ke|, user k through
/// partition i collects m_ke·e^{-j∠m_ie}. The continuous kind has one element
/// per point, which reduces the diagonal to Σ |h_kk||g|·weight.
pub fn effective_gammas(
    grid: &SurfaceGrid,
    sample: &ChannelSample,
    links: &[UserLinkParams],
) -> Result<GammaMatrix> {
    let k = links.len();
    let n = grid.points.len();
    if sample.h.len() != k {
        return Err(Error::InvalidArgument(format!(
            "sample has {} user fields for {} links",
            sample.h.len(),
            k
        )));
    }
    if sample.g.len() != n || sample.h.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidArgument(
            "field length does not match grid size".into(),
        ));
    }
    if grid.points.iter().any(|p| p.partition >= k) {
        return Err(Error::InvalidArgument(
            "grid partition index out of range for link count".into(),
        ));
    }
    let ne = grid.element_count;
    let mut casc = vec![Complex64::new(0.0, 0.0); k * ne];
    let mut elem_part = vec![usize::MAX; ne];
    for (p, pt) in grid.points.iter().enumerate() {
        let gw = sample.g[p] * pt.weight;
        for (u, row) in sample.h.iter().enumerate() {
            casc[u * ne + pt.element] += row[p] * gw;
        }
        elem_part[pt.element] = pt.partition;
    }
    let mut entries = vec![Complex64::new(0.0, 0.0); k * k];
    for e in 0..ne {
        let i = elem_part[e];
        if i == usize::MAX {
            continue;
        }
        let own = casc[i * ne + e];
        let mag = own.norm();
        let rot = if mag > 0.0 {
            own.conj() / mag
        } else {
            Complex64::new(1.0, 0.0)
        };
        for u in 0..k {
            entries[u * k + i] += if u == i {
                Complex64::new(mag, 0.0)
            } else {
                casc[u * ne + e] * rot
            };
        }
    }
    for (u, link) in links.iter().enumerate() {
        let pref = link.amplitude_prefactor();
        for e in &mut entries[u * k..(u + 1) * k] {
            *e *= pref;
        }
    }
    Ok(GammaMatrix { k, entries })
}

/// Result of the per-partition phase alignment.
#[derive(Debug, Clone)]
pub struct AlignOutcome {
    pub betas: Vec<f64>,
    /// Aligned real channel Re Σ_i γ_ki e^{jβ_i} per user.
    pub h_eff: Vec<f64>,
    /// Final value of Σ_k (Im Σ_i γ_ki e^{jβ_i})².
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Alignment succeeds when the objective falls below this times Σ_k γ_kk².
pub const ALIGN_TOL_REL: f64 = 1e-10;

const ALIGN_MAX_ITERS: usize = 200;

/// In-place solve of a k×k linear system by partially pivoted elimination.
fn solve_in_place(a: &mut [f64], b: &mut [f64], k: usize) -> bool {
    for col in 0..k {
        let mut piv = col;
        for row in col + 1..k {
            if a[row * k + col].abs() > a[piv * k + col].abs() {
                piv = row;
            }
        }
        if a[piv * k + col].abs() < 1e-300 {
            return false;
        }
        if piv != col {
            for c in 0..k {
                a.swap(piv * k + c, col * k + c);
            }
            b.swap(piv, col);
        }
        let d = a[col * k + col];
        for row in col + 1..k {
            let m = a[row * k + col] / d;
            if m != 0.0 {
                for c in col..k {
                    a[row * k + c] -= m * a[col * k + c];
                }
                b[row] -= m * b[col];
            }
        }
    }
    for col in (0..k).rev() {
        let mut s = b[col];
        for c in col + 1..k {
            s -= a[col * k + c] * b[c];
        }
        b[col] = s / a[col * k + col];
    }
    true
}

/// Damped Gauss-Newton solve of the joint phase profile.
///
/// Minimizes Σ_k (Im Σ_i γ_ki e^{jβ_i})² from β = 0 with a Levenberg
/// damping that grows tenfold on a rejected step and shrinks on acceptance.
/// A failure to reach the tolerance inside the iteration cap returns the best
/// point found with `converged = false`; the trial still counts.
pub fn align_phases(g: &GammaMatrix) -> AlignOutcome {
    let k = g.k;
    let tol = ALIGN_TOL_REL * (0..k).map(|u| g.diag(u) * g.diag(u)).sum::<f64>();
    let eval = |beta: &[f64], r: &mut [f64]| {
        for u in 0..k {
            let mut s = Complex64::new(0.0, 0.0);
            for i in 0..k {
                s += g.get(u, i) * Complex64::from_polar(1.0, beta[i]);
            }
            r[u] = s.im;
        }
    };
    let mut beta = vec![0.0f64; k];
    let mut r = vec![0.0f64; k];
    eval(&beta, &mut r);
    let mut f: f64 = r.iter().map(|x| x * x).sum();
    let mut mu = 1e-3;
    let mut iters = 0usize;
    'outer: while f > tol && iters < ALIGN_MAX_ITERS {
        let mut jtj = vec![0.0f64; k * k];
        let mut jtr = vec![0.0f64; k];
        let mut jmat = vec![0.0f64; k * k];
        for i in 0..k {
            let ph = Complex64::from_polar(1.0, beta[i]);
            for u in 0..k {
                jmat[u * k + i] = (g.get(u, i) * ph).re;
            }
        }
        for a in 0..k {
            for b in 0..k {
                let mut s = 0.0;
                for u in 0..k {
                    s += jmat[u * k + a] * jmat[u * k + b];
                }
                jtj[a * k + b] = s;
            }
            jtr[a] = (0..k).map(|u| jmat[u * k + a] * r[u]).sum();
        }
        let scale = ((0..k).map(|i| jtj[i * k + i]).sum::<f64>() / k as f64).max(1e-300);
        loop {
            if iters >= ALIGN_MAX_ITERS {
                break 'outer;
            }
            iters += 1;
            let mut a = jtj.clone();
            for i in 0..k {
                a[i * k + i] += mu * scale;
            }
            let mut step: Vec<f64> = jtr.iter().map(|x| -x).collect();
            if solve_in_place(&mut a, &mut step, k) {
                let nb: Vec<f64> = beta.iter().zip(&step).map(|(b, d)| b + d).collect();
                let mut nr = vec![0.0f64; k];
                eval(&nb, &mut nr);
                let nf: f64 = nr.iter().map(|x| x * x).sum();
                if nf < f {
                    beta = nb;
                    r = nr;
                    f = nf;
                    mu = (mu * 0.3).max(1e-15);
                    break;
                }
            }
            mu *= 10.0;
            if mu > 1e12 {
                break 'outer;
            }
        }
    }
    let mut h_eff = vec![0.0f64; k];
    for u in 0..k {
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..k {
            s += g.get(u, i) * Complex64::from_polar(1.0, beta[i]);
        }
        h_eff[u] = s.re;
    }
    AlignOutcome {
        betas: beta,
        h_eff,
        objective: f,
        converged: f <= tol,
        iterations: iters,
    }
}

/// Empirical BER with Wilson 95% bounds at one operating point.
#[derive(Debug, Clone)]
pub struct MonteCarloBer {
    pub trials: u64,
    pub bit_errors: Vec<u64>,
    pub bits: Vec<u64>,
    pub ber: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub align_failures: u64,
}

/// Wilson score interval for `errors` successes in `n` Bernoulli trials at
/// 95% confidence.
pub fn wilson_interval(errors: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054f64;
    let nf = n as f64;
    let p = errors as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Fewest trials an empirical estimate may use.
pub const MIN_TRIALS: u64 = 1000;

fn check_sic_order(sic_order: &[usize], k: usize) -> Result<()> {
    if sic_order.len() != k {
        return Err(Error::InvalidArgument(format!(
            "sic order length {} for {k} users",
            sic_order.len()
        )));
    }
    let mut seen = vec![false; k];
    for &u in sic_order {
        if u >= k || std::mem::replace(&mut seen[u], true) {
            return Err(Error::InvalidArgument(format!(
                "sic order {sic_order:?} is not a permutation of 0..{k}"
            )));
        }
    }
    Ok(())
}

struct SweepAccum {
    errs: Vec<u64>,
    fails: u64,
}

impl SweepAccum {
    fn zero(len: usize) -> Self {
        SweepAccum {
            errs: vec![0u64; len],
            fails: 0,
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.errs.iter_mut().zip(&other.errs) {
            *a += b;
        }
        self.fails += other.fails;
        self
    }
}

/// Empirical NOMA BER across a power sweep, all points sharing every channel,
/// symbol, and noise draw. Row k of the unit-power gamma matrix scales by
/// √P_k at each point, the alignment re-solves, and the shared symbol passes
/// through the shared SIC detector. `powers_mw` holds one per-user power
/// vector per sweep point.
#[allow(clippy::too_many_arguments)]
pub fn sweep_ber_mc(
    grid: &SurfaceGrid,
    factor: &CorrelationFactor,
    links: &[UserLinkParams],
    noise: &NoiseModel,
    sic_order: &[usize],
    powers_mw: &[Vec<f64>],
    trials: u64,
    seed: u64,
) -> Result<Vec<MonteCarloBer>> {
    let k = links.len();
    check_sic_order(sic_order, k)?;
    if trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!(
            "{trials} trials requested, minimum is {MIN_TRIALS}"
        )));
    }
    if powers_mw.is_empty()
        || powers_mw
            .iter()
            .any(|p| p.len() != k || p.iter().any(|&v| !(v > 0.0)))
    {
        return Err(Error::InvalidArgument(
            "each sweep point needs one positive power per user".into(),
        ));
    }
    let unit: Vec<UserLinkParams> = links.iter().map(|l| l.with_power_mw(1.0)).collect();
    let pams: Vec<Pam> = links
        .iter()
        .map(|l| Pam::from_qam_order(l.mod_order))
        .collect::<Result<_>>()?;
    let stage_pams: Vec<Pam> = sic_order.iter().map(|&u| pams[u].clone()).collect();
    let sigma = noise.sigma_n();
    let scales: Vec<Vec<f64>> = powers_mw
        .iter()
        .map(|p| p.iter().map(|v| v.sqrt()).collect())
        .collect();
    let np = powers_mw.len();

    let acc = (0..trials)
        .into_par_iter()
        .try_fold(
            || SweepAccum::zero(np * k),
            |mut acc, t| -> Result<SweepAccum> {
                let ts = derived_seed(seed, t);
                let sample = sample_channels(factor, k, derived_seed(ts, 1));
                let gam = effective_gammas(grid, &sample, &unit)?;
                let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(ts, 0));
                let sym: Vec<(usize, usize)> = pams
                    .iter()
                    .map(|p| {
                        let side = p.side() as usize;
                        (rng.gen_range(0..side), rng.gen_range(0..side))
                    })
                    .collect();
                let ni: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
                let nq: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
                for (pi, sc) in scales.iter().enumerate() {
                    let scaled = gam.scaled_rows(sc);
                    let al = align_phases(&scaled);
                    if !al.converged {
                        acc.fails += 1;
                        log::debug!(
                            "alignment failure at trial {t} point {pi}: objective {:.3e}",
                            al.objective
                        );
                    }
                    let mut yi = ni;
                    let mut yq = nq;
                    for u in 0..k {
                        yi += al.h_eff[u] * pams[u].level(sym[u].0);
                        yq += al.h_eff[u] * pams[u].level(sym[u].1);
                    }
                    let stage_h: Vec<f64> = sic_order.iter().map(|&u| al.h_eff[u]).collect();
                    let dec_i = sic_detect(&stage_pams, &stage_h, yi);
                    let dec_q = sic_detect(&stage_pams, &stage_h, yq);
                    for (s, &u) in sic_order.iter().enumerate() {
                        acc.errs[pi * k + u] += pams[u].diff_bits(dec_i[s], sym[u].0) as u64
                            + pams[u].diff_bits(dec_q[s], sym[u].1) as u64;
                    }
                }
                Ok(acc)
            },
        )
        .try_reduce(|| SweepAccum::zero(np * k), |a, b| Ok(a.merge(b)))?;

    Ok((0..np)
        .map(|pi| {
            let bit_errors: Vec<u64> = (0..k).map(|u| acc.errs[pi * k + u]).collect();
            let bits: Vec<u64> = pams
                .iter()
                .map(|p| trials * 2 * p.bits_per_dim() as u64)
                .collect();
            let ber = bit_errors
                .iter()
                .zip(&bits)
                .map(|(&e, &n)| e as f64 / n as f64)
                .collect();
            let (ci_low, ci_high) = bit_errors
                .iter()
                .zip(&bits)
                .map(|(&e, &n)| wilson_interval(e, n))
                .unzip();
            MonteCarloBer {
                trials,
                bit_errors,
                bits,
                ber,
                ci_low,
                ci_high,
                align_failures: acc.fails,
            }
        })
        .collect())
}

/// Empirical BER at the link powers already carried by `links`.
pub fn estimate_ber(
    grid: &SurfaceGrid,
    factor: &CorrelationFactor,
    links: &[UserLinkParams],
    noise: &NoiseModel,
    sic_order: &[usize],
    trials: u64,
    seed: u64,
) -> Result<MonteCarloBer> {
    let point: Vec<f64> = links.iter().map(|l| l.tx_power_mw).collect();
    let mut v = sweep_ber_mc(grid, factor, links, noise, sic_order, &[point], trials, seed)?;
    Ok(v.pop().unwrap())
}

/// Empirical per-user BER of the orthogonal baseline across a power sweep.
///
/// Each user transmits alone in its slot with modulation M^K and power K·P,
/// keeping rate and average power equal to the superimposed system. Its own
/// partition stays aligned; the other partitions remain configured for their
/// own users, so their contributions keep a random phase the receiver does
/// not know. Detection equalizes by the known aligned magnitude only.
pub fn sweep_oma_mc(
    grid: &SurfaceGrid,
    factor: &CorrelationFactor,
    links: &[UserLinkParams],
    noise: &NoiseModel,
    powers_mw: &[Vec<f64>],
    trials: u64,
    seed: u64,
) -> Result<Vec<MonteCarloBer>> {
    let k = links.len();
    if trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!(
            "{trials} trials requested, minimum is {MIN_TRIALS}"
        )));
    }
    if powers_mw.is_empty()
        || powers_mw
            .iter()
            .any(|p| p.len() != k || p.iter().any(|&v| !(v > 0.0)))
    {
        return Err(Error::InvalidArgument(
            "each sweep point needs one positive power per user".into(),
        ));
    }
    let oma_pams: Vec<Pam> = links
        .iter()
        .map(|l| {
            let order = (l.mod_order as u64).checked_pow(k as u32).unwrap_or(u64::MAX);
            if order > 4096 {
                return Err(Error::UnsupportedModulation(format!(
                    "orthogonal baseline needs order {}^{k} = {order} > 4096",
                    l.mod_order
                )));
            }
            Pam::from_qam_order(order as u32)
        })
        .collect::<Result<_>>()?;
    let unit: Vec<UserLinkParams> = links.iter().map(|l| l.with_power_mw(1.0)).collect();
    // Unit rows normalize by the superimposed constellation's ν; moving to
    // M^K rescales by √(ν/ν_oma) on top of the K-fold power boost.
    let nu_fix: Vec<f64> = links
        .iter()
        .zip(&oma_pams)
        .map(|(l, p)| (qam_nu(l.mod_order) / qam_nu(p.side() * p.side())).sqrt())
        .collect();
    let sigma = noise.sigma_n();
    let np = powers_mw.len();

    let acc = (0..trials)
        .into_par_iter()
        .try_fold(
            || SweepAccum::zero(np * k),
            |mut acc, t| -> Result<SweepAccum> {
                let ts = derived_seed(seed, t);
                let sample = sample_channels(factor, k, derived_seed(ts, 1));
                let gam = effective_gammas(grid, &sample, &unit)?;
                let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(ts, 0));
                let mut sym = Vec::with_capacity(k);
                let mut noise_iq = Vec::with_capacity(k);
                for p in &oma_pams {
                    let side = p.side() as usize;
                    sym.push((rng.gen_range(0..side), rng.gen_range(0..side)));
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    noise_iq.push((a * sigma, b * sigma));
                }
                for (pi, pw) in powers_mw.iter().enumerate() {
                    for u in 0..k {
                        let scale = (k as f64 * pw[u] * nu_fix[u] * nu_fix[u]).sqrt();
                        let mut h = Complex64::new(0.0, 0.0);
                        for i in 0..gam.k {
                            h += gam.get(u, i);
                        }
                        let h = h * scale;
                        let known = gam.diag(u) * scale;
                        let s = Complex64::new(
                            oma_pams[u].level(sym[u].0),
                            oma_pams[u].level(sym[u].1),
                        );
                        let y = h * s + Complex64::new(noise_iq[u].0, noise_iq[u].1);
                        let (zi, zq) = if known > 0.0 {
                            (y.re / known, y.im / known)
                        } else {
                            (0.0, 0.0)
                        };
                        let di = oma_pams[u].slice(zi);
                        let dq = oma_pams[u].slice(zq);
                        acc.errs[pi * k + u] += oma_pams[u].diff_bits(di, sym[u].0) as u64
                            + oma_pams[u].diff_bits(dq, sym[u].1) as u64;
                    }
                }
                Ok(acc)
            },
        )
        .try_reduce(|| SweepAccum::zero(np * k), |a, b| Ok(a.merge(b)))?;

    Ok((0..np)
        .map(|pi| {
            let bit_errors: Vec<u64> = (0..k).map(|u| acc.errs[pi * k + u]).collect();
            let bits: Vec<u64> = oma_pams
                .iter()
                .map(|p| trials * 2 * p.bits_per_dim() as u64)
                .collect();
            let ber = bit_errors
                .iter()
                .zip(&bits)
                .map(|(&e, &n)| e as f64 / n as f64)
                .collect();
            let (ci_low, ci_high) = bit_errors
                .iter()
                .zip(&bits)
                .map(|(&e, &n)| wilson_interval(e, n))
                .unzip();
            MonteCarloBer {
                trials,
                bit_errors,
                bits,
                ber,
                ci_low,
                ci_high,
                align_failures: 0,
            }
        })
        .collect())
}

/// Orthogonal baseline at the link powers already carried by `links`.
pub fn run_oma_baseline(
    grid: &SurfaceGrid,
    factor: &CorrelationFactor,
    links: &[UserLinkParams],
    noise: &NoiseModel,
    trials: u64,
    seed: u64,
) -> Result<MonteCarloBer> {
    let point: Vec<f64> = links.iter().map(|l| l.tx_power_mw).collect();
    let mut v = sweep_oma_mc(grid, factor, links, noise, &[point], trials, seed)?;
    Ok(v.pop().unwrap())
}

/// Raw gamma draws for distribution-level validation.
#[derive(Debug, Clone)]
pub struct GammaDraws {
    /// kk[u][t]: aligned magnitude of user u at draw t.
    pub kk: Vec<Vec<f64>>,
    /// re[u][i][t]: Re γ_ui at draw t; the i = u slot duplicates kk.
    pub re: Vec<Vec<Vec<f64>>>,
}

/// Samples the gamma matrix over independent field draws.
pub fn sample_gamma_draws(
    grid: &SurfaceGrid,
    factor: &CorrelationFactor,
    links: &[UserLinkParams],
    draws: usize,
    seed: u64,
) -> Result<GammaDraws> {
    let k = links.len();
    let mats: Vec<GammaMatrix> = (0..draws as u64)
        .into_par_iter()
        .map(|t| {
            let sample = sample_channels(factor, k, derived_seed(seed, t));
            effective_gammas(grid, &sample, links)
        })
        .collect::<Result<_>>()?;
    let mut kk = vec![vec![0.0f64; draws]; k];
    let mut re = vec![vec![vec![0.0f64; draws]; k]; k];
    for (t, m) in mats.iter().enumerate() {
        for u in 0..k {
            kk[u][t] = m.diag(u);
            for i in 0..k {
                re[u][i][t] = m.get(u, i).re;
            }
        }
    }
    Ok(GammaDraws { kk, re })
}

const DUMP_MAGIC: &[u8; 4] = b"CSMP";
const DUMP_VERSION: u32 = 1;

/// Writes channel samples in the length-prefixed record format:
/// magic "CSMP", u32 version, then per record a u64 payload length followed
/// by u64 seed, u32 user count, u32 point count, and (K+1)·N little-endian
/// (re, im) f64 pairs, user fields first, then the shared field.
pub fn write_channel_samples<W: Write>(mut w: W, samples: &[ChannelSample]) -> Result<()> {
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&DUMP_VERSION.to_le_bytes())?;
    for s in samples {
        let k = s.h.len() as u64;
        let n = s.g.len() as u64;
        let payload = 8 + 4 + 4 + (k + 1) * n * 16;
        w.write_all(&payload.to_le_bytes())?;
        w.write_all(&s.seed.to_le_bytes())?;
        w.write_all(&(k as u32).to_le_bytes())?;
        w.write_all(&(n as u32).to_le_bytes())?;
        for row in s.h.iter().chain(std::iter::once(&s.g)) {
            for v in row {
                w.write_all(&v.re.to_le_bytes())?;
                w.write_all(&v.im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads a stream written by [`write_channel_samples`].
pub fn read_channel_samples<R: Read>(mut r: R) -> Result<Vec<ChannelSample>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Parse("bad channel sample magic".into()));
    }
    let mut ver = [0u8; 4];
    r.read_exact(&mut ver)?;
    if u32::from_le_bytes(ver) != DUMP_VERSION {
        return Err(Error::Parse(format!(
            "unsupported channel sample version {}",
            u32::from_le_bytes(ver)
        )));
    }
    let mut out = Vec::new();
    loop {
        let mut lenb = [0u8; 8];
        match r.read_exact(&mut lenb) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let payload = u64::from_le_bytes(lenb);
        let mut head = [0u8; 16];
        r.read_exact(&mut head)?;
        let seed = u64::from_le_bytes(head[0..8].try_into().unwrap());
        let k = u32::from_le_bytes(head[8..12].try_into().unwrap()) as u64;
        let n = u32::from_le_bytes(head[12..16].try_into().unwrap()) as u64;
        if n > 10_000_000 || k > 64 || payload != 16 + (k + 1) * n * 16 {
            return Err(Error::Parse(format!(
                "inconsistent record: payload {payload}, k {k}, n {n}"
            )));
        }
        let read_field = |r: &mut R| -> Result<Vec<Complex64>> {
            let mut buf = vec![0u8; (n * 16) as usize];
            r.read_exact(&mut buf)?;
            Ok(buf
                .chunks_exact(16)
                .map(|c| {
                    Complex64::new(
                        f64::from_le_bytes(c[0..8].try_into().unwrap()),
                        f64::from_le_bytes(c[8..16].try_into().unwrap()),
                    )
                })
                .collect())
        };
        let h: Vec<Vec<Complex64>> = (0..k).map(|_| read_field(&mut r)).collect::<Result<_>>()?;
        let g = read_field(&mut r)?;
        out.push(ChannelSample { h, g, seed });
    }
    Ok(out)
}
