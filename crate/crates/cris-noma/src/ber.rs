//! Q-function expansion tables for SIC detection and CF-inversion BER.
//!
//! Conditioned on aligned effective channels h = (h_1..h_K), the per-user BER
//! of the SIC detector is an exact finite sum Σ_q c_q Q((a_q·h)/σ_n). The
//! coefficients come from enumerating, per real PAM dimension, every joint
//! symbol combination and every decision path of the SIC prefix: each path is
//! an interval of the received value whose endpoints are integer linear forms
//! in h. Averaging over the channel distribution then needs only the CF of
//! h_eff at the a_q multipliers (the Gil-Pelaez-style inversion below).

use crate::channel::EffectiveChannelStats;
use crate::qam::Pam;
use crate::quad::integrate;
use crate::{q_function, Error, Result};
use num_complex::Complex64;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;

/// Complex noise n ~ CN(0, 2σ_n²): variance σ_n² per real dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// σ_n² in mW.
    pub sigma_n_sq: f64,
}

impl NoiseModel {
    pub fn new(sigma_n_sq: f64) -> Result<Self> {
        if !(sigma_n_sq > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise variance {sigma_n_sq} must be positive"
            )));
        }
        Ok(NoiseModel { sigma_n_sq })
    }

    /// Per-dimension noise standard deviation σ_n in √mW.
    pub fn sigma_n(&self) -> f64 {
        self.sigma_n_sq.sqrt()
    }
}

/// One expansion term: c · Q((a·h)/σ_n).
#[derive(Debug, Clone, PartialEq)]
pub struct QTerm {
    pub c: f64,
    /// Channel multipliers indexed by user; integer-valued by construction.
    pub a: Vec<f64>,
}

/// Q-function expansion coefficients for all users of one modulation set.
#[derive(Debug, Clone, PartialEq)]
pub struct QTermTable {
    /// M_k per user, in user index order.
    pub mod_orders: Vec<u32>,
    /// sic_order[s] = user decoded at stage s.
    pub sic_order: Vec<usize>,
    /// per_user[k] = expansion terms for user k's BER.
    pub per_user: Vec<Vec<QTerm>>,
}

/// Lower/upper interval endpoint as an integer linear form in h.
#[derive(Clone, PartialEq, Eq, Hash)]
struct LinForm(Vec<i64>);

impl LinForm {
    fn eval(&self, h: &[f64]) -> f64 {
        self.0.iter().zip(h).map(|(&c, &x)| c as f64 * x).sum()
    }
}

/// Strongly ordered representative channel with irrational jitter so that no
/// two distinct integer forms evaluate equal.
fn representative_channel(k: usize) -> Vec<f64> {
    let jit = [
        5e-4 * 2.0_f64.sqrt(),
        7e-4 * 3.0_f64.sqrt(),
        11e-4 * 5.0_f64.sqrt(),
    ];
    (0..k)
        .map(|j| 64.0_f64.powi((k - 1 - j) as i32) * (1.0 + jit[j]))
        .collect()
}

fn select_bound(
    candidates: &[LinForm],
    hrep: &[f64],
    take_max: bool,
) -> Result<Option<LinForm>> {
    let mut best: Option<(LinForm, f64)> = None;
    for cand in candidates {
        let v = cand.eval(hrep);
        match &best {
            None => best = Some((cand.clone(), v)),
            Some((bf, bv)) => {
                if (v - bv).abs() < 1e-6 * (1.0 + bv.abs()) {
                    if cand != bf {
                        return Err(Error::Validation(format!(
                            "ambiguous decision geometry: forms {:?} and {:?} coincide at the representative channel",
                            cand.0, bf.0
                        )));
                    }
                } else if (take_max && v > *bv) || (!take_max && v < *bv) {
                    best = Some((cand.clone(), v));
                }
            }
        }
    }
    Ok(best.map(|(f, _)| f))
}

/// Cartesian product over per-position radices; yields index vectors.
fn for_each_combo(radices: &[usize], mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let mut idx = vec![0usize; radices.len()];
    loop {
        f(&idx)?;
        let mut pos = radices.len();
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < radices[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Derives the Q-term expansion for every user by SIC path enumeration.
///
/// `mod_orders` is indexed by user; `sic_order[s]` names the user decoded at
/// stage s (strongest first). Valid wherever the decision-region geometry
/// matches the strongly ordered representative channel; for the modulation
/// pairs whose stage boundaries sit strictly inside earlier-stage regions for
/// every positive h (e.g. any BPSK-per-dimension second stage) the expansion
/// is exact for all h > 0 in SIC order.
pub fn derive_qterm_table(mod_orders: &[u32], sic_order: &[usize]) -> Result<QTermTable> {
    let k = mod_orders.len();
    if k == 0 || k > 3 {
        return Err(Error::UnsupportedModulation(format!(
            "SIC enumeration supports 1..=3 users, got {k}"
        )));
    }
    let mut seen = vec![false; k];
    if sic_order.len() != k || sic_order.iter().any(|&u| u >= k || std::mem::replace(&mut seen[u], true)) {
        return Err(Error::InvalidArgument(format!(
            "sic_order {sic_order:?} is not a permutation of 0..{k}"
        )));
    }
    let pams: Vec<Pam> = mod_orders
        .iter()
        .map(|&m| Pam::from_qam_order(m))
        .collect::<Result<_>>()?;
    let hrep = representative_channel(k);
    // Map user -> stage order for evaluating h at stage positions.
    let hrep_user: Vec<f64> = {
        let mut v = vec![0.0; k];
        for (stage, &u) in sic_order.iter().enumerate() {
            v[u] = hrep[stage];
        }
        v
    };
    let sides: Vec<usize> = (0..k).map(|u| pams[u].side() as usize).collect();
    let m_prob = 1.0 / sides.iter().product::<usize>() as f64;

    let mut per_user: Vec<Vec<QTerm>> = Vec::with_capacity(k);
    for (pos, &user) in sic_order.iter().enumerate() {
        let stages = &sic_order[..=pos];
        let bits = pams[user].bits_per_dim() as f64;
        let mut acc: HashMap<LinForm, f64> = HashMap::new();
        let mut constant = 0.0f64;

        for_each_combo(&sides, |m_idx| {
            // Conditional mean of the received value: Σ_u h_u m_u.
            let mean: Vec<i64> = (0..k).map(|u| pams[u].level_int(m_idx[u])).collect();
            let path_radices: Vec<usize> = stages.iter().map(|&u| sides[u]).collect();
            for_each_combo(&path_radices, |path| {
                let err_bits = pams[user].diff_bits(path[pos], m_idx[user]);
                if err_bits == 0 {
                    return Ok(());
                }
                let weight = m_prob * err_bits as f64 / bits;
                // Interval for this decision path: intersect per-stage bounds.
                let mut lowers: Vec<LinForm> = Vec::new();
                let mut uppers: Vec<LinForm> = Vec::new();
                for (s, &su) in stages.iter().enumerate() {
                    // Offset of earlier decided levels: Σ_{t<s} h_t μ_t.
                    let mut base = vec![0i64; k];
                    for (t, &tu) in stages[..s].iter().enumerate() {
                        base[tu] = pams[tu].level_int(path[t]);
                    }
                    let side = pams[su].side() as usize;
                    let di = path[s];
                    if di > 0 {
                        let mut f = base.clone();
                        f[su] += pams[su].threshold_int(di - 1);
                        lowers.push(LinForm(f));
                    }
                    if di < side - 1 {
                        let mut f = base;
                        f[su] += pams[su].threshold_int(di);
                        uppers.push(LinForm(f));
                    }
                }
                let lower = select_bound(&lowers, &hrep_user, true)?;
                let upper = select_bound(&uppers, &hrep_user, false)?;
                if let (Some(l), Some(u)) = (&lower, &upper) {
                    if l.eval(&hrep_user) >= u.eval(&hrep_user) {
                        return Ok(());
                    }
                }
                // P(r ∈ (L, U] | m) = Q((L − mean)/σ) − Q((U − mean)/σ).
                let centered = |f: &LinForm| {
                    LinForm(f.0.iter().zip(&mean).map(|(&c, &m)| c - m).collect())
                };
                match lower {
                    Some(l) => *acc.entry(centered(&l)).or_insert(0.0) += weight,
                    None => constant += weight,
                }
                if let Some(u) = upper {
                    *acc.entry(centered(&u)).or_insert(0.0) -= weight;
                }
                Ok(())
            })
        })?;

        // Canonicalize negative-argument terms: Q(f) = 1 − Q(−f).
        let mut terms: Vec<(Vec<i64>, f64)> = Vec::new();
        let mut flipped: HashMap<LinForm, f64> = HashMap::new();
        for (form, c) in acc {
            if form.eval(&hrep_user) < 0.0 {
                constant += c;
                let neg = LinForm(form.0.iter().map(|&x| -x).collect());
                *flipped.entry(neg).or_insert(0.0) -= c;
            } else {
                *flipped.entry(form).or_insert(0.0) += c;
            }
        }
        for (form, c) in flipped {
            if c.abs() > 1e-9 {
                terms.push((form.0, c));
            }
        }
        if constant.abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "user {user}: constant offset {constant} did not cancel; enumeration inconsistent"
            )));
        }
        terms.sort_by(|x, y| x.0.cmp(&y.0));
        per_user.push(
            terms
                .into_iter()
                .map(|(a, c)| QTerm {
                    c,
                    a: a.into_iter().map(|v| v as f64).collect(),
                })
                .collect(),
        );
    }

    // per_user is in stage order; rearrange to user order.
    let mut by_user = vec![Vec::new(); k];
    for (pos, &user) in sic_order.iter().enumerate() {
        by_user[user] = per_user[pos].clone();
    }
    Ok(QTermTable {
        mod_orders: mod_orders.to_vec(),
        sic_order: sic_order.to_vec(),
        per_user: by_user,
    })
}

impl QTermTable {
    pub fn users(&self) -> usize {
        self.mod_orders.len()
    }

    /// Conditional BER of `user` at fixed aligned channels h.
    pub fn conditional_ber(&self, user: usize, h: &[f64], sigma_n: f64) -> f64 {
        self.per_user[user]
            .iter()
            .map(|t| {
                let x: f64 = t.a.iter().zip(h).map(|(&a, &hv)| a * hv).sum();
                t.c * q_function(x / sigma_n)
            })
            .sum()
    }
}

impl fmt::Display for QTermTable {
    /// One row per term: user (1-based), c, a_1..a_K; header records the
    /// modulation set and decoding order.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mods: Vec<String> = self.mod_orders.iter().map(|m| m.to_string()).collect();
        let sic: Vec<String> = self.sic_order.iter().map(|u| (u + 1).to_string()).collect();
        writeln!(f, "# qterms mods={} sic={}", mods.join(","), sic.join(","))?;
        writeln!(f, "# user c a_1..a_{}", self.users())?;
        for (user, terms) in self.per_user.iter().enumerate() {
            for t in terms {
                write!(f, "{} {}", user + 1, t.c)?;
                for a in &t.a {
                    write!(f, " {a}")?;
                }
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

/// Parses the Display format back into a table.
pub fn parse_qterm_table(text: &str) -> Result<QTermTable> {
    let mut mod_orders: Vec<u32> = Vec::new();
    let mut sic_order: Vec<usize> = Vec::new();
    let mut rows: Vec<(usize, QTerm)> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Parse(format!("line {}: {what}: {line}", ln + 1));
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(head) = rest.strip_prefix("qterms ") {
                for field in head.split_whitespace() {
                    if let Some(v) = field.strip_prefix("mods=") {
                        mod_orders = v
                            .split(',')
                            .map(|s| s.parse::<u32>())
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|_| bad("bad mods list"))?;
                    } else if let Some(v) = field.strip_prefix("sic=") {
                        sic_order = v
                            .split(',')
                            .map(|s| s.parse::<usize>().map(|u| u.wrapping_sub(1)))
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|_| bad("bad sic list"))?;
                    }
                }
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        let user: usize = parts
            .next()
            .ok_or_else(|| bad("missing user"))?
            .parse()
            .map_err(|_| bad("bad user"))?;
        if user == 0 {
            return Err(bad("user indices are 1-based"));
        }
        let c: f64 = parts
            .next()
            .ok_or_else(|| bad("missing c"))?
            .parse()
            .map_err(|_| bad("bad c"))?;
        let a: Vec<f64> = parts
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("bad multiplier"))?;
        rows.push((user - 1, QTerm { c, a }));
    }
    if mod_orders.is_empty() {
        return Err(Error::Parse("missing '# qterms' header".into()));
    }
    let k = mod_orders.len();
    if sic_order.len() != k {
        return Err(Error::Parse("sic list length mismatch".into()));
    }
    let mut per_user = vec![Vec::new(); k];
    for (user, term) in rows {
        if user >= k || term.a.len() != k {
            return Err(Error::Parse(format!(
                "row shape mismatch for user {}",
                user + 1
            )));
        }
        per_user[user].push(term);
    }
    Ok(QTermTable {
        mod_orders,
        sic_order,
        per_user,
    })
}

/// Quadrature controls for the CF inversion.
#[derive(Debug, Clone, Copy)]
pub struct BerQuad {
    /// Absolute tolerance of the z-integral.
    pub abs_tol: f64,
}

impl Default for BerQuad {
    fn default() -> Self {
        BerQuad { abs_tol: 1e-10 }
    }
}

const BER_Z0: f64 = 1e-6;
const BER_ZMAX: f64 = 8.1;

/// Unconditional BER of `user` via CF inversion:
///
///   BER = Σ_q [c_q/2 + (c_q/π) ∫₀^∞ Re(j e^{−z²/2} Φ_{X_q}(z/σ_n)) dz/z]
///
/// with Φ_{X_q}(t) = Π_k Φ_{h_eff_k}(a_kq t). The removable singularity at
/// z = 0 contributes −E[X_q]/σ_n per unit length; the strip [0, z₀] uses that
/// limit, the rest adaptive quadrature up to where e^{−z²/2} < 1e−14.
pub fn ber_user(
    table: &QTermTable,
    user: usize,
    stats: &[EffectiveChannelStats],
    noise: &NoiseModel,
    quad: &BerQuad,
) -> Result<f64> {
    let k = table.users();
    if stats.len() != k || user >= k {
        return Err(Error::InvalidArgument(format!(
            "table has {k} users, got {} stats (user {user})",
            stats.len()
        )));
    }
    let sigma = noise.sigma_n();
    let terms = &table.per_user[user];
    if terms.is_empty() {
        return Ok(0.0);
    }
    let half: f64 = terms.iter().map(|t| t.c).sum::<f64>() / 2.0;
    let means: Vec<f64> = stats.iter().map(|s| s.mean_kk).collect();
    let ex = |t: &QTerm| -> f64 { t.a.iter().zip(&means).map(|(&a, &m)| a * m).sum() };
    let limit: f64 = terms.iter().map(|t| -t.c * ex(t) / sigma).sum();
    // Panel cap: a quarter of the fastest oscillation e^{j z E[X_q]/σ}.
    let freq = terms
        .iter()
        .map(|t| (ex(t) / sigma).abs())
        .fold(0.0f64, f64::max);
    let max_panel = if freq > 0.0 {
        (0.5 * PI / freq).clamp(1e-3, 2.0)
    } else {
        2.0
    };
    let mut cache: HashMap<(usize, u64), Complex64> = HashMap::new();
    let integrand = |z: f64| -> f64 {
        cache.clear();
        let damp = (-0.5 * z * z).exp();
        let mut total = 0.0;
        for t in terms {
            let mut prod = Complex64::new(1.0, 0.0);
            for (ki, &a) in t.a.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let key = (ki, a.to_bits());
                let phi = *cache
                    .entry(key)
                    .or_insert_with(|| crate::channel::cf_effective(&stats[ki], a * z / sigma));
                prod *= phi;
            }
            // Re(j e^{−z²/2} Φ / z) = −Im(Φ) e^{−z²/2} / z.
            total += t.c * (-prod.im) * damp / z;
        }
        total
    };
    let mut integrand = integrand;
    let tail = integrate(&mut integrand, BER_Z0, BER_ZMAX, quad.abs_tol, Some(max_panel))?;
    let raw = half + (limit * BER_Z0 + tail) / PI;
    if !(-1e-6..=1.0 + 1e-6).contains(&raw) {
        return Err(Error::Domain(format!(
            "user {user}: inverted BER {raw} outside [0, 1] tolerance band"
        )));
    }
    let clamped = raw.clamp(0.0, 1.0);
    if clamped != raw {
        log::debug!("user {user}: clamped BER {raw} into [0, 1]");
    }
    Ok(clamped)
}

/// Σ_k BER_k.
pub fn sum_ber(
    table: &QTermTable,
    stats: &[EffectiveChannelStats],
    noise: &NoiseModel,
    quad: &BerQuad,
) -> Result<f64> {
    let mut total = 0.0;
    for user in 0..table.users() {
        total += ber_user(table, user, stats, noise, quad)?;
    }
    Ok(total)
}

/// max_k BER_k.
pub fn max_ber(
    table: &QTermTable,
    stats: &[EffectiveChannelStats],
    noise: &NoiseModel,
    quad: &BerQuad,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for user in 0..table.users() {
        worst = worst.max(ber_user(table, user, stats, noise, quad)?);
    }
    Ok(worst)
}
