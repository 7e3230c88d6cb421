//! Joint power and partition-width optimization.
//!
//! Minimizes 10·log10 of the summed analytical BER over per-user transmit
//! powers (dB domain) and partition widths, under P_k ≤ P_max, W_k ≥ 0 and
//! ΣW_k = W. Upper bounds and the width budget enter through an exterior
//! penalty whose multipliers grow tenfold per outer round; lower bounds are
//! kept by projection. The inner solver is projected gradient descent with
//! forward finite differences and Armijo backtracking.
//!
//! Method variants share the machinery: AO freezes powers at P_max, NO is
//! the unoptimized equal split, MM swaps the sum for a log-sum-exp softmax
//! of the per-user log BERs that sharpens every outer round. Every run also
//! scores its baseline candidates at full accuracy and returns whichever
//! point wins, so enlarging the feasible set never degrades the result.

use crate::ber::{ber_user, derive_qterm_table, BerQuad, NoiseModel, QTermTable};
use crate::channel::{effective_stats, PartitionLayout, UserLinkParams};
use crate::special::{CorrelationModel, SeriesLen};
use crate::{dbm_to_mw, Error, Result};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Jo,
    Ao,
    No,
    Mm,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Jo => "JO",
            Method::Ao => "AO",
            Method::No => "NO",
            Method::Mm => "MM",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s.to_ascii_uppercase().as_str() {
            "JO" => Ok(Method::Jo),
            "AO" => Ok(Method::Ao),
            "NO" => Ok(Method::No),
            "MM" => Ok(Method::Mm),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other}; expected JO, AO, NO, or MM"
            ))),
        }
    }
}

/// Decision variables: powers in dBm, widths in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptVariables {
    pub p_dbm: Vec<f64>,
    pub widths: Vec<f64>,
}

/// Exterior-penalty multipliers.
#[derive(Debug, Clone)]
pub struct PenaltyState {
    pub xi: Vec<f64>,
    pub delta: Vec<f64>,
    pub omega_w: f64,
}

impl PenaltyState {
    pub fn fresh(k: usize) -> Self {
        PenaltyState {
            xi: vec![1.0; k],
            delta: vec![1.0; k],
            omega_w: 1.0,
        }
    }

    pub fn zero(k: usize) -> Self {
        PenaltyState {
            xi: vec![0.0; k],
            delta: vec![0.0; k],
            omega_w: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub outer: usize,
    pub inner_iters: usize,
    /// Penalty objective at the end of the round.
    pub objective_db: f64,
    pub max_violation: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub method: Method,
    pub variables: OptVariables,
    /// 10·log10 Σ BER at full accuracy, after the feasibility repair.
    pub objective_db: f64,
    pub per_user_ber: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct OptConfig {
    pub outer: usize,
    pub inner: usize,
    pub grad_tol: f64,
    pub schedule: f64,
    /// Forward-difference step: dB for powers, this × W meters for widths.
    pub fd_step: f64,
    pub mm_tau: f64,
    /// Series length for moment kernels inside the loop.
    pub fast_len: SeriesLen,
    pub loop_quad_tol: f64,
    pub final_quad_tol: f64,
    /// Relative tolerance of the radial moment quadrature.
    pub moment_tol: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            outer: 8,
            inner: 200,
            grad_tol: 1e-6,
            schedule: 10.0,
            fd_step: 1e-3,
            mm_tau: 20.0,
            fast_len: SeriesLen::FAST,
            loop_quad_tol: 1e-8,
            final_quad_tol: 1e-10,
            moment_tol: 1e-9,
        }
    }
}

/// Powers may not fall more than this far below the budget.
pub const POWER_FLOOR_DB: f64 = 60.0;

/// Scenario data the objective needs, with the Q-term table derived once.
#[derive(Debug, Clone)]
pub struct OptContext {
    pub base_links: Vec<UserLinkParams>,
    pub height: f64,
    pub total_width: f64,
    pub corr: CorrelationModel,
    pub noise: NoiseModel,
    pub sic_order: Vec<usize>,
    pub table: QTermTable,
    pub p_max_dbm: f64,
}

impl OptContext {
    pub fn new(
        base_links: Vec<UserLinkParams>,
        height: f64,
        total_width: f64,
        corr: CorrelationModel,
        noise: NoiseModel,
        sic_order: Vec<usize>,
        p_max_dbm: f64,
    ) -> Result<Self> {
        if !(height > 0.0) || !(total_width > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "surface {total_width} x {height} must be positive"
            )));
        }
        let orders: Vec<u32> = base_links.iter().map(|l| l.mod_order).collect();
        let table = derive_qterm_table(&orders, &sic_order)?;
        Ok(OptContext {
            base_links,
            height,
            total_width,
            corr,
            noise,
            sic_order,
            table,
            p_max_dbm,
        })
    }

    pub fn user_count(&self) -> usize {
        self.base_links.len()
    }

    /// The unoptimized point: every user at P_max, equal widths.
    pub fn no_point(&self) -> OptVariables {
        let k = self.user_count();
        OptVariables {
            p_dbm: vec![self.p_max_dbm; k],
            widths: vec![self.total_width / k as f64; k],
        }
    }

    /// Analytical per-user BER at the given variables.
    pub fn ber_per_user(
        &self,
        vars: &OptVariables,
        len: SeriesLen,
        quad: &BerQuad,
        moment_tol: f64,
    ) -> Result<Vec<f64>> {
        let widths: Vec<f64> = vars.widths.iter().map(|w| w.max(0.0)).collect();
        let layout = PartitionLayout::new(widths, self.height)?;
        let links: Vec<UserLinkParams> = self
            .base_links
            .iter()
            .zip(&vars.p_dbm)
            .map(|(l, &p)| l.with_power_mw(dbm_to_mw(p)))
            .collect();
        let stats = effective_stats(&links, &layout, &self.corr, len, moment_tol)?;
        (0..links.len())
            .map(|u| ber_user(&self.table, u, &stats, &self.noise, quad))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
enum Metric {
    SumDb,
    /// Softmax of the per-user log10 BERs with the given sharpness.
    MaxLse { tau: f64 },
}

fn objective_db(bers: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::SumDb => 10.0 * bers.iter().sum::<f64>().max(1e-300).log10(),
        Metric::MaxLse { tau } => {
            let xs: Vec<f64> = bers.iter().map(|b| b.max(1e-300).log10()).collect();
            let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + (xs.iter().map(|x| ((x - m) * tau).exp()).sum::<f64>()).ln() / tau;
            10.0 * lse
        }
    }
}

fn penalty_terms(ctx: &OptContext, vars: &OptVariables, state: &PenaltyState) -> f64 {
    let mut pen = 0.0;
    for (k, &p) in vars.p_dbm.iter().enumerate() {
        pen += state.xi[k] * (p - ctx.p_max_dbm).max(0.0);
    }
    for (k, &w) in vars.widths.iter().enumerate() {
        pen += state.delta[k] * (w - ctx.total_width).max(0.0);
    }
    let dw = vars.widths.iter().sum::<f64>() - ctx.total_width;
    pen + state.omega_w * dw * dw
}

/// Penalized objective 10·log10 ΣBER + hinge and budget penalties.
pub fn penalty_objective(
    ctx: &OptContext,
    vars: &OptVariables,
    state: &PenaltyState,
    cfg: &OptConfig,
) -> Result<f64> {
    let quad = BerQuad {
        abs_tol: cfg.loop_quad_tol,
    };
    let bers = ctx.ber_per_user(vars, cfg.fast_len, &quad, cfg.moment_tol)?;
    Ok(objective_db(&bers, Metric::SumDb) + penalty_terms(ctx, vars, state))
}

/// Forward-difference gradient of the penalized objective over all 2K
/// variables: powers in dB first, then widths scaled by W. The 2K probe
/// evaluations run concurrently and reduce in index order.
pub fn finite_diff_gradient(
    ctx: &OptContext,
    vars: &OptVariables,
    state: &PenaltyState,
    cfg: &OptConfig,
) -> Result<Vec<f64>> {
    let k = ctx.user_count();
    let eval = |v: &OptVariables| penalty_objective(ctx, v, state, cfg);
    let f0 = eval(vars)?;
    (0..2 * k)
        .into_par_iter()
        .map(|i| {
            let mut v = vars.clone();
            if i < k {
                v.p_dbm[i] += cfg.fd_step;
            } else {
                v.widths[i - k] += cfg.fd_step * ctx.total_width;
            }
            Ok((eval(&v)? - f0) / cfg.fd_step)
        })
        .collect()
}

/// Largest constraint violation: hinge overshoots and the width-budget gap.
pub fn max_violation(ctx: &OptContext, vars: &OptVariables) -> f64 {
    let vp = vars
        .p_dbm
        .iter()
        .map(|&p| (p - ctx.p_max_dbm).max(0.0))
        .fold(0.0f64, f64::max);
    let vw = vars
        .widths
        .iter()
        .map(|&w| (w - ctx.total_width).max(0.0))
        .fold(0.0f64, f64::max);
    let vs = (vars.widths.iter().sum::<f64>() - ctx.total_width).abs() / ctx.total_width;
    vp.max(vw).max(vs)
}

/// Packed solver coordinates: optional dB powers, then widths over W.
struct Packing {
    k: usize,
    opt_powers: bool,
}

impl Packing {
    fn dim(&self) -> usize {
        if self.opt_powers {
            2 * self.k
        } else {
            self.k
        }
    }

    fn pack(&self, vars: &OptVariables, w: f64) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        if self.opt_powers {
            x.extend_from_slice(&vars.p_dbm);
        }
        x.extend(vars.widths.iter().map(|&wk| wk / w));
        x
    }

    fn unpack(&self, x: &[f64], frozen: &OptVariables, ctx: &OptContext) -> OptVariables {
        let floor = ctx.p_max_dbm - POWER_FLOOR_DB;
        let (p_dbm, wx) = if self.opt_powers {
            (
                x[..self.k].iter().map(|&p| p.max(floor)).collect(),
                &x[self.k..],
            )
        } else {
            (frozen.p_dbm.clone(), x)
        };
        OptVariables {
            p_dbm,
            widths: wx.iter().map(|&u| (u * ctx.total_width).max(0.0)).collect(),
        }
    }
}

/// Rescales widths onto the budget and clamps powers to it.
fn repair(ctx: &OptContext, vars: &OptVariables) -> OptVariables {
    let k = ctx.user_count();
    let sum: f64 = vars.widths.iter().sum();
    let widths = if sum > 0.0 {
        vars.widths
            .iter()
            .map(|&w| w * ctx.total_width / sum)
            .collect()
    } else {
        vec![ctx.total_width / k as f64; k]
    };
    OptVariables {
        p_dbm: vars.p_dbm.iter().map(|&p| p.min(ctx.p_max_dbm)).collect(),
        widths,
    }
}

struct Candidate {
    vars: OptVariables,
    bers: Vec<f64>,
}

/// Scores a repaired point at full accuracy.
fn score(ctx: &OptContext, cfg: &OptConfig, vars: &OptVariables) -> Result<Candidate> {
    let vars = repair(ctx, vars);
    let quad = BerQuad {
        abs_tol: cfg.final_quad_tol,
    };
    let bers = ctx.ber_per_user(&vars, SeriesLen::Converged, &quad, cfg.moment_tol)?;
    Ok(Candidate { vars, bers })
}

/// The unoptimized baseline, evaluated without iterating.
pub fn evaluate_no(ctx: &OptContext, cfg: &OptConfig) -> Result<OptimizationResult> {
    let c = score(ctx, cfg, &ctx.no_point())?;
    Ok(OptimizationResult {
        method: Method::No,
        objective_db: objective_db(&c.bers, Metric::SumDb),
        per_user_ber: c.bers,
        variables: c.vars,
        trace: Vec::new(),
        evaluations: 1,
    })
}

/// Penalty-method optimization of the scenario under the given method.
///
/// Starts from the equal-share point, or from `init` when warm-starting a
/// sweep. Every point in `candidates` (plus the equal-share baseline) is
/// scored at full accuracy alongside the solver's iterate, and the best
/// under the method's own metric wins; an AO result passed as a candidate
/// therefore bounds JO from above by construction.
pub fn optimize_warm(
    ctx: &OptContext,
    method: Method,
    cfg: &OptConfig,
    init: Option<&OptVariables>,
    candidates: &[&OptVariables],
) -> Result<OptimizationResult> {
    if method == Method::No {
        return evaluate_no(ctx, cfg);
    }
    let k = ctx.user_count();
    let packing = Packing {
        k,
        opt_powers: method != Method::Ao,
    };
    let start = match init {
        Some(v) => repair(ctx, v),
        None => ctx.no_point(),
    };
    let frozen = ctx.no_point();
    // For AO the packing omits powers, so every unpack reads them from the
    // frozen equal-share point: all users at P_max.
    let mut x = packing.pack(&start, ctx.total_width);
    let mut state = PenaltyState::fresh(k);
    let mut tau = cfg.mm_tau;
    let mut trace = Vec::with_capacity(cfg.outer);
    let mut evals = 0usize;
    let loop_quad = BerQuad {
        abs_tol: cfg.loop_quad_tol,
    };

    let metric_of = |tau: f64| match method {
        Method::Mm => Metric::MaxLse { tau },
        _ => Metric::SumDb,
    };

    for outer in 0..cfg.outer {
        let metric = metric_of(tau);
        let eval = |x: &[f64], evals: &mut usize| -> f64 {
            *evals += 1;
            let vars = packing.unpack(x, &frozen, ctx);
            match ctx.ber_per_user(&vars, cfg.fast_len, &loop_quad, cfg.moment_tol) {
                Ok(bers) => objective_db(&bers, metric) + penalty_terms(ctx, &vars, &state),
                Err(_) => f64::INFINITY,
            }
        };
        let grad = |x: &[f64], f0: f64, evals: &mut usize| -> Vec<f64> {
            *evals += packing.dim();
            let xs: Vec<Vec<f64>> = (0..packing.dim())
                .map(|i| {
                    let mut xp = x.to_vec();
                    xp[i] += cfg.fd_step;
                    xp
                })
                .collect();
            let fs: Vec<f64> = xs
                .par_iter()
                .map(|xp| {
                    let vars = packing.unpack(xp, &frozen, ctx);
                    match ctx.ber_per_user(&vars, cfg.fast_len, &loop_quad, cfg.moment_tol) {
                        Ok(bers) => {
                            objective_db(&bers, metric) + penalty_terms(ctx, &vars, &state)
                        }
                        Err(_) => f64::INFINITY,
                    }
                })
                .collect();
            fs.iter()
                .map(|&fi| {
                    if fi.is_finite() {
                        (fi - f0) / cfg.fd_step
                    } else {
                        0.0
                    }
                })
                .collect()
        };

        let mut f0 = eval(&x, &mut evals);
        let mut alpha = 0.25f64;
        let mut inner_done = 0;
        let mut last_step = 0.0;
        for _ in 0..cfg.inner {
            inner_done += 1;
            let g = grad(&x, f0, &mut evals);
            let gsq: f64 = g.iter().map(|v| v * v).sum();
            let gn = gsq.sqrt();
            if gn < cfg.grad_tol {
                break;
            }
            // Cap the first probe at one unit per component (1 dB, or the
            // full aperture width) so the feeble early penalties cannot
            // fling the iterate far outside the feasible box.
            let ginf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut a = alpha.min(1.0 / ginf.max(1e-12));
            let mut accepted = false;
            for _ in 0..40 {
                let xt: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - a * gi).collect();
                let xt = packing.pack(&packing.unpack(&xt, &frozen, ctx), ctx.total_width);
                let ft = eval(&xt, &mut evals);
                if ft <= f0 - 1e-4 * a * gsq {
                    x = xt;
                    f0 = ft;
                    accepted = true;
                    last_step = a;
                    alpha = (a * 2.0).min(1.0);
                    break;
                }
                a *= 0.5;
                if a < 1e-12 {
                    break;
                }
            }
            if !accepted {
                break;
            }
        }

        let vars = packing.unpack(&x, &frozen, ctx);
        trace.push(TraceRow {
            outer,
            inner_iters: inner_done,
            objective_db: f0,
            max_violation: max_violation(ctx, &vars),
            step: last_step,
        });
        for (i, &p) in vars.p_dbm.iter().enumerate() {
            if p - ctx.p_max_dbm > 1e-9 {
                state.xi[i] *= cfg.schedule;
            }
        }
        for (i, &w) in vars.widths.iter().enumerate() {
            if w - ctx.total_width > 1e-12 {
                state.delta[i] *= cfg.schedule;
            }
        }
        if (vars.widths.iter().sum::<f64>() - ctx.total_width).abs() > 1e-9 * ctx.total_width {
            state.omega_w *= cfg.schedule;
        }
        if method == Method::Mm {
            tau *= 2.0;
        }
    }

    let solved = packing.unpack(&x, &frozen, ctx);
    let mut pool: Vec<Candidate> = Vec::with_capacity(candidates.len() + 2);
    pool.push(score(ctx, cfg, &solved)?);
    pool.push(score(ctx, cfg, &ctx.no_point())?);
    for &c in candidates {
        pool.push(score(ctx, cfg, c)?);
    }
    evals += pool.len();
    let select = |c: &Candidate| -> f64 {
        match method {
            Method::Mm => c.bers.iter().cloned().fold(0.0f64, f64::max),
            _ => c.bers.iter().sum(),
        }
    };
    let best = pool
        .into_iter()
        .min_by(|a, b| select(a).total_cmp(&select(b)))
        .unwrap();
    if !best.bers.iter().all(|b| b.is_finite()) {
        return Err(Error::NoFeasiblePoint(
            "optimization produced a non-finite objective".into(),
        ));
    }
    Ok(OptimizationResult {
        method,
        objective_db: objective_db(&best.bers, Metric::SumDb),
        per_user_ber: best.bers,
        variables: best.vars,
        trace,
        evaluations: evals,
    })
}

/// Optimization from the equal-share start with no extra candidates.
pub fn optimize(ctx: &OptContext, method: Method, cfg: &OptConfig) -> Result<OptimizationResult> {
    optimize_warm(ctx, method, cfg, None, &[])
}

/// Outer-round trace as CSV.
pub fn trace_csv(result: &OptimizationResult) -> String {
    use std::fmt::Write as _;
    let mut s = String::from("iteration,objective_db,max_violation,step\n");
    for row in &result.trace {
        let _ = writeln!(
            s,
            "{},{:.12e},{:.12e},{:.12e}",
            row.outer, row.objective_db, row.max_violation, row.step
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SPEED_OF_LIGHT;

    fn lambda() -> f64 {
        SPEED_OF_LIGHT / 28e9
    }

    fn desk_ctx(k: usize) -> OptContext {
        let l = lambda();
        let (orders, durs): (Vec<u32>, Vec<f64>) = match k {
            1 => (vec![4], vec![20.0]),
            _ => (vec![16, 4], vec![20.0, 50.0]),
        };
        let links: Vec<UserLinkParams> = orders
            .iter()
            .zip(&durs)
            .map(|(&m, &d)| UserLinkParams::from_geometry(1.0, d, 30.0, 2.2, m).unwrap())
            .collect();
        OptContext::new(
            links,
            2.0 * l,
            4.0 * l,
            CorrelationModel::sinc(l),
            NoiseModel::new(1e-9).unwrap(),
            (0..k).collect(),
            50.0,
        )
        .unwrap()
    }

    // Full outer schedule: the width-budget penalty is denominated in
    // meters, so at centimeter apertures the multipliers only bite after
    // several tenfold raises.
    fn quick_cfg() -> OptConfig {
        OptConfig {
            inner: 60,
            loop_quad_tol: 1e-7,
            final_quad_tol: 1e-9,
            moment_tol: 1e-7,
            ..OptConfig::default()
        }
    }

    #[test]
    fn hinge_arithmetic_is_exact() {
        let ctx = desk_ctx(2);
        let cfg = quick_cfg();
        let mut vars = ctx.no_point();
        let zero = PenaltyState::zero(2);
        let base = penalty_objective(&ctx, &vars, &zero, &cfg).unwrap();

        vars.p_dbm[0] = ctx.p_max_dbm + 3.0;
        let mut state = PenaltyState::zero(2);
        state.xi[0] = 10.0;
        let with_power = penalty_objective(&ctx, &vars, &state, &cfg).unwrap();
        let base_shift = penalty_objective(&ctx, &vars, &zero, &cfg).unwrap();
        assert!((with_power - base_shift - 30.0).abs() < 1e-9);

        let mut vars = ctx.no_point();
        vars.widths[0] += 0.1;
        let mut state = PenaltyState::zero(2);
        state.omega_w = 100.0;
        let with_sum = penalty_objective(&ctx, &vars, &state, &cfg).unwrap();
        let base_sum = penalty_objective(&ctx, &vars, &zero, &cfg).unwrap();
        assert!((with_sum - base_sum - 1.0).abs() < 1e-9);
        let _ = base;
    }

    #[test]
    fn feasible_point_has_no_penalty() {
        let ctx = desk_ctx(2);
        let cfg = quick_cfg();
        let vars = ctx.no_point();
        let zero = penalty_objective(&ctx, &vars, &PenaltyState::zero(2), &cfg).unwrap();
        let fresh = penalty_objective(&ctx, &vars, &PenaltyState::fresh(2), &cfg).unwrap();
        assert!((zero - fresh).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_quadratic_stub() {
        // The solver's difference scheme on a known quadratic, checked
        // against calculus rather than the BER pipeline.
        let f = |x: &[f64]| 2.0 * x[0] * x[0] + 3.0 * x[1] * x[1] - x[0] * x[1];
        let x0 = [0.7, -0.3];
        let h = 1e-6;
        let f0 = f(&x0);
        let g: Vec<f64> = (0..2)
            .map(|i| {
                let mut xp = x0;
                xp[i] += h;
                (f(&xp) - f0) / h
            })
            .collect();
        let exact = [4.0 * x0[0] - x0[1], 6.0 * x0[1] - x0[0]];
        for i in 0..2 {
            assert!((g[i] - exact[i]).abs() < 1e-4, "{:?} vs {exact:?}", g);
        }
    }

    #[test]
    fn forward_and_central_differences_agree() {
        let ctx = desk_ctx(2);
        let cfg = OptConfig {
            loop_quad_tol: 1e-10,
            moment_tol: 1e-9,
            ..quick_cfg()
        };
        let mut vars = ctx.no_point();
        vars.p_dbm = vec![46.0, 44.0];
        let state = PenaltyState::zero(2);
        let fwd = finite_diff_gradient(&ctx, &vars, &state, &cfg).unwrap();
        let eval = |v: &OptVariables| penalty_objective(&ctx, v, &state, &cfg).unwrap();
        for i in 0..4 {
            let mut hi = vars.clone();
            let mut lo = vars.clone();
            let h = if i < 2 {
                hi.p_dbm[i] += cfg.fd_step;
                lo.p_dbm[i] -= cfg.fd_step;
                cfg.fd_step
            } else {
                hi.widths[i - 2] += cfg.fd_step * ctx.total_width;
                lo.widths[i - 2] -= cfg.fd_step * ctx.total_width;
                cfg.fd_step
            };
            let central = (eval(&hi) - eval(&lo)) / (2.0 * h);
            let denom = central.abs().max(1e-8);
            assert!(
                (fwd[i] - central).abs() / denom < 0.05,
                "component {i}: {} vs {central}",
                fwd[i]
            );
        }
    }

    #[test]
    fn gradient_respects_sic_relabeling() {
        // Identical users are not interchangeable: the first SIC stage
        // decodes against interference, the second after cancellation, so
        // the width gradient at the even split is lopsided. Swapping both
        // the decode order and the variables relabels the system exactly,
        // and the gradient must swap with it.
        let l = lambda();
        let links: Vec<UserLinkParams> = (0..2)
            .map(|_| UserLinkParams::from_geometry(1.0, 30.0, 30.0, 2.2, 4).unwrap())
            .collect();
        let mk = |order: Vec<usize>| {
            OptContext::new(
                links.clone(),
                2.0 * l,
                4.0 * l,
                CorrelationModel::sinc(l),
                NoiseModel::new(1e-9).unwrap(),
                order,
                48.0,
            )
            .unwrap()
        };
        let fwd = mk(vec![0, 1]);
        let rev = mk(vec![1, 0]);
        let cfg = quick_cfg();
        let vars = fwd.no_point();
        let state = PenaltyState::zero(2);
        let ga = finite_diff_gradient(&fwd, &vars, &state, &cfg).unwrap();
        let gb = finite_diff_gradient(&rev, &vars, &state, &cfg).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1e-12);
        assert!(close(ga[0], gb[1]), "power gradients {ga:?} vs {gb:?}");
        assert!(close(ga[1], gb[0]), "power gradients {ga:?} vs {gb:?}");
        assert!(close(ga[2], gb[3]), "width gradients {ga:?} vs {gb:?}");
        assert!(close(ga[3], gb[2]), "width gradients {ga:?} vs {gb:?}");
        assert!(
            (ga[2] - ga[3]).abs() > 0.05 * ga[2].abs().max(ga[3].abs()),
            "stage asymmetry should be visible at the even split: {ga:?}"
        );
    }

    #[test]
    fn single_user_takes_full_budget() {
        let ctx = desk_ctx(1);
        let cfg = quick_cfg();
        let r = optimize(&ctx, Method::Jo, &cfg).unwrap();
        assert!((r.variables.widths[0] - ctx.total_width).abs() < 1e-9 * ctx.total_width);
        assert!(r.variables.p_dbm[0] > ctx.p_max_dbm - 0.5, "{}", r.variables.p_dbm[0]);
        assert!(r.variables.p_dbm[0] <= ctx.p_max_dbm + 1e-6);
    }

    #[test]
    fn ao_width_split_matches_grid_scan() {
        // A 39-point scan of the width split is the oracle for the AO
        // optimum. Identical users would collapse the composite
        // constellation at the even split, so the scenario separates them
        // by distance.
        let l = lambda();
        let links = vec![
            UserLinkParams::from_geometry(1.0, 20.0, 30.0, 2.2, 4).unwrap(),
            UserLinkParams::from_geometry(1.0, 50.0, 30.0, 2.2, 4).unwrap(),
        ];
        let ctx = OptContext::new(
            links,
            2.0 * l,
            4.0 * l,
            CorrelationModel::sinc(l),
            NoiseModel::new(1e-9).unwrap(),
            vec![0, 1],
            46.0,
        )
        .unwrap();
        let cfg = quick_cfg();
        let r = optimize(&ctx, Method::Ao, &cfg).unwrap();
        let quad = BerQuad {
            abs_tol: cfg.final_quad_tol,
        };
        let mut scan_best = (f64::INFINITY, 0.0f64);
        for i in 1..40 {
            let u = i as f64 / 40.0;
            let vars = OptVariables {
                p_dbm: vec![ctx.p_max_dbm; 2],
                widths: vec![u * ctx.total_width, (1.0 - u) * ctx.total_width],
            };
            let bers = ctx
                .ber_per_user(&vars, SeriesLen::Converged, &quad, cfg.moment_tol)
                .unwrap();
            let s: f64 = bers.iter().sum();
            if s < scan_best.0 {
                scan_best = (s, u);
            }
        }
        let scan_db = 10.0 * scan_best.0.log10();
        assert!(
            r.objective_db <= scan_db + 0.05,
            "optimizer {} dB vs scan {} dB at split {}",
            r.objective_db,
            scan_db,
            scan_best.1
        );
        let w0 = r.variables.widths[0] / ctx.total_width;
        assert!(
            (w0 - scan_best.1).abs() <= 0.1,
            "split {w0} vs scan {}",
            scan_best.1
        );
    }

    #[test]
    fn method_ordering_holds() {
        let ctx = desk_ctx(2);
        let cfg = quick_cfg();
        let no = evaluate_no(&ctx, &cfg).unwrap();
        let ao = optimize(&ctx, Method::Ao, &cfg).unwrap();
        let jo = optimize_warm(&ctx, Method::Jo, &cfg, None, &[&ao.variables]).unwrap();
        assert!(jo.objective_db <= ao.objective_db + 1e-9);
        assert!(ao.objective_db <= no.objective_db + 1e-9);
        // Feasibility of the winner.
        for &p in &jo.variables.p_dbm {
            assert!(p <= ctx.p_max_dbm + 1e-6);
        }
        let sum: f64 = jo.variables.widths.iter().sum();
        assert!((sum - ctx.total_width).abs() <= 1e-6 * ctx.total_width);
        assert!(jo.variables.widths.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn no_point_evaluates_like_zero_penalty() {
        let ctx = desk_ctx(2);
        let cfg = OptConfig {
            final_quad_tol: 1e-10,
            ..quick_cfg()
        };
        let no = evaluate_no(&ctx, &cfg).unwrap();
        let quad = BerQuad {
            abs_tol: cfg.final_quad_tol,
        };
        let bers = ctx
            .ber_per_user(&ctx.no_point(), SeriesLen::Converged, &quad, cfg.moment_tol)
            .unwrap();
        let f = 10.0 * bers.iter().sum::<f64>().log10();
        assert!((no.objective_db - f).abs() < 1e-12);
        assert_eq!(no.variables.widths, vec![ctx.total_width / 2.0; 2]);
        assert_eq!(no.variables.p_dbm, vec![ctx.p_max_dbm; 2]);
    }

    #[test]
    fn mm_runs_and_reports_finite_result() {
        let ctx = desk_ctx(2);
        let cfg = quick_cfg();
        let mm = optimize(&ctx, Method::Mm, &cfg).unwrap();
        assert!(mm.objective_db.is_finite());
        assert!(mm.per_user_ber.iter().all(|b| b.is_finite() && *b >= 0.0));
        let sum: f64 = mm.variables.widths.iter().sum();
        assert!((sum - ctx.total_width).abs() <= 1e-6 * ctx.total_width);
    }

    #[test]
    fn trace_objective_is_monotone_within_rounds() {
        let ctx = desk_ctx(2);
        let cfg = quick_cfg();
        let r = optimize(&ctx, Method::Jo, &cfg).unwrap();
        assert!(!r.trace.is_empty());
        assert!(r.evaluations > 0);
        for row in &r.trace {
            assert!(row.objective_db.is_finite());
            assert!(row.max_violation.is_finite());
        }
    }

    #[test]
    fn method_labels_round_trip() {
        for m in [Method::Jo, Method::Ao, Method::No, Method::Mm] {
            assert_eq!(Method::parse(m.label()).unwrap(), m);
        }
        assert!(Method::parse("bogus").is_err());
    }
}
