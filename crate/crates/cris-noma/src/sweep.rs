//! Power sweeps across allocation methods, with CSV and plot-data export.
//!
//! One sweep point is (method, budget): optimizer methods solve for the
//! allocation under that budget and report analytical BERs, the OMA and
//! DRIS baselines are simulated at the equal split. Optimizer runs chain
//! across the grid: each budget warm-starts from the previous solution and
//! scores it as a candidate, so a larger budget never reports a worse
//! objective; JO additionally scores the AO solution and MM the JO one
//! whenever those methods are part of the same sweep.
//!
//! Exports carry no timestamps and format floats at fixed precision, so
//! equal seeds produce byte-identical files.


use crate::channel::{PartitionLayout, UserLinkParams};
use crate::grid::{correlation_factor, CorrelationFactor, GridKind, SurfaceGrid};
use crate::opt::{
    evaluate_no, optimize_warm, Method, OptConfig, OptVariables, OptimizationResult,
};
use crate::scenario::ScenarioConfig;
use crate::sim::{run_oma_baseline, sweep_ber_mc, sweep_oma_mc, MonteCarloBer};
use crate::{dbm_to_mw, Error, Result};
use serde::Serialize;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepMethod {
    Opt(Method),
    Oma,
    Dris,
}

impl SweepMethod {
    pub fn label(&self) -> &'static str {
        match self {
            SweepMethod::Opt(m) => m.label(),
            SweepMethod::Oma => "OMA",
            SweepMethod::Dris => "DRIS",
        }
    }

    pub fn parse(s: &str) -> Result<SweepMethod> {
        match s.to_ascii_uppercase().as_str() {
            "OMA" => Ok(SweepMethod::Oma),
            "DRIS" => Ok(SweepMethod::Dris),
            other => Ok(SweepMethod::Opt(Method::parse(other)?)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub method: String,
    pub power_dbm: f64,
    pub user: usize,
    pub ber_analytic: Option<f64>,
    pub ber_mc: Option<f64>,
    pub mc_ci_low: Option<f64>,
    pub mc_ci_high: Option<f64>,
    pub widths: Vec<f64>,
    pub powers_dbm: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub users: usize,
    pub seed: u64,
    pub trials: u64,
}

fn annotate(e: Error, method: &str, power_dbm: f64) -> Error {
    let tag = format!("{method} at {power_dbm} dBm: ");
    match e {
        Error::InvalidArgument(s) => Error::InvalidArgument(format!("{tag}{s}")),
        Error::Quadrature(s) => Error::Quadrature(format!("{tag}{s}")),
        Error::NegativeVariance(s) => Error::NegativeVariance(format!("{tag}{s}")),
        Error::UnsupportedModulation(s) => Error::UnsupportedModulation(format!("{tag}{s}")),
        Error::ResolutionTooCoarse(s) => Error::ResolutionTooCoarse(format!("{tag}{s}")),
        Error::Factorization(s) => Error::Factorization(format!("{tag}{s}")),
        Error::Alignment(s) => Error::Alignment(format!("{tag}{s}")),
        Error::NoFeasiblePoint(s) => Error::NoFeasiblePoint(format!("{tag}{s}")),
        Error::Parse(s) => Error::Parse(format!("{tag}{s}")),
        Error::Validation(s) => Error::Validation(format!("{tag}{s}")),
        Error::Domain(s) => Error::Domain(format!("{tag}{s}")),
        Error::Io(e) => Error::Io(e),
    }
}

struct McBundle {
    grid: SurfaceGrid,
    factor: CorrelationFactor,
}

fn build_bundle(
    config: &ScenarioConfig,
    layout: &PartitionLayout,
    kind: GridKind,
) -> Result<McBundle> {
    let grid = crate::grid::build_grid(layout, kind, config.resolution_m, config.wavelength)?;
    let factor = correlation_factor(&grid, &config.correlation)?;
    Ok(McBundle { grid, factor })
}

fn scaled_links(unit: &[UserLinkParams], p_dbm: &[f64]) -> Vec<UserLinkParams> {
    unit.iter()
        .zip(p_dbm)
        .map(|(l, &p)| l.with_power_mw(dbm_to_mw(p)))
        .collect()
}

/// Runs the sweep over `methods` × `powers_dbm`.
///
/// Rows come out in caller method order, then ascending power, then user.
/// `with_mc` adds Monte Carlo validation to the optimizer methods; the OMA
/// and DRIS baselines are always simulated (they have no analytic path
/// here). The DRIS method forces the λ/2 element surface; everything else
/// uses the surface kind from the config.
pub fn sweep(
    config: &ScenarioConfig,
    methods: &[SweepMethod],
    powers_dbm: &[f64],
    opt_cfg: &OptConfig,
    with_mc: bool,
) -> Result<SweepResult> {
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    for (i, m) in methods.iter().enumerate() {
        if methods[..i].contains(m) {
            return Err(Error::InvalidArgument(format!(
                "method {} requested twice",
                m.label()
            )));
        }
    }
    if powers_dbm.is_empty() {
        return Err(Error::InvalidArgument("empty power grid".into()));
    }
    if powers_dbm.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument("power grid must be finite".into()));
    }
    if powers_dbm.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "power grid must be strictly ascending".into(),
        ));
    }

    let k = config.user_count();
    let noise = config.noise()?;
    let unit_links = config.unit_links()?;
    let equal_layout = config.equal_layout()?;
    let equal_widths = equal_layout.widths.clone();

    let opt_requested: Vec<Method> = [Method::No, Method::Ao, Method::Jo, Method::Mm]
        .into_iter()
        .filter(|m| methods.contains(&SweepMethod::Opt(*m)))
        .collect();

    // Optimizer passes, in dependency order so JO can score AO's solution
    // and MM JO's.
    let mut opt_results: HashMap<Method, Vec<OptimizationResult>> = HashMap::new();
    if !opt_requested.is_empty() {
        let base_ctx = config.opt_context(powers_dbm[0])?;
        for &m in &opt_requested {
            let mut per_power = Vec::with_capacity(powers_dbm.len());
            let mut prev: Option<OptVariables> = None;
            for (pi, &p) in powers_dbm.iter().enumerate() {
                let mut ctx = base_ctx.clone();
                ctx.p_max_dbm = p;
                let res = match m {
                    Method::No => evaluate_no(&ctx, opt_cfg),
                    _ => {
                        let dep = match m {
                            Method::Jo => opt_results.get(&Method::Ao),
                            Method::Mm => opt_results.get(&Method::Jo),
                            _ => None,
                        };
                        let mut cands: Vec<&OptVariables> = Vec::new();
                        if let Some(v) = prev.as_ref() {
                            cands.push(v);
                        }
                        if let Some(dv) = dep {
                            cands.push(&dv[pi].variables);
                        }
                        optimize_warm(&ctx, m, opt_cfg, prev.as_ref(), &cands)
                    }
                }
                .map_err(|e| annotate(e, m.label(), p))?;
                prev = Some(res.variables.clone());
                per_power.push(res);
            }
            opt_results.insert(m, per_power);
        }
    }

    // Monte Carlo passes. Equal-split methods share channel draws across
    // the whole grid in one call; per-power allocations need their own
    // surfaces.
    let equal_powers: Vec<Vec<f64>> = powers_dbm
        .iter()
        .map(|&p| vec![dbm_to_mw(p); k])
        .collect();
    let mut mc_results: HashMap<SweepMethod, Vec<MonteCarloBer>> = HashMap::new();
    for m in methods {
        match m {
            SweepMethod::Oma => {
                let bundle = build_bundle(config, &equal_layout, config.surface)
                    .map_err(|e| annotate(e, m.label(), powers_dbm[0]))?;
                let out = sweep_oma_mc(
                    &bundle.grid,
                    &bundle.factor,
                    &unit_links,
                    &noise,
                    &equal_powers,
                    config.trials,
                    config.seed,
                )
                .map_err(|e| annotate(e, m.label(), powers_dbm[0]))?;
                mc_results.insert(*m, out);
            }
            SweepMethod::Dris => {
                let bundle = build_bundle(config, &equal_layout, GridKind::DrisLambdaHalf)
                    .map_err(|e| annotate(e, m.label(), powers_dbm[0]))?;
                let out = sweep_ber_mc(
                    &bundle.grid,
                    &bundle.factor,
                    &unit_links,
                    &noise,
                    &config.sic_order,
                    &equal_powers,
                    config.trials,
                    config.seed,
                )
                .map_err(|e| annotate(e, m.label(), powers_dbm[0]))?;
                mc_results.insert(*m, out);
            }
            SweepMethod::Opt(Method::No) if with_mc => {
                let bundle = build_bundle(config, &equal_layout, config.surface)
                    .map_err(|e| annotate(e, m.label(), powers_dbm[0]))?;
                let out = sweep_ber_mc(
                    &bundle.grid,
                    &bundle.factor,
                    &unit_links,
                    &noise,
                    &config.sic_order,
                    &equal_powers,
                    config.trials,
                    config.seed,
                )
                .map_err(|e| annotate(e, m.label(), powers_dbm[0]))?;
                mc_results.insert(*m, out);
            }
            SweepMethod::Opt(om) if with_mc => {
                let results = &opt_results[om];
                let mut out = Vec::with_capacity(powers_dbm.len());
                for (pi, &p) in powers_dbm.iter().enumerate() {
                    let vars = &results[pi].variables;
                    let layout = config
                        .layout_with(&vars.widths)
                        .map_err(|e| annotate(e, m.label(), p))?;
                    let bundle = build_bundle(config, &layout, config.surface)
                        .map_err(|e| annotate(e, m.label(), p))?;
                    let links = scaled_links(&unit_links, &vars.p_dbm);
                    let point: Vec<Vec<f64>> =
                        vec![links.iter().map(|l| l.tx_power_mw).collect()];
                    let mut v = sweep_ber_mc(
                        &bundle.grid,
                        &bundle.factor,
                        &links,
                        &noise,
                        &config.sic_order,
                        &point,
                        config.trials,
                        config.seed,
                    )
                    .map_err(|e| annotate(e, m.label(), p))?;
                    out.push(v.pop().unwrap());
                }
                mc_results.insert(*m, out);
            }
            SweepMethod::Opt(_) => {}
        }
    }

    let mut rows = Vec::with_capacity(methods.len() * powers_dbm.len() * k);
    for m in methods {
        for (pi, &p) in powers_dbm.iter().enumerate() {
            let (widths, powers, analytic): (Vec<f64>, Vec<f64>, Option<&[f64]>) = match m {
                SweepMethod::Opt(om) => {
                    let r = &opt_results[om][pi];
                    (
                        r.variables.widths.clone(),
                        r.variables.p_dbm.clone(),
                        Some(&r.per_user_ber),
                    )
                }
                _ => (equal_widths.clone(), vec![p; k], None),
            };
            let mc = mc_results.get(m).map(|v| &v[pi]);
            for u in 0..k {
                rows.push(SweepRow {
                    method: m.label().into(),
                    power_dbm: p,
                    user: u,
                    ber_analytic: analytic.map(|a| a[u]),
                    ber_mc: mc.map(|r| r.ber[u]),
                    mc_ci_low: mc.map(|r| r.ci_low[u]),
                    mc_ci_high: mc.map(|r| r.ci_high[u]),
                    widths: widths.clone(),
                    powers_dbm: powers.clone(),
                });
            }
        }
    }
    Ok(SweepResult {
        rows,
        users: k,
        seed: config.seed,
        trials: config.trials,
    })
}

/// Single-point OMA baseline at per-user power `p_dbm`, equal widths.
pub fn oma_point(config: &ScenarioConfig, p_dbm: f64) -> Result<MonteCarloBer> {
    let layout = config.equal_layout()?;
    let bundle = build_bundle(config, &layout, config.surface)?;
    let links = scaled_links(&config.unit_links()?, &vec![p_dbm; config.user_count()]);
    run_oma_baseline(
        &bundle.grid,
        &bundle.factor,
        &links,
        &config.noise()?,
        config.trials,
        config.seed,
    )
}

const CSV_HEADER: &str =
    "method,power_dbm,user,ber_analytic,ber_mc,mc_ci_low,mc_ci_high,widths,powers_dbm";

fn fmt_f(v: f64) -> String {
    format!("{v:.12e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

fn fmt_list(v: &[f64]) -> String {
    let body = v.iter().map(|&x| fmt_f(x)).collect::<Vec<_>>().join(";");
    format!("\"{body}\"")
}

/// Writes the sweep as CSV with a fixed header; floats carry 13 significant
/// digits so a re-read reproduces them.
pub fn export_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let mut s = String::with_capacity(128 * (result.rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in &result.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.method,
            fmt_f(r.power_dbm),
            r.user,
            fmt_opt(r.ber_analytic),
            fmt_opt(r.ber_mc),
            fmt_opt(r.mc_ci_low),
            fmt_opt(r.mc_ci_high),
            fmt_list(&r.widths),
            fmt_list(&r.powers_dbm),
        );
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn parse_opt_f(s: &str) -> std::result::Result<Option<f64>, String> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| format!("bad float {s:?}"))
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    let inner = s
        .strip_prefix('"')
        .and_then(|t| t.strip_suffix('"'))
        .ok_or_else(|| format!("list field {s:?} must be quoted"))?;
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(';')
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad float {t:?}")))
        .collect()
}

/// Reads a CSV produced by [`export_csv`].
pub fn read_csv(path: &Path) -> Result<SweepResult> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::Parse(format!(
                "unexpected CSV header {other:?} in {}",
                path.display()
            )))
        }
    }
    let mut rows = Vec::new();
    let mut users = 0usize;
    for (i, line) in lines.enumerate() {
        let parse = |msg: String| Error::Parse(format!("{} line {}: {msg}", path.display(), i + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(parse(format!("expected 9 fields, found {}", f.len())));
        }
        let row = SweepRow {
            method: f[0].to_string(),
            power_dbm: f[1].parse().map_err(|_| parse(format!("bad power {:?}", f[1])))?,
            user: f[2].parse().map_err(|_| parse(format!("bad user {:?}", f[2])))?,
            ber_analytic: parse_opt_f(f[3]).map_err(parse)?,
            ber_mc: parse_opt_f(f[4]).map_err(parse)?,
            mc_ci_low: parse_opt_f(f[5]).map_err(parse)?,
            mc_ci_high: parse_opt_f(f[6]).map_err(parse)?,
            widths: parse_list(f[7]).map_err(parse)?,
            powers_dbm: parse_list(f[8]).map_err(parse)?,
        };
        users = users.max(row.user + 1);
        rows.push(row);
    }
    Ok(SweepResult {
        rows,
        users,
        seed: 0,
        trials: 0,
    })
}

#[derive(Serialize)]
struct PlotMetadata {
    methods: Vec<String>,
    users: usize,
    powers_dbm: Vec<f64>,
    seed: u64,
    trials: u64,
    series: Vec<String>,
}

/// Writes one `power_dbm,ber` series file per (method, user) plus a
/// `metadata.json` sidecar into `dir`. Analytic BER when present,
/// otherwise the Monte Carlo estimate.
pub fn emit_plot_data(result: &SweepResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut order: Vec<(String, usize)> = Vec::new();
    let mut series: HashMap<(String, usize), String> = HashMap::new();
    let mut methods: Vec<String> = Vec::new();
    let mut powers: Vec<f64> = Vec::new();
    for r in &result.rows {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
        if !powers.contains(&r.power_dbm) {
            powers.push(r.power_dbm);
        }
        let key = (r.method.clone(), r.user);
        let body = series.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            "power_dbm,ber\n".to_string()
        });
        if let Some(b) = r.ber_analytic.or(r.ber_mc) {
            let _ = writeln!(body, "{},{}", fmt_f(r.power_dbm), fmt_f(b));
        }
    }
    let mut files = Vec::with_capacity(order.len());
    for key in &order {
        let name = format!("series_{}_u{}.csv", key.0, key.1);
        std::fs::write(dir.join(&name), &series[key])?;
        files.push(name);
    }
    let meta = PlotMetadata {
        methods,
        users: result.users,
        powers_dbm: powers,
        seed: result.seed,
        trials: result.trials,
        series: files,
    };
    let text = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Parse(format!("metadata serialization: {e}")))?;
    std::fs::write(dir.join("metadata.json"), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    fn desk_config(trials: u64) -> ScenarioConfig {
        parse_scenario(&format!(
            r#"
            [system]
            frequency_hz = 28e9
            d_rb_m = 30.0
            psi = 2.2
            noise_mw = 1e-9

            [users]
            d_ur_m = [20.0, 50.0]
            mod_order = [16, 4]

            [surface]
            width = "4lambda"
            height = "2lambda"

            [simulation]
            trials = {trials}
            seed = 11
            "#
        ))
        .unwrap()
    }

    fn fast_opt() -> OptConfig {
        OptConfig {
            inner: 40,
            loop_quad_tol: 1e-7,
            final_quad_tol: 1e-9,
            moment_tol: 1e-7,
            ..OptConfig::default()
        }
    }

    #[test]
    fn single_point_no_rows_are_complete() {
        let config = desk_config(2000);
        let r = sweep(
            &config,
            &[SweepMethod::Opt(Method::No)],
            &[46.0],
            &fast_opt(),
            true,
        )
        .unwrap();
        assert_eq!(r.rows.len(), 2);
        for (u, row) in r.rows.iter().enumerate() {
            assert_eq!(row.method, "NO");
            assert_eq!(row.user, u);
            let a = row.ber_analytic.unwrap();
            let mc = row.ber_mc.unwrap();
            assert!((0.0..=1.0).contains(&a));
            assert!((0.0..=1.0).contains(&mc));
            assert!(row.mc_ci_low.unwrap() <= mc && mc <= row.mc_ci_high.unwrap());
            assert_eq!(row.widths.len(), 2);
            assert_eq!(row.powers_dbm, vec![46.0, 46.0]);
        }
    }

    #[test]
    fn jo_analytic_is_monotone_in_power() {
        let config = desk_config(2000);
        let r = sweep(
            &config,
            &[SweepMethod::Opt(Method::Jo)],
            &[44.0, 47.0, 50.0],
            &fast_opt(),
            false,
        )
        .unwrap();
        let sums: Vec<f64> = (0..3)
            .map(|pi| {
                r.rows
                    .iter()
                    .filter(|row| row.power_dbm == [44.0, 47.0, 50.0][pi])
                    .map(|row| row.ber_analytic.unwrap())
                    .sum()
            })
            .collect();
        assert!(
            sums[0] >= sums[1] && sums[1] >= sums[2],
            "sum BER should not increase with budget: {sums:?}"
        );
    }

    #[test]
    fn rows_follow_method_power_user_order() {
        let config = desk_config(2000);
        let methods = [SweepMethod::Opt(Method::No), SweepMethod::Opt(Method::Ao)];
        let r = sweep(&config, &methods, &[44.0, 46.0], &fast_opt(), false).unwrap();
        let expect: Vec<(String, f64, usize)> = ["NO", "AO"]
            .iter()
            .flat_map(|m| {
                [44.0, 46.0]
                    .iter()
                    .flat_map(move |&p| (0..2).map(move |u| (m.to_string(), p, u)))
            })
            .collect();
        let got: Vec<(String, f64, usize)> = r
            .rows
            .iter()
            .map(|row| (row.method.clone(), row.power_dbm, row.user))
            .collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn duplicate_or_unsorted_inputs_are_rejected() {
        let config = desk_config(2000);
        let cfg = fast_opt();
        let no = SweepMethod::Opt(Method::No);
        assert!(sweep(&config, &[no, no], &[40.0], &cfg, false).is_err());
        assert!(sweep(&config, &[no], &[44.0, 42.0], &cfg, false).is_err());
        assert!(sweep(&config, &[no], &[], &cfg, false).is_err());
        assert!(sweep(&config, &[], &[40.0], &cfg, false).is_err());
    }

    #[test]
    fn csv_round_trips_and_is_byte_stable() {
        let config = desk_config(2000);
        let r = sweep(
            &config,
            &[SweepMethod::Opt(Method::No)],
            &[44.0, 46.0],
            &fast_opt(),
            true,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        export_csv(&r, &p1).unwrap();
        export_csv(&r, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let back = read_csv(&p1).unwrap();
        assert_eq!(back.rows.len(), r.rows.len());
        for (a, b) in r.rows.iter().zip(&back.rows) {
            assert_eq!(a.method, b.method);
            assert_eq!(a.user, b.user);
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs());
            assert!(close(a.ber_analytic.unwrap(), b.ber_analytic.unwrap()));
            assert!(close(a.ber_mc.unwrap(), b.ber_mc.unwrap()));
            for (wa, wb) in a.widths.iter().zip(&b.widths) {
                assert!(close(*wa, *wb));
            }
        }

        let empty = SweepResult {
            rows: Vec::new(),
            users: 0,
            seed: 0,
            trials: 0,
        };
        let pe = dir.path().join("empty.csv");
        export_csv(&empty, &pe).unwrap();
        assert_eq!(
            std::fs::read_to_string(&pe).unwrap(),
            format!("{CSV_HEADER}\n")
        );
        assert_eq!(read_csv(&pe).unwrap().rows.len(), 0);
    }

    #[test]
    fn plot_data_emits_series_and_metadata() {
        let config = desk_config(2000);
        let r = sweep(
            &config,
            &[SweepMethod::Opt(Method::No), SweepMethod::Opt(Method::Ao)],
            &[44.0, 46.0],
            &fast_opt(),
            false,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let d1 = dir.path().join("p1");
        let d2 = dir.path().join("p2");
        emit_plot_data(&r, &d1).unwrap();
        emit_plot_data(&r, &d2).unwrap();
        for name in [
            "series_NO_u0.csv",
            "series_NO_u1.csv",
            "series_AO_u0.csv",
            "series_AO_u1.csv",
            "metadata.json",
        ] {
            let a = std::fs::read(d1.join(name)).unwrap();
            let b = std::fs::read(d2.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
        let series = std::fs::read_to_string(d1.join("series_NO_u0.csv")).unwrap();
        assert_eq!(series.lines().count(), 3, "{series}");
        assert!(series.starts_with("power_dbm,ber\n"));
        let meta = std::fs::read_to_string(d1.join("metadata.json")).unwrap();
        assert!(meta.contains("series_AO_u1.csv") && meta.contains("\"seed\": 11"), "{meta}");
    }

    #[test]
    fn oma_rows_are_simulation_only() {
        let config = desk_config(2000);
        let r = sweep(&config, &[SweepMethod::Oma], &[46.0], &fast_opt(), false).unwrap();
        assert_eq!(r.rows.len(), 2);
        for row in &r.rows {
            assert!(row.ber_analytic.is_none());
            assert!(row.ber_mc.is_some());
        }
    }

    #[test]
    fn dris_method_runs_on_element_surface() {
        let config = desk_config(2000);
        let r = sweep(
            &config,
            &[SweepMethod::Dris, SweepMethod::Opt(Method::No)],
            &[46.0],
            &fast_opt(),
            true,
        )
        .unwrap();
        let dris: Vec<&SweepRow> = r.rows.iter().filter(|x| x.method == "DRIS").collect();
        assert_eq!(dris.len(), 2);
        for row in dris {
            assert!(row.ber_analytic.is_none());
            assert!(row.ber_mc.is_some());
        }
    }

    #[test]
    fn method_labels_parse() {
        for (s, m) in [
            ("jo", SweepMethod::Opt(Method::Jo)),
            ("NO", SweepMethod::Opt(Method::No)),
            ("oma", SweepMethod::Oma),
            ("Dris", SweepMethod::Dris),
        ] {
            assert_eq!(SweepMethod::parse(s).unwrap(), m);
        }
        assert!(SweepMethod::parse("qam").is_err());
    }
}
