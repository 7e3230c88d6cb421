//! Command-line front end: moments, single-point BER, sweeps, optimization
//! runs, and Q-term table dumps, all driven by a TOML scenario.

use clap::{Parser, Subcommand};
use cris_noma::ber::derive_qterm_table;
use cris_noma::channel::effective_stats;
use cris_noma::opt::{optimize, trace_csv, Method, OptConfig};
use cris_noma::scenario::{length_in_meters, parse_scenario, ScenarioConfig};
use cris_noma::special::SeriesLen;
use cris_noma::sweep::{emit_plot_data, export_csv, sweep, SweepMethod, SweepResult};
use cris_noma::{dbm_to_mw, Error, Result};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "cris-noma", version, about = "BER analysis for partitioned-RIS uplink NOMA")]
struct Cli {
    /// Scenario config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Comma-separated methods: JO, AO, NO, MM, OMA, DRIS.
    #[arg(long, global = true, default_value = "NO,JO")]
    methods: String,
    /// Comma-separated per-user power budgets in dBm. Default 0..30 step 2.
    #[arg(long, global = true)]
    powers: Option<String>,
    /// Overrides [simulation].trials.
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Overrides [simulation].seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path: CSV for sweep (plus a sibling "<stem>_series" directory)
    /// and optimize traces, table file for derive-table.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides surface.resolution, e.g. "0.0625lambda" or "0.001m".
    #[arg(long, global = true)]
    grid_resolution: Option<String>,
    /// Series length of the fast hypergeometric path inside optimizer loops.
    #[arg(long, global = true, default_value_t = 6)]
    fast_2f1_terms: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Analytical effective-channel moments at the equal split.
    Stats,
    /// Single-point BER at the equal split, analytic plus Monte Carlo.
    Ber,
    /// BER sweep over methods and powers, exported as CSV and plot series.
    Sweep {
        /// Monte Carlo-validate the optimizer methods too.
        #[arg(long)]
        mc: bool,
    },
    /// One optimization run at the largest requested budget, with trace.
    Optimize,
    /// Print the SIC Q-term decomposition for the configured modulations.
    DeriveTable,
}

fn main() {
    let mut logger = env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or("info"),
    );
    logger.format_timestamp(None).init();
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn parse_powers(arg: &Option<String>) -> Result<Vec<f64>> {
    let powers: Vec<f64> = match arg {
        Some(s) => s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad power {t:?} dBm")))
            })
            .collect::<Result<_>>()?,
        None => (0..=15).map(|i| (2 * i) as f64).collect(),
    };
    if powers.is_empty() {
        return Err(Error::InvalidArgument("empty power list".into()));
    }
    Ok(powers)
}

fn parse_methods(arg: &str) -> Result<Vec<SweepMethod>> {
    arg.split(',')
        .map(|t| SweepMethod::parse(t.trim()))
        .collect()
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("--config is required".into()))?;
    let text = std::fs::read_to_string(path)?;
    let mut config = parse_scenario(&text)?;
    if let Some(t) = cli.trials {
        if t == 0 {
            return Err(Error::InvalidArgument("--trials must be at least 1".into()));
        }
        config.trials = t;
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(r) = &cli.grid_resolution {
        let m = length_in_meters(r, config.wavelength)?;
        if !m.is_finite() || m <= 0.0 || m > config.wavelength / 4.0 + 1e-12 * config.wavelength {
            return Err(Error::InvalidArgument(format!(
                "--grid-resolution {r} must be positive and at most lambda/4"
            )));
        }
        config.resolution_m = m;
    }
    log::info!("effective configuration:\n{}", config.describe());
    Ok(config)
}

fn opt_config(cli: &Cli) -> OptConfig {
    OptConfig {
        fast_len: SeriesLen::Fixed(cli.fast_2f1_terms),
        ..OptConfig::default()
    }
}

fn run() -> Result<()> {
    if let Ok(v) = std::env::var("CRIS_NOMA_THREADS") {
        let n: usize = v.parse().map_err(|_| {
            Error::InvalidArgument(format!("CRIS_NOMA_THREADS = {v:?} is not a thread count"))
        })?;
        if n == 0 {
            return Err(Error::InvalidArgument(
                "CRIS_NOMA_THREADS must be at least 1".into(),
            ));
        }
        // Ignored if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cli = Cli::parse();
    if cli.fast_2f1_terms == 0 {
        return Err(Error::InvalidArgument(
            "--fast-2f1-terms must be at least 1".into(),
        ));
    }
    match &cli.cmd {
        Cmd::Stats => cmd_stats(&cli),
        Cmd::Ber => cmd_ber(&cli),
        Cmd::Sweep { mc } => cmd_sweep(&cli, *mc),
        Cmd::Optimize => cmd_optimize(&cli),
        Cmd::DeriveTable => cmd_derive_table(&cli),
    }
}

fn cmd_stats(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let powers = parse_powers(&cli.powers)?;
    let layout = config.equal_layout()?;
    let unit = config.unit_links()?;
    for &p in &powers {
        let links: Vec<_> = unit
            .iter()
            .map(|l| l.with_power_mw(dbm_to_mw(p)))
            .collect();
        let stats = effective_stats(
            &links,
            &layout,
            &config.correlation,
            SeriesLen::Converged,
            1e-10,
        )?;
        println!("power {p} dBm:");
        for (u, s) in stats.iter().enumerate() {
            println!(
                "  user {u}: E[gamma_kk] = {:.9e}  Var[gamma_kk] = {:.9e}  gamma(shape, scale) = ({:.6e}, {:.6e})",
                s.mean_kk, s.var_kk, s.gamma_shape, s.gamma_scale
            );
            for (i, v) in s.var_re_ki.iter().enumerate() {
                if i != u {
                    println!("    Var[Re gamma_k{i}] = {v:.9e}");
                }
            }
        }
    }
    Ok(())
}

fn cmd_ber(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let powers = parse_powers(&cli.powers)?;
    let cfg = opt_config(cli);
    let result = sweep(
        &config,
        &[SweepMethod::Opt(Method::No)],
        &powers,
        &cfg,
        true,
    )?;
    print_rows(&result);
    Ok(())
}

fn print_rows(result: &SweepResult) {
    println!("method  power_dbm  user  ber_analytic  ber_mc  ci95");
    for r in &result.rows {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6e}"));
        let ci = match (r.mc_ci_low, r.mc_ci_high) {
            (Some(a), Some(b)) => format!("[{a:.3e}, {b:.3e}]"),
            _ => "-".to_string(),
        };
        println!(
            "{:6} {:9} {:5}  {:12}  {:12}  {ci}",
            r.method,
            r.power_dbm,
            r.user,
            fmt(r.ber_analytic),
            fmt(r.ber_mc),
        );
    }
}

fn cmd_sweep(cli: &Cli, mc: bool) -> Result<()> {
    let config = load_config(cli)?;
    let powers = parse_powers(&cli.powers)?;
    let methods = parse_methods(&cli.methods)?;
    let cfg = opt_config(cli);
    let result = sweep(&config, &methods, &powers, &cfg, mc)?;
    print_rows(&result);
    if let Some(out) = &cli.out {
        export_csv(&result, out)?;
        let series_dir = series_dir_for(out);
        emit_plot_data(&result, &series_dir)?;
        log::info!(
            "wrote {} rows to {} and series to {}",
            result.rows.len(),
            out.display(),
            series_dir.display()
        );
    }
    Ok(())
}

fn series_dir_for(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".into());
    out.with_file_name(format!("{stem}_series"))
}

fn cmd_optimize(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let powers = parse_powers(&cli.powers)?;
    let budget = powers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let methods = parse_methods(&cli.methods)?;
    let method = match methods.first() {
        Some(SweepMethod::Opt(m)) => *m,
        _ => {
            return Err(Error::InvalidArgument(
                "optimize needs --methods starting with one of JO, AO, NO, MM".into(),
            ))
        }
    };
    let cfg = opt_config(cli);
    let ctx = config.opt_context(budget)?;
    let r = optimize(&ctx, method, &cfg)?;
    println!(
        "{} at budget {budget} dBm: objective {:.6} dB over {} evaluations",
        method.label(),
        r.objective_db,
        r.evaluations
    );
    for u in 0..ctx.user_count() {
        println!(
            "  user {u}: P = {:.4} dBm  W = {:.6e} m  BER = {:.6e}",
            r.variables.p_dbm[u], r.variables.widths[u], r.per_user_ber[u]
        );
    }
    if let Some(out) = &cli.out {
        std::fs::write(out, trace_csv(&r))?;
        log::info!("wrote trace to {}", out.display());
    }
    Ok(())
}

fn cmd_derive_table(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let table = derive_qterm_table(&config.mod_orders, &config.sic_order)?;
    let text = table.to_string();
    print!("{text}");
    // Spot check at a representative channel so the dump is self-describing.
    let noise = config.noise()?;
    let h: Vec<f64> = (0..config.user_count())
        .map(|u| 64f64.powi((config.user_count() - 1 - u) as i32))
        .collect();
    for u in 0..config.user_count() {
        log::info!(
            "conditional BER check, user {u} at h = {h:?}, sigma_n = {:.3e}: {:.6e}",
            noise.sigma_n(),
            table.conditional_ber(u, &h, noise.sigma_n())
        );
    }
    if let Some(out) = &cli.out {
        std::fs::write(out, text)?;
        log::info!("wrote table to {}", out.display());
    }
    Ok(())
}
