//! Scenario configuration: a flat TOML document with `[system]`, `[users]`,
//! `[surface]`, and `[simulation]` sections.
//!
//! Lengths carry an explicit unit suffix, `"5lambda"` or `"0.05m"`; a bare
//! number is rejected so a 10.7 mm wavelength cannot be confused with a
//! 10.7 m one. Parsing rejects unknown keys outright; validation collects
//! every violated invariant before reporting, so one round trip fixes a
//! config.

use crate::channel::{PartitionLayout, UserLinkParams};
use crate::grid::{build_grid, GridKind, SurfaceGrid};
use crate::opt::OptContext;
use crate::ber::NoiseModel;
use crate::special::CorrelationModel;
use crate::{Error, Result, SPEED_OF_LIGHT};
use serde::Deserialize;
use std::fmt::Write as _;

pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 0;
/// Grid spacing used when the config does not set one: λ/16.
pub const DEFAULT_RESOLUTION_WL: f64 = 1.0 / 16.0;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: Option<RawSystem>,
    users: Option<RawUsers>,
    surface: Option<RawSurface>,
    simulation: Option<RawSimulation>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    frequency_hz: Option<f64>,
    d_rb_m: Option<f64>,
    psi: Option<f64>,
    noise_mw: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUsers {
    d_ur_m: Option<Vec<f64>>,
    mod_order: Option<Vec<u32>>,
    sic_order: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSurface {
    width: Option<String>,
    height: Option<String>,
    kind: Option<String>,
    correlation: Option<String>,
    resolution: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    trials: Option<u64>,
    seed: Option<u64>,
}

/// A validated scenario, all lengths in meters.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub frequency_hz: f64,
    pub wavelength: f64,
    pub d_rb_m: f64,
    pub psi: f64,
    pub noise_mw: f64,
    pub d_ur_m: Vec<f64>,
    pub mod_orders: Vec<u32>,
    pub sic_order: Vec<usize>,
    pub width_m: f64,
    pub height_m: f64,
    pub surface: GridKind,
    pub correlation: CorrelationModel,
    pub resolution_m: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Parses a length like `"5lambda"`, `"2.5 lambda"`, or `"0.05m"`.
fn parse_length(raw: &str, wavelength: f64) -> std::result::Result<f64, String> {
    let t = raw.trim();
    let (num, scale) = if let Some(v) = t.strip_suffix("lambda") {
        (v, wavelength)
    } else if let Some(v) = t.strip_suffix('m') {
        (v, 1.0)
    } else {
        return Err(format!(
            "length {t:?} needs an explicit unit suffix, e.g. \"5lambda\" or \"0.05m\""
        ));
    };
    num.trim()
        .parse::<f64>()
        .map(|v| v * scale)
        .map_err(|_| format!("length {t:?} has a malformed numeric part"))
}

/// Public form of the length parser for CLI overrides.
pub fn length_in_meters(text: &str, wavelength: f64) -> Result<f64> {
    parse_length(text, wavelength).map_err(Error::Parse)
}

fn is_square_qam(m: u32) -> bool {
    let mut v = m;
    if v < 4 {
        return false;
    }
    while v.is_multiple_of(4) {
        v /= 4;
    }
    v == 1
}

/// Parses and validates a scenario document.
///
/// Syntax errors surface with the TOML position; semantic errors are
/// collected and reported together, one line per violation.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut errs: Vec<String> = Vec::new();
    let mut need = |field: &str| errs.push(format!("missing field {field}"));

    let sys = raw.system;
    let users = raw.users;
    let surf = raw.surface;
    let sim = raw.simulation;
    if sys.is_none() {
        need("[system]");
    }
    if users.is_none() {
        need("[users]");
    }
    if surf.is_none() {
        need("[surface]");
    }

    let mut frequency_hz = 0.0;
    let mut d_rb_m = 0.0;
    let mut psi = 0.0;
    let mut noise_mw = 0.0;
    if let Some(ref s) = sys {
        match s.frequency_hz {
            Some(f) if f.is_finite() && f > 0.0 => frequency_hz = f,
            Some(f) => errs.push(format!("system.frequency_hz = {f} must be positive")),
            None => errs.push("missing field system.frequency_hz".into()),
        }
        match s.d_rb_m {
            Some(d) if d.is_finite() && d > 0.0 => d_rb_m = d,
            Some(d) => errs.push(format!("system.d_rb_m = {d} must be positive")),
            None => errs.push("missing field system.d_rb_m".into()),
        }
        match s.psi {
            Some(p) if p.is_finite() && p > 0.0 => psi = p,
            Some(p) => errs.push(format!("system.psi = {p} must be positive")),
            None => errs.push("missing field system.psi".into()),
        }
        match s.noise_mw {
            Some(n) if n.is_finite() && n > 0.0 => noise_mw = n,
            Some(n) => errs.push(format!("system.noise_mw = {n} must be positive")),
            None => errs.push("missing field system.noise_mw".into()),
        }
    }
    let wavelength = if frequency_hz > 0.0 {
        SPEED_OF_LIGHT / frequency_hz
    } else {
        0.0
    };

    let mut d_ur_m: Vec<f64> = Vec::new();
    let mut mod_orders: Vec<u32> = Vec::new();
    let mut sic_order: Vec<usize> = Vec::new();
    if let Some(ref u) = users {
        match &u.d_ur_m {
            Some(d) if !d.is_empty() => {
                for (i, &v) in d.iter().enumerate() {
                    if !(v.is_finite() && v > 0.0) {
                        errs.push(format!("users.d_ur_m[{i}] = {v} must be positive"));
                    }
                }
                d_ur_m = d.clone();
            }
            Some(_) => errs.push("users.d_ur_m must list at least one user".into()),
            None => errs.push("missing field users.d_ur_m".into()),
        }
        match &u.mod_order {
            Some(m) if !m.is_empty() => {
                for (i, &v) in m.iter().enumerate() {
                    if !is_square_qam(v) {
                        errs.push(format!(
                            "users.mod_order[{i}] = {v} must be a square QAM order (4, 16, 64, ...)"
                        ));
                    }
                }
                mod_orders = m.clone();
            }
            Some(_) => errs.push("users.mod_order must list at least one user".into()),
            None => errs.push("missing field users.mod_order".into()),
        }
        if !d_ur_m.is_empty() && !mod_orders.is_empty() && d_ur_m.len() != mod_orders.len() {
            errs.push(format!(
                "users.d_ur_m lists {} users but users.mod_order lists {}",
                d_ur_m.len(),
                mod_orders.len()
            ));
        }
        let k = d_ur_m.len();
        match &u.sic_order {
            Some(o) => {
                let mut seen = vec![false; k];
                let mut ok = o.len() == k;
                for &i in o {
                    if i >= k || seen[i] {
                        ok = false;
                        break;
                    }
                    seen[i] = true;
                }
                if ok {
                    sic_order = o.clone();
                } else {
                    errs.push(format!(
                        "users.sic_order = {o:?} must be a permutation of 0..{k}"
                    ));
                }
            }
            None => sic_order = (0..k).collect(),
        }
    }

    let mut width_m = 0.0;
    let mut height_m = 0.0;
    let mut surface = GridKind::CrisQuadrature;
    let mut correlation = CorrelationModel::None;
    let mut resolution_m = wavelength * DEFAULT_RESOLUTION_WL;
    if let Some(ref s) = surf {
        let len_field = |raw: &Option<String>, name: &str, errs: &mut Vec<String>| -> f64 {
            match raw {
                Some(text) => match parse_length(text, wavelength) {
                    Ok(v) if v.is_finite() && v > 0.0 => v,
                    Ok(v) => {
                        errs.push(format!("surface.{name} = {v} m must be positive"));
                        0.0
                    }
                    Err(e) => {
                        errs.push(format!("surface.{name}: {e}"));
                        0.0
                    }
                },
                None => {
                    errs.push(format!("missing field surface.{name}"));
                    0.0
                }
            }
        };
        width_m = len_field(&s.width, "width", &mut errs);
        height_m = len_field(&s.height, "height", &mut errs);
        match s.kind.as_deref() {
            Some("cris") | None => surface = GridKind::CrisQuadrature,
            Some("dris") => surface = GridKind::DrisLambdaHalf,
            Some(other) => errs.push(format!(
                "surface.kind = {other:?} must be \"cris\" or \"dris\""
            )),
        }
        match s.correlation.as_deref() {
            Some("sinc") | None => correlation = CorrelationModel::sinc(wavelength),
            Some("none") => correlation = CorrelationModel::None,
            Some(other) => errs.push(format!(
                "surface.correlation = {other:?} must be \"sinc\" or \"none\""
            )),
        }
        if let Some(ref text) = s.resolution {
            match parse_length(text, wavelength) {
                Ok(v) if v.is_finite() && v > 0.0 => resolution_m = v,
                Ok(v) => errs.push(format!("surface.resolution = {v} m must be positive")),
                Err(e) => errs.push(format!("surface.resolution: {e}")),
            }
        }
        if wavelength > 0.0 && resolution_m > wavelength / 4.0 + 1e-12 * wavelength {
            errs.push(format!(
                "surface.resolution = {resolution_m} m exceeds lambda/4 = {} m",
                wavelength / 4.0
            ));
        }
    }

    let mut trials = DEFAULT_TRIALS;
    let mut seed = DEFAULT_SEED;
    if let Some(ref s) = sim {
        if let Some(t) = s.trials {
            if t == 0 {
                errs.push("simulation.trials must be at least 1".into());
            } else {
                trials = t;
            }
        }
        if let Some(v) = s.seed {
            seed = v;
        }
    }

    if !errs.is_empty() {
        return Err(Error::Validation(errs.join("\n")));
    }
    Ok(ScenarioConfig {
        frequency_hz,
        wavelength,
        d_rb_m,
        psi,
        noise_mw,
        d_ur_m,
        mod_orders,
        sic_order,
        width_m,
        height_m,
        surface,
        correlation,
        resolution_m,
        trials,
        seed,
    })
}

impl ScenarioConfig {
    pub fn user_count(&self) -> usize {
        self.d_ur_m.len()
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.noise_mw)
    }

    /// Unit-power links; sweeps and the optimizer scale powers themselves.
    pub fn unit_links(&self) -> Result<Vec<UserLinkParams>> {
        self.d_ur_m
            .iter()
            .zip(&self.mod_orders)
            .map(|(&d, &m)| UserLinkParams::from_geometry(1.0, d, self.d_rb_m, self.psi, m))
            .collect()
    }

    pub fn equal_layout(&self) -> Result<PartitionLayout> {
        let k = self.user_count();
        PartitionLayout::new(vec![self.width_m / k as f64; k], self.height_m)
    }

    pub fn layout_with(&self, widths: &[f64]) -> Result<PartitionLayout> {
        if widths.len() != self.user_count() {
            return Err(Error::InvalidArgument(format!(
                "{} widths for {} users",
                widths.len(),
                self.user_count()
            )));
        }
        PartitionLayout::new(widths.to_vec(), self.height_m)
    }

    pub fn grid_for(&self, layout: &PartitionLayout) -> Result<SurfaceGrid> {
        build_grid(layout, self.surface, self.resolution_m, self.wavelength)
    }

    pub fn opt_context(&self, p_max_dbm: f64) -> Result<OptContext> {
        OptContext::new(
            self.unit_links()?,
            self.height_m,
            self.width_m,
            self.correlation,
            self.noise()?,
            self.sic_order.clone(),
            p_max_dbm,
        )
    }

    /// One-line-per-field rendering of the effective configuration.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "frequency_hz = {:e}", self.frequency_hz);
        let _ = writeln!(s, "wavelength_m = {:.6e}", self.wavelength);
        let _ = writeln!(s, "d_rb_m = {}", self.d_rb_m);
        let _ = writeln!(s, "psi = {}", self.psi);
        let _ = writeln!(s, "noise_mw = {:e}", self.noise_mw);
        let _ = writeln!(s, "d_ur_m = {:?}", self.d_ur_m);
        let _ = writeln!(s, "mod_order = {:?}", self.mod_orders);
        let _ = writeln!(s, "sic_order = {:?}", self.sic_order);
        let _ = writeln!(
            s,
            "surface = {} {:.6e} x {:.6e} m ({:.2} x {:.2} lambda)",
            match self.surface {
                GridKind::CrisQuadrature => "cris",
                GridKind::DrisLambdaHalf => "dris",
            },
            self.width_m,
            self.height_m,
            self.width_m / self.wavelength,
            self.height_m / self.wavelength
        );
        let _ = writeln!(
            s,
            "correlation = {}",
            match self.correlation {
                CorrelationModel::Sinc { .. } => "sinc",
                CorrelationModel::None => "none",
            }
        );
        let _ = writeln!(s, "resolution_m = {:.6e}", self.resolution_m);
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = write!(s, "seed = {}", self.seed);
        s
    }
}
