//! Run configuration: a flat TOML table whose keys are the physical
//! parameter names plus the run settings listed in [`RUN_KEYS`].

use std::path::PathBuf;

use log::warn;
use toml::{Table, Value};

use crate::dynamics::{ImplicitSolver, Mode, StepConfig, Watch};
use crate::elliptic::SolverMethod;
use crate::error::{Error, Result};
use crate::physics::{equilibrium_p0, Model, PhysicalParams, PARAM_KEYS};
use crate::stability::DEFAULT_MARGIN;
use crate::stationary::StationaryConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Transient,
    Stationary,
    Stability,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    None,
    Ecc,
    Omega,
}

/// Solve performed at every sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepSolver {
    Transient,
    Stationary,
}

/// Where the stability problem is posed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityDomain {
    /// The unwrapped journal film with its gap function.
    Journal,
    /// Unit square, zero pressure on all sides, constant gap h0.
    UnitSquare,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityConfig {
    pub margin: f64,
    /// Largest mode index searched for the critical speed.
    pub kmax: u32,
    pub domain: StabilityDomain,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            margin: DEFAULT_MARGIN,
            kmax: 8,
            domain: StabilityDomain::Journal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: PhysicalParams,
    pub grid: (usize, usize),
    pub mode: RunMode,
    pub step: StepConfig,
    /// Step budget of a transient run.
    pub steps: usize,
    pub stationarity_tol: f64,
    /// 0 disables snapshots.
    pub snapshot_every: usize,
    pub stop_on_crit: bool,
    pub stationary: StationaryConfig,
    pub stability: StabilityConfig,
    /// Surface velocity; (omega J_r, 0) when absent.
    pub velocity: Option<[f64; 2]>,
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub sweep_solver: SweepSolver,
    pub output_dir: PathBuf,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: PhysicalParams::reference(),
            grid: (128, 32),
            mode: RunMode::Transient,
            step: StepConfig::default(),
            steps: 5000,
            stationarity_tol: Watch::default().stationarity_tol,
            snapshot_every: 0,
            stop_on_crit: false,
            stationary: StationaryConfig::default(),
            stability: StabilityConfig::default(),
            velocity: None,
            sweep_axis: SweepAxis::None,
            sweep_values: Vec::new(),
            sweep_solver: SweepSolver::Transient,
            output_dir: PathBuf::from("out"),
            workers: 1,
        }
    }
}

/// Run settings accepted next to the physical parameter keys, with defaults.
pub const RUN_KEYS: [(&str, &str); 27] = [
    ("mode", "transient | stationary | stability | sweep (transient)"),
    ("n1", "cells along x1 (128)"),
    ("n2", "cells along x2 (32)"),
    ("dt", "time step in s (3e-4)"),
    ("steps", "step budget of a transient run (5000)"),
    ("dynamics", "inertialess | inertial (inertialess)"),
    ("implicit_solver", "picard | pressure_newton (picard)"),
    ("picard_tol", "relative update ending the nonlinear iteration (1e-10)"),
    ("picard_max", "nonlinear iterations per step (100)"),
    ("max_halvings", "time-step halvings before a step fails (10)"),
    ("linear_solver", "auto | direct | krylov (krylov)"),
    ("linear_tol", "relative residual of the pressure solves (1e-12)"),
    ("linear_max_iter", "iteration cap of the pressure solves (20000)"),
    ("stationarity_tol", "max|dR|/(dt R0) declaring a stationary state, 1/s (1e-8)"),
    ("snapshot_every", "field snapshot cadence in steps, 0 = off (0)"),
    ("stop_on_crit", "end a transient once max R reaches R_crit (false)"),
    ("newton_tol", "stationary Newton tolerance (1e-10)"),
    ("newton_max", "stationary Newton iterations (50)"),
    ("continuation_steps", "speed increments when a direct solve fails (8)"),
    ("margin", "stability verdict margin (1e-8)"),
    ("kmax", "largest mode index for the critical speed (8)"),
    ("stability_domain", "journal | unit_square (journal)"),
    ("u1", "surface velocity along x1, m/s (omega J_r)"),
    ("u2", "surface velocity along x2, m/s (0)"),
    ("sweep_axis", "none | ecc | omega (none)"),
    ("sweep_values", "list of axis values, duplicates dropped ([])"),
    ("sweep_solver", "transient | stationary (transient)"),
];

/// Keys that are not part of [`RUN_KEYS`] but still accepted.
const IO_KEYS: [&str; 2] = ["output_dir", "workers"];

fn key_err(key: &str, msg: impl Into<String>) -> Error {
    Error::Key {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(key_err(key, format!("expected a number, got {v}"))),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(key_err(key, format!("expected a non-negative integer, got {v}"))),
    }
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| key_err(key, format!("expected true or false, got {v}")))
}

fn as_choice<T: Copy>(key: &str, v: &Value, choices: &[(&str, T)]) -> Result<T> {
    let s = v.as_str().ok_or_else(|| key_err(key, format!("expected a string, got {v}")))?;
    choices.iter().find(|(name, _)| *name == s).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = choices.iter().map(|(n, _)| *n).collect();
        key_err(key, format!("`{s}` is not one of {}", names.join(", ")))
    })
}

const MODES: [(&str, RunMode); 4] = [
    ("transient", RunMode::Transient),
    ("stationary", RunMode::Stationary),
    ("stability", RunMode::Stability),
    ("sweep", RunMode::Sweep),
];
const DYNAMICS: [(&str, Mode); 2] = [("inertialess", Mode::Inertialess), ("inertial", Mode::Inertial)];
const SOLVERS: [(&str, ImplicitSolver); 2] = [
    ("picard", ImplicitSolver::Picard),
    ("pressure_newton", ImplicitSolver::PressureNewton),
];
const LINEAR: [(&str, SolverMethod); 3] = [
    ("auto", SolverMethod::Auto),
    ("direct", SolverMethod::DirectBanded),
    ("krylov", SolverMethod::Krylov),
];
const DOMAINS: [(&str, StabilityDomain); 2] = [
    ("journal", StabilityDomain::Journal),
    ("unit_square", StabilityDomain::UnitSquare),
];
const AXES: [(&str, SweepAxis); 3] = [("none", SweepAxis::None), ("ecc", SweepAxis::Ecc), ("omega", SweepAxis::Omega)];
const SWEEP_SOLVERS: [(&str, SweepSolver); 2] = [
    ("transient", SweepSolver::Transient),
    ("stationary", SweepSolver::Stationary),
];

fn name_of<T: PartialEq>(choices: &[(&'static str, T)], t: T) -> &'static str {
    choices.iter().find(|(_, v)| *v == t).map(|(n, _)| *n).unwrap()
}

/// Parses and validates a configuration. Omitted physical parameters take
/// their reference values; an omitted P0 is the equilibrium pressure
/// p_bnd + 2 sigma / R0 of the configured values.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    let mut cfg = RunConfig::default();
    let mut p0 = None;
    let mut u = (None, None);
    for (key, v) in &table {
        let k = key.as_str();
        if PARAM_KEYS.contains(&k) {
            let x = as_f64(k, v)?;
            if k == "P0" {
                p0 = Some(x);
            } else {
                cfg.params.set(k, x);
            }
            continue;
        }
        match k {
            "mode" => cfg.mode = as_choice(k, v, &MODES)?,
            "n1" => cfg.grid.0 = as_usize(k, v)?,
            "n2" => cfg.grid.1 = as_usize(k, v)?,
            "dt" => cfg.step.dt = as_f64(k, v)?,
            "steps" => cfg.steps = as_usize(k, v)?,
            "dynamics" => cfg.step.mode = as_choice(k, v, &DYNAMICS)?,
            "implicit_solver" => cfg.step.solver = as_choice(k, v, &SOLVERS)?,
            "picard_tol" => cfg.step.picard_tol = as_f64(k, v)?,
            "picard_max" => cfg.step.picard_max = as_usize(k, v)?,
            "max_halvings" => cfg.step.max_halvings = as_usize(k, v)?,
            "linear_solver" => cfg.step.linear.method = as_choice(k, v, &LINEAR)?,
            "linear_tol" => cfg.step.linear.tol = as_f64(k, v)?,
            "linear_max_iter" => cfg.step.linear.max_iter = as_usize(k, v)?,
            "stationarity_tol" => cfg.stationarity_tol = as_f64(k, v)?,
            "snapshot_every" => cfg.snapshot_every = as_usize(k, v)?,
            "stop_on_crit" => cfg.stop_on_crit = as_bool(k, v)?,
            "newton_tol" => cfg.stationary.newton_tol = as_f64(k, v)?,
            "newton_max" => cfg.stationary.newton_max = as_usize(k, v)?,
            "continuation_steps" => cfg.stationary.continuation_steps = as_usize(k, v)?,
            "margin" => cfg.stability.margin = as_f64(k, v)?,
            "kmax" => {
                let n = as_usize(k, v)?;
                cfg.stability.kmax = u32::try_from(n).map_err(|_| key_err(k, "too large"))?;
            }
            "stability_domain" => cfg.stability.domain = as_choice(k, v, &DOMAINS)?,
            "u1" => u.0 = Some(as_f64(k, v)?),
            "u2" => u.1 = Some(as_f64(k, v)?),
            "sweep_axis" => cfg.sweep_axis = as_choice(k, v, &AXES)?,
            "sweep_values" => {
                let arr = v.as_array().ok_or_else(|| key_err(k, "expected a list of numbers"))?;
                cfg.sweep_values = arr.iter().map(|x| as_f64(k, x)).collect::<Result<_>>()?;
            }
            "sweep_solver" => cfg.sweep_solver = as_choice(k, v, &SWEEP_SOLVERS)?,
            "output_dir" => {
                let s = v.as_str().ok_or_else(|| key_err(k, "expected a path string"))?;
                cfg.output_dir = PathBuf::from(s);
            }
            "workers" => cfg.workers = as_usize(k, v)?,
            _ => return Err(key_err(k, "unknown key")),
        }
    }
    cfg.params.p0 = p0.unwrap_or_else(|| equilibrium_p0(cfg.params.p_bnd, cfg.params.sigma, cfg.params.r0));
    if u.0.is_some() || u.1.is_some() {
        cfg.velocity = Some([u.0.unwrap_or(0.0), u.1.unwrap_or(0.0)]);
    }
    cfg.sweep_values = dedup_values(&cfg.sweep_values);
    cfg.validate()?;
    Ok(cfg)
}

/// First occurrence wins; every dropped duplicate is logged.
pub fn dedup_values(values: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        if out.contains(&v) {
            warn!("duplicate sweep value {v} dropped");
        } else {
            out.push(v);
        }
    }
    out
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        Model::new(self.params)?;
        if self.grid.0 < 4 {
            return Err(key_err("n1", "at least 4 cells required"));
        }
        if self.grid.1 < 4 {
            return Err(key_err("n2", "at least 4 cells required"));
        }
        self.step.validate()?;
        if self.steps < 1 {
            return Err(key_err("steps", "must be at least 1"));
        }
        if !(self.stationarity_tol >= 0.0 && self.stationarity_tol.is_finite()) {
            return Err(key_err("stationarity_tol", "must be finite and non-negative"));
        }
        self.stationary.validate()?;
        if !(self.stability.margin >= 0.0 && self.stability.margin.is_finite()) {
            return Err(key_err("margin", "must be finite and non-negative"));
        }
        if self.stability.kmax < 1 {
            return Err(key_err("kmax", "must be at least 1"));
        }
        if let Some(u) = self.velocity {
            if !(u[0].is_finite() && u[1].is_finite()) {
                return Err(key_err("u1", "velocity must be finite"));
            }
        }
        if self.workers < 1 {
            return Err(key_err("workers", "must be at least 1"));
        }
        if self.mode == RunMode::Sweep {
            if self.sweep_axis == SweepAxis::None {
                return Err(key_err("sweep_axis", "required for a sweep"));
            }
            if self.sweep_values.is_empty() {
                return Err(key_err("sweep_values", "required and nonempty for a sweep"));
            }
        }
        for &v in &self.sweep_values {
            self.point(v).map_err(|e| key_err("sweep_values", format!("value {v}: {e}")))?;
        }
        Ok(())
    }

    /// Surface velocity of the run.
    pub fn velocity(&self) -> [f64; 2] {
        self.velocity.unwrap_or_else(|| self.params.surface_velocity())
    }

    /// The configuration of one sweep point.
    pub fn point(&self, value: f64) -> Result<RunConfig> {
        let mut c = self.clone();
        match self.sweep_axis {
            SweepAxis::None => return Err(key_err("sweep_axis", "no sweep axis set")),
            SweepAxis::Ecc => c.params.ecc = value,
            SweepAxis::Omega => c.params.omega = value,
        }
        c.params.validate()?;
        Ok(c)
    }

    /// Renders every key, so that `parse_config(&cfg.render())` reproduces `cfg`.
    pub fn render(&self) -> String {
        let mut t = Table::new();
        for key in PARAM_KEYS {
            t.insert(key.into(), Value::Float(self.params.get(key).unwrap()));
        }
        let s = |x: &str| Value::String(x.to_string());
        let i = |n: usize| Value::Integer(n as i64);
        t.insert("mode".into(), s(name_of(&MODES, self.mode)));
        t.insert("n1".into(), i(self.grid.0));
        t.insert("n2".into(), i(self.grid.1));
        t.insert("dt".into(), Value::Float(self.step.dt));
        t.insert("steps".into(), i(self.steps));
        t.insert("dynamics".into(), s(name_of(&DYNAMICS, self.step.mode)));
        t.insert("implicit_solver".into(), s(name_of(&SOLVERS, self.step.solver)));
        t.insert("picard_tol".into(), Value::Float(self.step.picard_tol));
        t.insert("picard_max".into(), i(self.step.picard_max));
        t.insert("max_halvings".into(), i(self.step.max_halvings));
        t.insert("linear_solver".into(), s(name_of(&LINEAR, self.step.linear.method)));
        t.insert("linear_tol".into(), Value::Float(self.step.linear.tol));
        t.insert("linear_max_iter".into(), i(self.step.linear.max_iter));
        t.insert("stationarity_tol".into(), Value::Float(self.stationarity_tol));
        t.insert("snapshot_every".into(), i(self.snapshot_every));
        t.insert("stop_on_crit".into(), Value::Boolean(self.stop_on_crit));
        t.insert("newton_tol".into(), Value::Float(self.stationary.newton_tol));
        t.insert("newton_max".into(), i(self.stationary.newton_max));
        t.insert("continuation_steps".into(), i(self.stationary.continuation_steps));
        t.insert("margin".into(), Value::Float(self.stability.margin));
        t.insert("kmax".into(), i(self.stability.kmax as usize));
        t.insert("stability_domain".into(), s(name_of(&DOMAINS, self.stability.domain)));
        if let Some([u1, u2]) = self.velocity {
            t.insert("u1".into(), Value::Float(u1));
            t.insert("u2".into(), Value::Float(u2));
        }
        t.insert("sweep_axis".into(), s(name_of(&AXES, self.sweep_axis)));
        t.insert(
            "sweep_values".into(),
            Value::Array(self.sweep_values.iter().map(|v| Value::Float(*v)).collect()),
        );
        t.insert("sweep_solver".into(), s(name_of(&SWEEP_SOLVERS, self.sweep_solver)));
        t.insert("output_dir".into(), s(&self.output_dir.to_string_lossy()));
        t.insert("workers".into(), i(self.workers));
        toml::to_string(&t).expect("a flat table of scalars always serializes")
    }
}

/// Every accepted key.
pub fn accepted_keys() -> Vec<&'static str> {
    PARAM_KEYS
        .iter()
        .copied()
        .chain(RUN_KEYS.iter().map(|(k, _)| *k))
        .chain(IO_KEYS)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::ATM;

    const REFERENCE: &str = "
rho_l = 854.0
mu_l = 7.1e-3
rho_g = 1.0
mu_g = 1.81e-5
kappa_s = 7.85e-5
k_poly = 1.4
sigma = 3.5e-2
p_bnd = 101325
R0 = 3.85e-7
alpha0 = 0.1
J_r = 25.4e-3
B = 25.4e-3
h0 = 25.4e-6
ecc = 0.4
omega = 104.71975511965977
";

    #[test]
    fn reference_values_get_defaults() {
        let cfg = parse_config(REFERENCE).unwrap();
        assert_eq!(cfg.grid, (128, 32));
        assert_eq!(cfg.step.dt, 3e-4);
        assert_eq!(cfg.mode, RunMode::Transient);
        assert_eq!(cfg.params.p0, ATM + 2.0 * 3.5e-2 / 3.85e-7);
        assert_eq!(cfg.params.ecc, 0.4);
    }

    #[test]
    fn eccentricity_above_one_is_rejected() {
        let err = parse_config("ecc = 1.2").unwrap_err();
        assert!(matches!(&err, Error::Key { key, .. } if key == "ecc"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config("ecc = 0.1\nviscosity = 2").unwrap_err();
        assert!(matches!(&err, Error::Key { key, .. } if key == "viscosity"));
    }

    #[test]
    fn sweep_needs_values_and_drops_duplicates() {
        let err = parse_config("mode = \"sweep\"\nsweep_axis = \"ecc\"").unwrap_err();
        assert!(matches!(&err, Error::Key { key, .. } if key == "sweep_values"));
        let cfg =
            parse_config("mode = \"sweep\"\nsweep_axis = \"ecc\"\nsweep_values = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.2]")
                .unwrap();
        assert_eq!(cfg.sweep_values, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let points: Vec<_> = cfg.sweep_values.iter().map(|v| cfg.point(*v).unwrap()).collect();
        assert_eq!(points.len(), 6);
        assert_eq!(points[5].params.ecc, 0.6);
    }

    #[test]
    fn sweep_value_outside_range_is_rejected() {
        let err = parse_config("mode = \"sweep\"\nsweep_axis = \"ecc\"\nsweep_values = [0.2, 1.0]").unwrap_err();
        assert!(matches!(&err, Error::Key { key, .. } if key == "sweep_values"));
    }

    #[test]
    fn wrong_value_types_are_rejected() {
        for text in ["n1 = 12.5", "dt = \"fast\"", "mode = \"dance\"", "stop_on_crit = 1", "n2 = -3"] {
            assert!(parse_config(text).unwrap_err().is_config(), "{text}");
        }
        assert!(matches!(parse_config("ecc = "), Err(Error::Config(_))));
    }

    #[test]
    fn explicit_p0_is_kept() {
        let cfg = parse_config("P0 = 101325").unwrap();
        assert_eq!(cfg.params.p0, ATM);
    }

    #[test]
    fn render_round_trips() {
        let mut cfg = parse_config(REFERENCE).unwrap();
        cfg.velocity = Some([1.5, -0.25]);
        cfg.sweep_axis = SweepAxis::Omega;
        cfg.sweep_values = vec![50.0, 104.5];
        cfg.step.mode = Mode::Inertial;
        assert_eq!(parse_config(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn every_rendered_key_is_accepted() {
        let keys = accepted_keys();
        let t: Table = RunConfig::default().render().parse().unwrap();
        for k in t.keys() {
            assert!(keys.contains(&k.as_str()), "{k}");
        }
    }
}
