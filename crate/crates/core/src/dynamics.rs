//! Pressure elimination and time integration of the bubble-radius field.

use std::path::PathBuf;

use crate::elliptic::{
    assemble_couette_rhs, assemble_diffusion, solve_spd, LinearSolveConfig, SolveReport,
};
use crate::error::{Error, Result};
use crate::grid::{write_fields_csv, ScalarField};
use crate::physics::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// First-order radius dynamics dR/dt = G(R).
    Inertialess,
    /// Full second-order Rayleigh-Plesset dynamics.
    Inertial,
}

/// Nonlinear solver for the backward Euler system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImplicitSolver {
    /// R <- R_n + dt G(R), with G from a full pressure elimination.
    Picard,
    /// Cell-wise implicit radius update for the current pressure, followed by
    /// a Newton-type pressure correction. Robust where the local relaxation
    /// rate makes dt |dG/dR| large.
    PressureNewton,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    /// Relative size of the last update that ends the nonlinear iteration.
    pub picard_tol: f64,
    pub picard_max: usize,
    pub mode: Mode,
    pub solver: ImplicitSolver,
    pub max_halvings: usize,
    pub linear: LinearSolveConfig,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            dt: 3e-4,
            picard_tol: 1e-10,
            picard_max: 100,
            mode: Mode::Inertialess,
            solver: ImplicitSolver::Picard,
            max_halvings: 10,
            linear: LinearSolveConfig::krylov(1e-12),
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::Key { key: key.into(), msg });
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", format!("{} must be positive", self.dt));
        }
        if !(self.picard_tol > 0.0 && self.picard_tol <= 1e-3) {
            return bad("picard_tol", format!("{} not in (0, 1e-3]", self.picard_tol));
        }
        if self.picard_max < 1 {
            return bad("picard_max", "must be at least 1".into());
        }
        self.linear.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientState {
    pub t: f64,
    pub r: ScalarField,
    /// dR/dt, carried in inertial mode only.
    pub rdot: Option<ScalarField>,
    pub p: ScalarField,
}

impl TransientState {
    /// Uniform radius at rest with zero pressure.
    pub fn uniform(r: &ScalarField, mode: Mode) -> Self {
        let g = *r.grid();
        TransientState {
            t: 0.0,
            r: r.clone(),
            rdot: (mode == Mode::Inertial).then(|| ScalarField::zeros(g)),
            p: ScalarField::zeros(g),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PressureElimination {
    /// dR/dt = (f1(R) - p) / (R f2(R)).
    pub g: ScalarField,
    pub p: ScalarField,
    pub report: SolveReport,
}

/// Solves the coupled linear problem for G(R) and the pressure.
///
/// With S = (f1 - p)/(R f2) substituted into K p = div(U h f4) + h f5 S, the
/// pressure satisfies the symmetric positive definite system
/// (-K + c) p = -div(U h f4) + c f1 with c = -h f5 / (R f2) > 0.
pub fn eliminate_pressure(
    model: &Model,
    r: &ScalarField,
    h: &ScalarField,
    u: [f64; 2],
    cfg: &LinearSolveConfig,
) -> Result<PressureElimination> {
    let mut p = vec![0.0; r.grid().len()];
    let (g, report) = eliminate_into(model, r, h, u, cfg, &mut p)?;
    Ok(PressureElimination {
        g,
        p: ScalarField::new(*r.grid(), p)?,
        report,
    })
}

/// `p` carries the initial guess in and the pressure out.
fn eliminate_into(
    model: &Model,
    r: &ScalarField,
    h: &ScalarField,
    u: [f64; 2],
    cfg: &LinearSolveConfig,
    p: &mut [f64],
) -> Result<(ScalarField, SolveReport)> {
    let aux = &model.aux;
    let op = assemble_diffusion(model, r, h)?;
    let div = assemble_couette_rhs(model, r, h, u)?;
    let n = r.grid().len();
    let mut f1 = vec![0.0; n];
    let mut rf2 = vec![0.0; n];
    let mut shift = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for c in 0..n {
        let (rv, hv) = (r.values()[c], h.values()[c]);
        f1[c] = aux.f1(rv);
        rf2[c] = rv * aux.f2(rv);
        shift[c] = -hv * aux.f5(rv) / rf2[c];
        rhs[c] = -div.values()[c] + shift[c] * f1[c];
    }
    let report = solve_spd(&op, Some(&shift), &rhs, p, cfg)?;
    let g = (0..n).map(|c| (f1[c] - p[c]) / rf2[c]).collect();
    Ok((ScalarField::new(*r.grid(), g)?, report))
}

/// Pressure of the inertial model, A(R, dR/dt) = A1(R) + A2(R, dR/dt).
pub fn inertial_pressure(
    model: &Model,
    r: &ScalarField,
    rdot: &ScalarField,
    h: &ScalarField,
    u: [f64; 2],
    cfg: &LinearSolveConfig,
) -> Result<ScalarField> {
    let op = assemble_diffusion(model, r, h)?;
    let div = assemble_couette_rhs(model, r, h, u)?;
    let rhs: Vec<f64> = (0..r.grid().len())
        .map(|c| {
            let rv = r.values()[c];
            -div.values()[c] - h.values()[c] * model.aux.f5(rv) * rdot.values()[c]
        })
        .collect();
    let mut p = vec![0.0; rhs.len()];
    solve_spd(&op, None, &rhs, &mut p, cfg)?;
    ScalarField::new(*r.grid(), p)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepDiagnostics {
    /// Accepted sub-steps (1 when no halving happened).
    pub substeps: usize,
    /// Deepest halving level used.
    pub halvings: usize,
    pub picard_iterations: usize,
    pub linear_iterations: usize,
}

enum Rejection {
    Positivity(f64),
    Picard(f64),
    Local(usize),
    NonFinite,
    Linear(Error),
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Solves r = r_n + dt (f1(r) - p) / (r f2(r)) for one cell, starting from
/// `guess`. Returns the root and d/dr of (r - r_n) r f2(r) / dt - f1(r).
fn local_radius(model: &Model, r_n: f64, p: f64, dt: f64, guess: f64) -> Option<(f64, f64)> {
    let aux = &model.aux;
    let phi = |r: f64| {
        let rf2 = r * aux.f2(r);
        let v = (r - r_n) * rf2 / dt - aux.f1(r) + p;
        let d = (rf2 + (r - r_n) * (aux.f2(r) + r * aux.f2_prime(r))) / dt - aux.f1_prime(r);
        (v, d)
    };
    // phi rises through the stable root; a point with phi < 0 and phi' <= 0
    // lies past the local maximum and bounds the search from above.
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let mut straddle = false;
    let mut x = guess;
    for _ in 0..200 {
        let (v, d) = phi(x);
        if !v.is_finite() || !d.is_finite() {
            return None;
        }
        if d > 0.0 && (v / d).abs() <= 1e-14 * x {
            return Some((x - v / d, d));
        }
        if v < 0.0 && d > 0.0 {
            lo = x;
        } else {
            hi = x;
            straddle = v >= 0.0;
        }
        if hi.is_finite() && hi - lo <= 1e-14 * hi {
            return (straddle && lo > 0.0 && d > 0.0).then_some((x, d));
        }
        let newton = x - v / d;
        x = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else if hi.is_infinite() {
            2.0 * x
        } else if lo == 0.0 {
            0.5 * x
        } else {
            0.5 * (lo + hi)
        };
    }
    None
}

struct Stepper<'a> {
    model: &'a Model,
    h: &'a ScalarField,
    u: [f64; 2],
    cfg: &'a StepConfig,
    diag: StepDiagnostics,
}

impl Stepper<'_> {
    fn backward_euler(
        &mut self,
        state: &TransientState,
        dt: f64,
    ) -> Result<std::result::Result<TransientState, Rejection>> {
        let grid = *state.r.grid();
        let r_n = state.r.values();
        let mut p = state.p.values().to_vec();
        let mut r_k = state.r.clone();
        for _ in 0..self.cfg.picard_max {
            let (g, rep) = eliminate_into(self.model, &r_k, self.h, self.u, &self.cfg.linear, &mut p)?;
            self.diag.picard_iterations += 1;
            self.diag.linear_iterations += rep.iterations;
            let next: Vec<f64> = r_n.iter().zip(g.values()).map(|(a, b)| a + dt * b).collect();
            let lowest = min_of(&next);
            if !(lowest > 0.0) || next.iter().any(|v| !v.is_finite()) {
                return Ok(Err(Rejection::Positivity(lowest)));
            }
            let mut update = 0.0f64;
            let mut scale = 0.0f64;
            for (a, b) in next.iter().zip(r_k.values()) {
                update = update.max((a - b).abs());
                scale = scale.max(a.abs());
            }
            r_k = ScalarField::new(grid, next)?;
            if update <= self.cfg.picard_tol * scale {
                return Ok(Ok(TransientState {
                    t: state.t + dt,
                    r: r_k,
                    rdot: None,
                    p: ScalarField::new(grid, p)?,
                }));
            }
        }
        let last = eliminate_into(self.model, &r_k, self.h, self.u, &self.cfg.linear, &mut p)?.0;
        let resid = r_n
            .iter()
            .zip(last.values())
            .zip(r_k.values())
            .map(|((a, b), c)| (a + dt * b - c).abs())
            .fold(0.0, f64::max);
        Ok(Err(Rejection::Picard(resid)))
    }

    fn pressure_newton(
        &mut self,
        state: &TransientState,
        dt: f64,
    ) -> Result<std::result::Result<TransientState, Rejection>> {
        let (model, h, u) = (self.model, self.h, self.u);
        let aux = &model.aux;
        let grid = *state.r.grid();
        let n = grid.len();
        let r_n = state.r.values();
        let mut p = state.p.values().to_vec();
        let mut r = r_n.to_vec();
        let mut slope = vec![0.0; n];
        let mut shift = vec![0.0; n];
        let mut resid = vec![0.0; n];
        let mut dp = vec![0.0; n];
        let mut last = f64::NAN;
        for _ in 0..self.cfg.picard_max {
            self.diag.picard_iterations += 1;
            let mut update = 0.0f64;
            for c in 0..n {
                let Some((rc, d)) = local_radius(model, r_n[c], p[c], dt, r[c]) else {
                    return Ok(Err(Rejection::Local(c)));
                };
                update = update.max((rc - r[c]).abs());
                r[c] = rc;
                slope[c] = d;
            }
            let lowest = min_of(&r);
            if !(lowest > 0.0) {
                return Ok(Err(Rejection::Positivity(lowest)));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Ok(Err(Rejection::NonFinite));
            }
            let rf = ScalarField::new(grid, r.clone())?;
            let op = assemble_diffusion(model, &rf, h)?;
            let div = assemble_couette_rhs(model, &rf, h, u)?;
            // F(p) = K p - div - h f5 (R - R_n)/dt, dF/dp ~ K + h f5 / (dt phi')
            op.apply(&p, &mut resid);
            for c in 0..n {
                let f5h = h.values()[c] * aux.f5(r[c]);
                resid[c] -= div.values()[c] + f5h * (r[c] - r_n[c]) / dt;
                shift[c] = (-f5h / (dt * slope[c])).max(0.0);
            }
            dp.iter_mut().for_each(|v| *v = 0.0);
            let rep = match solve_spd(&op, Some(&shift), &resid, &mut dp, &self.cfg.linear) {
                Ok(rep) => rep,
                Err(e @ Error::NoConvergence { .. }) => return Ok(Err(Rejection::Linear(e))),
                Err(e) => return Err(e),
            };
            self.diag.linear_iterations += rep.iterations;
            p.iter_mut().zip(&dp).for_each(|(a, b)| *a += b);
            if p.iter().any(|v| !v.is_finite()) {
                return Ok(Err(Rejection::NonFinite));
            }
            let scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            // radius change implied by the pressure correction
            let dp_max = dp.iter().zip(&slope).fold(0.0f64, |m, (a, b)| m.max((a / b).abs()));
            last = update.max(dp_max);
            if last <= self.cfg.picard_tol * scale {
                return Ok(Ok(TransientState {
                    t: state.t + dt,
                    r: rf,
                    rdot: None,
                    p: ScalarField::new(grid, p)?,
                }));
            }
        }
        Ok(Err(Rejection::Picard(last)))
    }

    fn rk4(&mut self, state: &TransientState, dt: f64) -> Result<std::result::Result<TransientState, Rejection>> {
        let grid = *state.r.grid();
        let (model, h, u, linear) = (self.model, self.h, self.u, self.cfg.linear);
        let aux = &model.aux;
        let n = grid.len();
        let mut evaluations = 0;
        let rdot0 = state
            .rdot
            .as_ref()
            .ok_or_else(|| Error::State("inertial step needs dR/dt in the state".into()))?;
        let mut eval = |r: &[f64], v: &[f64]| -> Result<std::result::Result<(Vec<f64>, Vec<f64>), Rejection>> {
            let lowest = min_of(r);
            if !(lowest > 0.0) || r.iter().chain(v).any(|x| !x.is_finite()) {
                return Ok(Err(Rejection::Positivity(lowest)));
            }
            let rf = ScalarField::new(grid, r.to_vec())?;
            let vf = ScalarField::new(grid, v.to_vec())?;
            let p = inertial_pressure(model, &rf, &vf, h, u, &linear)?;
            evaluations += 1;
            let acc = (0..n)
                .map(|c| {
                    let (rc, vc) = (r[c], v[c]);
                    -1.5 * vc * vc / rc - vc * aux.f2(rc) + (aux.f1(rc) - p.values()[c]) / rc
                })
                .collect();
            Ok(Ok((v.to_vec(), acc)))
        };
        let r0 = state.r.values();
        let v0 = rdot0.values();
        let axpy = |x: &[f64], a: f64, y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p + a * q).collect() };
        let (k1r, k1v) = match eval(r0, v0)? {
            Ok(k) => k,
            Err(e) => return Ok(Err(e)),
        };
        let (k2r, k2v) = match eval(&axpy(r0, 0.5 * dt, &k1r), &axpy(v0, 0.5 * dt, &k1v))? {
            Ok(k) => k,
            Err(e) => return Ok(Err(e)),
        };
        let (k3r, k3v) = match eval(&axpy(r0, 0.5 * dt, &k2r), &axpy(v0, 0.5 * dt, &k2v))? {
            Ok(k) => k,
            Err(e) => return Ok(Err(e)),
        };
        let (k4r, k4v) = match eval(&axpy(r0, dt, &k3r), &axpy(v0, dt, &k3v))? {
            Ok(k) => k,
            Err(e) => return Ok(Err(e)),
        };
        let combine = |x: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| x[i] + dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
                .collect()
        };
        self.diag.picard_iterations += evaluations;
        let r1 = combine(r0, &k1r, &k2r, &k3r, &k4r);
        let v1 = combine(v0, &k1v, &k2v, &k3v, &k4v);
        let lowest = min_of(&r1);
        if !(lowest > 0.0) || r1.iter().chain(&v1).any(|x| !x.is_finite()) {
            return Ok(Err(Rejection::Positivity(lowest)));
        }
        let r = ScalarField::new(grid, r1)?;
        let v = ScalarField::new(grid, v1)?;
        let p = inertial_pressure(self.model, &r, &v, self.h, self.u, &self.cfg.linear)?;
        Ok(Ok(TransientState {
            t: state.t + dt,
            r,
            rdot: Some(v),
            p,
        }))
    }

    /// One step of size `dt`, split recursively into halves on rejection.
    fn advance(&mut self, state: &TransientState, dt: f64, depth: usize) -> Result<TransientState> {
        let attempt = match self.cfg.mode {
            Mode::Inertialess => match self.cfg.solver {
                ImplicitSolver::Picard => self.backward_euler(state, dt)?,
                ImplicitSolver::PressureNewton => self.pressure_newton(state, dt)?,
            },
            Mode::Inertial => self.rk4(state, dt)?,
        };
        match attempt {
            Ok(next) => {
                self.diag.substeps += 1;
                self.diag.halvings = self.diag.halvings.max(depth);
                Ok(next)
            }
            Err(_) if depth < self.cfg.max_halvings => {
                let mid = self.advance(state, 0.5 * dt, depth + 1)?;
                self.advance(&mid, 0.5 * dt, depth + 1)
            }
            Err(Rejection::Positivity(min_r)) => Err(Error::BlowUp {
                step: 0,
                min_r,
                halvings: depth,
            }),
            Err(Rejection::Picard(resid)) => Err(Error::StepFailure {
                step: 0,
                t: state.t,
                reason: format!(
                    "nonlinear iteration stalled after {} iterations (fixed-point residual {resid:.3e} m) at dt = {dt:.3e}",
                    self.cfg.picard_max
                ),
            }),
            Err(Rejection::Local(c)) => Err(Error::StepFailure {
                step: 0,
                t: state.t,
                reason: format!("no admissible radius for cell {c} at dt = {dt:.3e}"),
            }),
            Err(Rejection::NonFinite) => Err(Error::BlowUp {
                step: 0,
                min_r: f64::NAN,
                halvings: depth,
            }),
            Err(Rejection::Linear(e)) => Err(e),
        }
    }
}

fn check_state(state: &TransientState, h: &ScalarField) -> Result<()> {
    if state.r.grid() != h.grid() || state.p.grid() != h.grid() {
        return Err(Error::State("state and gap live on different grids".into()));
    }
    if !(state.r.min() > 0.0) {
        return Err(Error::State("state has a non-positive radius".into()));
    }
    Ok(())
}

/// Backward Euler step R+ = R + dt G(R+), solved by Picard iteration.
pub fn step_inertialess(
    model: &Model,
    state: &TransientState,
    h: &ScalarField,
    u: [f64; 2],
    cfg: &StepConfig,
) -> Result<(TransientState, StepDiagnostics)> {
    check_state(state, h)?;
    let cfg = StepConfig {
        mode: Mode::Inertialess,
        ..*cfg
    };
    let mut s = Stepper {
        model,
        h,
        u,
        cfg: &cfg,
        diag: StepDiagnostics::default(),
    };
    let next = s.advance(state, cfg.dt, 0)?;
    Ok((next, s.diag))
}

/// Classical RK4 step on (R, dR/dt).
pub fn step_inertial(
    model: &Model,
    state: &TransientState,
    h: &ScalarField,
    u: [f64; 2],
    cfg: &StepConfig,
) -> Result<(TransientState, StepDiagnostics)> {
    check_state(state, h)?;
    let cfg = StepConfig {
        mode: Mode::Inertial,
        ..*cfg
    };
    let mut s = Stepper {
        model,
        h,
        u,
        cfg: &cfg,
        diag: StepDiagnostics::default(),
    };
    let next = s.advance(state, cfg.dt, 0)?;
    Ok((next, s.diag))
}

#[derive(Debug, Clone)]
pub struct Watch {
    /// Convergence once max|dR| / (dt R0) drops below this (1/s).
    pub stationarity_tol: f64,
    pub snapshot_every: Option<usize>,
    pub snapshot_dir: Option<PathBuf>,
    /// End the run as soon as max R reaches the critical radius.
    pub stop_on_crit: bool,
}

impl Default for Watch {
    fn default() -> Self {
        Watch {
            stationarity_tol: 1e-8,
            snapshot_every: None,
            snapshot_dir: None,
            stop_on_crit: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    /// max|R(n+1) - R(n)| / (dt R0).
    pub rate: f64,
    pub min_rhat: f64,
    pub max_rhat: f64,
    pub min_p: f64,
    pub max_p: f64,
    pub picard_iterations: usize,
    pub halvings: usize,
}

#[derive(Debug, Clone)]
pub struct TransientSummary {
    pub converged: bool,
    pub steps: usize,
    pub final_state: TransientState,
    pub final_rate: f64,
    pub history: Vec<StepRecord>,
    /// Whether max R reached R_crit at some step.
    pub crossed_crit: bool,
    /// First step whose pressure dipped below p_cav.
    pub first_undershoot: Option<usize>,
    /// Set when the run ended on a failed step; the summary then describes
    /// the last accepted state.
    pub failure: Option<String>,
}

/// Integrates up to `n_steps` steps, stopping early at stationarity.
///
/// A failing step ends the run: the error is returned when `fail_hard` is
/// set, otherwise it is recorded in the summary.
pub fn run_transient(
    model: &Model,
    init: &TransientState,
    h: &ScalarField,
    u: [f64; 2],
    cfg: &StepConfig,
    n_steps: usize,
    watch: &Watch,
) -> Result<TransientSummary> {
    run_transient_inner(model, init, h, u, cfg, n_steps, watch, true)
}

/// As `run_transient`, but a failing step is reported in the summary.
pub fn run_transient_lenient(
    model: &Model,
    init: &TransientState,
    h: &ScalarField,
    u: [f64; 2],
    cfg: &StepConfig,
    n_steps: usize,
    watch: &Watch,
) -> Result<TransientSummary> {
    run_transient_inner(model, init, h, u, cfg, n_steps, watch, false)
}

#[allow(clippy::too_many_arguments)]
fn run_transient_inner(
    model: &Model,
    init: &TransientState,
    h: &ScalarField,
    u: [f64; 2],
    cfg: &StepConfig,
    n_steps: usize,
    watch: &Watch,
    fail_hard: bool,
) -> Result<TransientSummary> {
    cfg.validate()?;
    check_state(init, h)?;
    let r0 = model.params.r0;
    let rhat_crit = model.rhat_crit();
    let p_cav = model.derived.p_cav;
    let snapshot = |step: usize, state: &TransientState| -> Result<()> {
        if let (Some(every), Some(dir)) = (watch.snapshot_every, &watch.snapshot_dir) {
            if every > 0 && step.is_multiple_of(every) {
                write_fields_csv(
                    &dir.join(format!("snapshot_{step}.csv")),
                    &state.r,
                    &state.p,
                    &model.params,
                )?;
            }
        }
        Ok(())
    };

    let mut state = init.clone();
    if cfg.mode == Mode::Inertial && state.rdot.is_none() {
        state.rdot = Some(ScalarField::zeros(*h.grid()));
    }
    snapshot(0, &state)?;
    let mut history = Vec::new();
    let mut converged = false;
    let mut crossed_crit = false;
    let mut first_undershoot = None;
    let mut final_rate = f64::INFINITY;
    let mut failure = None;
    let mut steps = 0;
    for step in 1..=n_steps {
        let stepped = match cfg.mode {
            Mode::Inertialess => step_inertialess(model, &state, h, u, cfg),
            Mode::Inertial => step_inertial(model, &state, h, u, cfg),
        };
        let (next, diag) = match stepped {
            Ok(v) => v,
            Err(e) => {
                let e = match e {
                    Error::BlowUp { min_r, halvings, .. } => Error::BlowUp { step, min_r, halvings },
                    Error::StepFailure { t, reason, .. } => Error::StepFailure { step, t, reason },
                    other => other,
                };
                if fail_hard {
                    return Err(e);
                }
                failure = Some(e.to_string());
                break;
            }
        };
        let rate = next
            .r
            .values()
            .iter()
            .zip(state.r.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / (cfg.dt * r0);
        let rec = StepRecord {
            step,
            t: next.t,
            rate,
            min_rhat: next.r.min() / r0,
            max_rhat: next.r.max() / r0,
            min_p: next.p.min(),
            max_p: next.p.max(),
            picard_iterations: diag.picard_iterations,
            halvings: diag.halvings,
        };
        if rec.min_p < p_cav && first_undershoot.is_none() {
            first_undershoot = Some(step);
        }
        crossed_crit |= rec.max_rhat >= rhat_crit;
        history.push(rec);
        state = next;
        steps = step;
        final_rate = rate;
        snapshot(step, &state)?;
        if rate < watch.stationarity_tol {
            converged = true;
            break;
        }
        if watch.stop_on_crit && crossed_crit {
            break;
        }
    }
    // pressure consistent with the final radius field
    state.p = match cfg.mode {
        Mode::Inertialess => eliminate_pressure(model, &state.r, h, u, &cfg.linear)?.p,
        Mode::Inertial => inertial_pressure(model, &state.r, state.rdot.as_ref().unwrap(), h, u, &cfg.linear)?,
    };
    if let (Some(_), Some(dir)) = (watch.snapshot_every, &watch.snapshot_dir) {
        write_fields_csv(&dir.join(format!("snapshot_{steps}.csv")), &state.r, &state.p, &model.params)?;
    }
    Ok(TransientSummary {
        converged,
        steps,
        final_state: state,
        final_rate,
        history,
        crossed_crit,
        first_undershoot,
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gap_function, Grid};
    use crate::physics::{PhysicalParams, ATM};

    fn model(p0: f64, ecc: f64) -> Model {
        Model::new(PhysicalParams {
            p0,
            ecc,
            ..PhysicalParams::reference()
        })
        .unwrap()
    }

    #[test]
    fn equilibrium_gives_zero_rate_and_pressure() {
        let m = Model::new(PhysicalParams::reference()).unwrap();
        let g = Grid::journal(&m.params, 16, 8).unwrap();
        let r = ScalarField::constant(g, m.derived.r_bar);
        let h = gap_function(&Grid::journal(&m.params, 16, 8).unwrap(), &PhysicalParams { ecc: 0.5, ..m.params }).unwrap();
        let e = eliminate_pressure(&m, &r, &h, [0.0, 0.0], &LinearSolveConfig::default()).unwrap();
        assert!(e.g.values().iter().all(|v| v.abs() < 1e-12 * m.params.r0));
        assert!(e.p.values().iter().all(|v| v.abs() < 1e-9));
        let flat = ScalarField::constant(g, m.params.h0);
        let e = eliminate_pressure(&m, &r, &flat, m.params.surface_velocity(), &LinearSolveConfig::default()).unwrap();
        assert!(e.g.values().iter().all(|v| v.abs() < 1e-12 * m.params.r0));
        assert!(e.p.values().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn fixed_point_is_preserved() {
        let m = model(ATM, 0.0);
        let g = Grid::journal(&m.params, 16, 8).unwrap();
        let h = gap_function(&g, &m.params).unwrap();
        let state = TransientState::uniform(&ScalarField::constant(g, m.derived.r_bar), Mode::Inertialess);
        let (next, _) = step_inertialess(&m, &state, &h, [0.0, 0.0], &StepConfig::default()).unwrap();
        for v in next.r.values() {
            assert!((v - m.derived.r_bar).abs() <= 1e-12 * m.derived.r_bar);
        }
        let cfg = StepConfig {
            dt: 1e-6,
            mode: Mode::Inertial,
            linear: LinearSolveConfig::default(),
            ..Default::default()
        };
        let state = TransientState::uniform(&ScalarField::constant(g, m.derived.r_bar), Mode::Inertial);
        let (next, _) = step_inertial(&m, &state, &h, [0.0, 0.0], &cfg).unwrap();
        for v in next.r.values() {
            assert!((v - m.derived.r_bar).abs() <= 1e-12 * m.derived.r_bar);
        }
    }

    /// Without gas-fraction feedback (alpha0 = 0) the squeeze source vanishes.
    fn decoupled() -> Model {
        Model::new(PhysicalParams {
            p0: ATM,
            alpha0: 0.0,
            ..PhysicalParams::reference()
        })
        .unwrap()
    }

    #[test]
    fn uniform_data_stays_uniform_without_squeeze_feedback() {
        let m = decoupled();
        let g = Grid::journal(&m.params, 16, 8).unwrap();
        let h = gap_function(&g, &m.params).unwrap();
        let mut state = TransientState::uniform(&ScalarField::constant(g, m.params.r0), Mode::Inertialess);
        for _ in 0..20 {
            state = step_inertialess(&m, &state, &h, [0.0, 0.0], &StepConfig::default()).unwrap().0;
            let spread = state.r.max() - state.r.min();
            assert!(spread < 1e-12 * m.params.r0);
            assert!(state.p.values().iter().all(|&v| v == 0.0));
        }
        assert!(state.r.values()[0] < m.params.r0);
    }

    #[test]
    fn squeeze_pressure_holds_back_uniform_shrinkage() {
        // with alpha0 > 0 a shrinking bubble population pulls liquid in, so the
        // bulk pressure tracks f1 and only the edges relax quickly
        let m = model(ATM, 0.0);
        let g = Grid::journal(&m.params, 32, 16).unwrap();
        let h = gap_function(&g, &m.params).unwrap();
        let r = ScalarField::constant(g, m.params.r0);
        let e = eliminate_pressure(&m, &r, &h, [0.0, 0.0], &LinearSolveConfig::default()).unwrap();
        let f1 = m.aux.f1(m.params.r0);
        let centre = e.p.values()[g.index(16, 8)];
        let edge = e.p.values()[g.index(16, 0)];
        assert!(centre / f1 > 0.5 && centre / f1 < 1.0, "{centre} vs {f1}");
        assert!(edge / centre < 0.5, "{edge} vs {centre}");
        assert!(e.g.max() - e.g.min() > 0.5 * e.g.max().abs());
    }

    #[test]
    fn huge_step_triggers_halving() {
        let m = decoupled();
        let g = Grid::journal(&m.params, 8, 4).unwrap();
        let h = gap_function(&g, &m.params).unwrap();
        let state = TransientState::uniform(&ScalarField::constant(g, 0.5 * m.derived.r_bar), Mode::Inertialess);
        let cfg = StepConfig {
            dt: 1e-2,
            solver: ImplicitSolver::Picard,
            ..Default::default()
        };
        let (next, diag) = step_inertialess(&m, &state, &h, [0.0, 0.0], &cfg).unwrap();
        assert!(diag.halvings > 0);
        assert!(diag.substeps > 1);
        assert!((next.t - 1e-2).abs() < 1e-15);
        assert!((next.r.values()[0] - m.derived.r_bar).abs() < 1e-3 * m.derived.r_bar);
    }

    #[test]
    fn pressure_newton_takes_stiff_step_whole() {
        let m = decoupled();
        let g = Grid::journal(&m.params, 8, 4).unwrap();
        let h = gap_function(&g, &m.params).unwrap();
        let state = TransientState::uniform(&ScalarField::constant(g, 0.5 * m.derived.r_bar), Mode::Inertialess);
        let cfg = StepConfig {
            dt: 1e-2,
            solver: ImplicitSolver::PressureNewton,
            ..Default::default()
        };
        let (next, diag) = step_inertialess(&m, &state, &h, [0.0, 0.0], &cfg).unwrap();
        assert_eq!((diag.halvings, diag.substeps), (0, 1));
        // scalar backward Euler root by bisection
        let (rn, dt) = (0.5 * m.derived.r_bar, cfg.dt);
        let resid = |r: f64| r - rn - dt * m.aux.f1(r) / (r * m.aux.f2(r));
        let (mut lo, mut hi) = (rn, m.derived.r_bar);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if resid(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        for v in next.r.values() {
            assert!((v - lo).abs() < 1e-12 * lo, "{v} {lo}");
        }
    }

    #[test]
    fn both_solvers_find_the_same_implicit_step() {
        let m = model(PhysicalParams::reference().p0, 0.3);
        let g = Grid::journal(&m.params, 16, 8).unwrap();
        let h = gap_function(&g, &m.params).unwrap();
        let u = m.params.surface_velocity();
        let mut state = TransientState::uniform(&ScalarField::constant(g, m.params.r0), Mode::Inertialess);
        for _ in 0..3 {
            let newton = StepConfig {
                solver: ImplicitSolver::PressureNewton,
                ..Default::default()
            };
            let (a, _) = step_inertialess(&m, &state, &h, u, &StepConfig::default()).unwrap();
            let (b, _) = step_inertialess(&m, &state, &h, u, &newton).unwrap();
            for (x, y) in a.r.values().iter().zip(b.r.values()) {
                assert!((x - y).abs() < 1e-8 * m.params.r0, "{x} {y}");
            }
            let scale = a.p.values().iter().fold(0.0f64, |s, v| s.max(v.abs()));
            for (x, y) in a.p.values().iter().zip(b.p.values()) {
                assert!((x - y).abs() < 1e-6 * scale, "{x} {y}");
            }
            state = b;
        }
        assert!(state.r.max() > 1.01 * m.params.r0);
    }

    #[test]
    fn exhausted_halvings_report_failure() {
        let m = decoupled();
        let g = Grid::journal(&m.params, 8, 4).unwrap();
        let h = gap_function(&g, &m.params).unwrap();
        let state = TransientState::uniform(&ScalarField::constant(g, 0.5 * m.derived.r_bar), Mode::Inertialess);
        let cfg = StepConfig {
            dt: 1e-2,
            max_halvings: 0,
            picard_max: 3,
            solver: ImplicitSolver::Picard,
            ..Default::default()
        };
        let err = step_inertialess(&m, &state, &h, [0.0, 0.0], &cfg).unwrap_err();
        assert!(matches!(err, Error::StepFailure { .. } | Error::BlowUp { .. }), "{err}");
    }

    #[test]
    fn step_config_validation() {
        assert!(StepConfig::default().validate().is_ok());
        assert!(StepConfig { dt: 0.0, ..Default::default() }.validate().is_err());
        assert!(StepConfig { picard_tol: 0.1, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn run_from_rest_without_motion_reaches_equilibrium() {
        let m = decoupled();
        let g = Grid::journal(&m.params, 16, 8).unwrap();
        let h = gap_function(&g, &m.params).unwrap();
        let init = TransientState::uniform(&ScalarField::constant(g, m.params.r0), Mode::Inertialess);
        let sum = run_transient(&m, &init, &h, [0.0, 0.0], &StepConfig::default(), 2000, &Watch::default()).unwrap();
        assert!(sum.converged);
        for v in sum.final_state.r.values() {
            assert!((v - m.derived.r_bar).abs() < 1e-10 * m.derived.r_bar);
        }
        assert!(sum.final_state.p.values().iter().all(|v| v.abs() < 1e-10));
        assert_eq!(sum.history.len(), sum.steps);

        // at the tabulated reference pressure R0 is already the equilibrium
        let m = model(PhysicalParams::reference().p0, 0.3);
        let sum = run_transient(&m, &init, &h, [0.0, 0.0], &StepConfig::default(), 10, &Watch::default()).unwrap();
        assert!(sum.converged && sum.steps == 1);
    }

    #[test]
    fn snapshots_are_written() {
        let m = model(ATM, 0.0);
        let g = Grid::journal(&m.params, 8, 4).unwrap();
        let h = gap_function(&g, &m.params).unwrap();
        let init = TransientState::uniform(&ScalarField::constant(g, m.params.r0), Mode::Inertialess);
        let dir = tempfile::tempdir().unwrap();
        let watch = Watch {
            snapshot_every: Some(2),
            snapshot_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let sum = run_transient(&m, &init, &h, [0.0, 0.0], &StepConfig::default(), 5, &watch).unwrap();
        assert_eq!(sum.steps, 5);
        for s in [0, 2, 4, 5] {
            assert!(dir.path().join(format!("snapshot_{s}.csv")).exists(), "{s}");
        }
        assert!(!dir.path().join("snapshot_3.csv").exists());
    }
}
