//! C interface to rrp-core.
//!
//! Every function returns an [`RrpStatus`]. On failure the message is kept
//! per thread and can be copied out with [`rrp_last_error_message`].
//! Handles are created by `*_new` functions and released by the matching
//! `*_free`; passing a freed handle is undefined behaviour.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rrp_core::cli::{self, parse_config, RunMode};
use rrp_core::dynamics::{step_inertial, step_inertialess, Mode, StepConfig, TransientState};
use rrp_core::grid::{gap_function, Grid, ScalarField};
use rrp_core::physics::{Model, PhysicalParams};
use rrp_core::stability::{critical_speed, hurwitz_analysis, ModeConstants};
use rrp_core::stationary::{solve_stationary, StationaryConfig};
use rrp_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrpStatus {
    Ok = 0,
    NullPointer = 1,
    /// Invalid parameters or configuration.
    Config = 2,
    /// Solver failure, blow-up or non-convergence.
    Numerical = 3,
    /// Output buffer shorter than the field.
    BufferTooSmall = 4,
    /// A panic was caught at the boundary.
    Internal = 5,
}

/// Physical parameters, SI units; field names follow `PhysicalParams`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrpParams {
    pub rho_l: f64,
    pub mu_l: f64,
    pub rho_g: f64,
    pub mu_g: f64,
    pub kappa_s: f64,
    pub k_poly: f64,
    pub sigma: f64,
    pub p0: f64,
    pub p_bnd: f64,
    pub r0: f64,
    pub alpha0: f64,
    pub j_r: f64,
    pub b: f64,
    pub h0: f64,
    pub ecc: f64,
    pub omega: f64,
}

impl From<PhysicalParams> for RrpParams {
    fn from(p: PhysicalParams) -> Self {
        RrpParams {
            rho_l: p.rho_l,
            mu_l: p.mu_l,
            rho_g: p.rho_g,
            mu_g: p.mu_g,
            kappa_s: p.kappa_s,
            k_poly: p.k_poly,
            sigma: p.sigma,
            p0: p.p0,
            p_bnd: p.p_bnd,
            r0: p.r0,
            alpha0: p.alpha0,
            j_r: p.j_r,
            b: p.b,
            h0: p.h0,
            ecc: p.ecc,
            omega: p.omega,
        }
    }
}

impl From<RrpParams> for PhysicalParams {
    fn from(p: RrpParams) -> Self {
        PhysicalParams {
            rho_l: p.rho_l,
            mu_l: p.mu_l,
            rho_g: p.rho_g,
            mu_g: p.mu_g,
            kappa_s: p.kappa_s,
            k_poly: p.k_poly,
            sigma: p.sigma,
            p0: p.p0,
            p_bnd: p.p_bnd,
            r0: p.r0,
            alpha0: p.alpha0,
            j_r: p.j_r,
            b: p.b,
            h0: p.h0,
            ecc: p.ecc,
            omega: p.omega,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RrpDerived {
    pub r_bar: f64,
    pub r_crit: f64,
    /// R_crit / R0.
    pub rhat_crit: f64,
    pub p_cav: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    pub b5: f64,
    pub b_r: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
    pub d5: f64,
}

/// Closure functions at one radius.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RrpClosure {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
    pub f5: f64,
    pub alpha: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RrpHurwitz {
    pub q: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    pub deltas: [f64; 4],
    pub sign_changes: u32,
    pub u_crit_sq: f64,
}

/// Opaque model handle.
pub struct RrpModel {
    model: Model,
}

/// Opaque transient run on the journal grid, started from R = R0.
pub struct RrpTransient {
    model: Model,
    h: ScalarField,
    u: [f64; 2],
    cfg: StepConfig,
    state: TransientState,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> RrpStatus {
    set_error(e.to_string());
    if e.is_config() || matches!(e, Error::Domain { .. }) {
        RrpStatus::Config
    } else {
        RrpStatus::Numerical
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), RrpStatus>) -> RrpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RrpStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            RrpStatus::Internal
        }
    }
}

fn check<T>(r: rrp_core::Result<T>) -> Result<T, RrpStatus> {
    r.map_err(|e| status_of(&e))
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, RrpStatus> {
    p.as_ref().ok_or_else(|| {
        set_error("null pointer argument");
        RrpStatus::NullPointer
    })
}

unsafe fn deref_mut<'a, T>(p: *mut T) -> Result<&'a mut T, RrpStatus> {
    p.as_mut().ok_or_else(|| {
        set_error("null pointer argument");
        RrpStatus::NullPointer
    })
}

unsafe fn copy_field(f: &ScalarField, scale: f64, out: *mut f64, len: usize) -> Result<(), RrpStatus> {
    if out.is_null() {
        set_error("null output buffer");
        return Err(RrpStatus::NullPointer);
    }
    if len < f.values().len() {
        set_error(format!("buffer holds {len} values, field has {}", f.values().len()));
        return Err(RrpStatus::BufferTooSmall);
    }
    let dst = std::slice::from_raw_parts_mut(out, f.values().len());
    for (d, v) in dst.iter_mut().zip(f.values()) {
        *d = v * scale;
    }
    Ok(())
}

/// Copies the last error message of this thread, NUL-terminated and
/// truncated to `len` bytes. Returns the full message length.
#[no_mangle]
pub unsafe extern "C" fn rrp_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Journal-bearing reference values with R0 the equilibrium radius.
#[no_mangle]
pub unsafe extern "C" fn rrp_params_default(out: *mut RrpParams) -> RrpStatus {
    guard(|| {
        *deref_mut(out)? = PhysicalParams::reference().into();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rrp_model_new(params: *const RrpParams, out: *mut *mut RrpModel) -> RrpStatus {
    guard(|| {
        let p = *deref(params)?;
        let slot = deref_mut(out)?;
        *slot = ptr::null_mut();
        let model = check(Model::new(p.into()))?;
        *slot = Box::into_raw(Box::new(RrpModel { model }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rrp_model_free(model: *mut RrpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[no_mangle]
pub unsafe extern "C" fn rrp_model_derived(model: *const RrpModel, out: *mut RrpDerived) -> RrpStatus {
    guard(|| {
        let m = &deref(model)?.model;
        let d = &m.derived;
        *deref_mut(out)? = RrpDerived {
            r_bar: d.r_bar,
            r_crit: d.r_crit,
            rhat_crit: m.rhat_crit(),
            p_cav: d.p_cav,
            b1: d.b1,
            b2: d.b2,
            b3: d.b3,
            b4: d.b4,
            b5: d.b5,
            b_r: d.b_r,
            d1: d.d1,
            d2: d.d2,
            d3: d.d3,
            d4: d.d4,
            d5: d.d5,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rrp_model_closure(model: *const RrpModel, r: f64, out: *mut RrpClosure) -> RrpStatus {
    guard(|| {
        let a = &deref(model)?.model.aux;
        if !(r > 0.0 && r.is_finite()) {
            return Err(status_of(&Error::Domain { what: "R", value: r }));
        }
        *deref_mut(out)? = RrpClosure {
            f1: a.f1(r),
            f2: a.f2(r),
            f3: a.f3(r),
            f4: a.f4(r),
            f5: a.f5(r),
            alpha: a.alpha(r),
        };
        Ok(())
    })
}

/// Routh-Hurwitz data of mode (k1, k2) of a parallel film on l1 x l2.
#[no_mangle]
pub unsafe extern "C" fn rrp_hurwitz(
    model: *const RrpModel,
    l1: f64,
    l2: f64,
    u_norm: f64,
    k1: u32,
    k2: u32,
    out: *mut RrpHurwitz,
) -> RrpStatus {
    guard(|| {
        let c = ModeConstants::from_model(&deref(model)?.model);
        let r = check(hurwitz_analysis(&c, (l1, l2), u_norm, (k1, k2)))?;
        *deref_mut(out)? = RrpHurwitz {
            q: r.q,
            alpha0: r.alpha0,
            beta0: r.beta0,
            alpha1: r.alpha1,
            beta1: r.beta1,
            alpha2: r.alpha2,
            deltas: r.deltas,
            sign_changes: r.sign_changes as u32,
            u_crit_sq: r.u_crit_sq,
        };
        Ok(())
    })
}

/// Smallest critical speed over modes 1..=kmax and the mode attaining it.
#[no_mangle]
pub unsafe extern "C" fn rrp_critical_speed(
    model: *const RrpModel,
    l1: f64,
    l2: f64,
    kmax: u32,
    u_crit: *mut f64,
    k1: *mut u32,
    k2: *mut u32,
) -> RrpStatus {
    guard(|| {
        let c = ModeConstants::from_model(&deref(model)?.model);
        let crit = check(critical_speed(&c, (l1, l2), kmax))?;
        *deref_mut(u_crit)? = crit.u_crit;
        *deref_mut(k1)? = crit.k.0;
        *deref_mut(k2)? = crit.k.1;
        Ok(())
    })
}

/// Stationary state on the n1 x n2 journal grid at the surface speed
/// omega J_r. Writes R / R0 and the scaled pressure, row-major.
#[no_mangle]
pub unsafe extern "C" fn rrp_stationary_solve(
    model: *const RrpModel,
    n1: usize,
    n2: usize,
    r_hat: *mut f64,
    p: *mut f64,
    len: usize,
) -> RrpStatus {
    guard(|| {
        let m = &deref(model)?.model;
        let g = check(Grid::journal(&m.params, n1, n2))?;
        let h = check(gap_function(&g, &m.params))?;
        let sol = check(solve_stationary(m, &h, m.params.surface_velocity(), &StationaryConfig::default()))?;
        copy_field(&sol.r, 1.0 / m.params.r0, r_hat, len)?;
        copy_field(&sol.p, 1.0, p, len)
    })
}

/// Starts a backward Euler run from R = R0 at rest.
#[no_mangle]
pub unsafe extern "C" fn rrp_transient_new(
    model: *const RrpModel,
    n1: usize,
    n2: usize,
    dt: f64,
    inertial: bool,
    out: *mut *mut RrpTransient,
) -> RrpStatus {
    guard(|| {
        let m = deref(model)?.model;
        let slot = deref_mut(out)?;
        *slot = ptr::null_mut();
        let g = check(Grid::journal(&m.params, n1, n2))?;
        let h = check(gap_function(&g, &m.params))?;
        let mode = if inertial { Mode::Inertial } else { Mode::Inertialess };
        let cfg = StepConfig {
            dt,
            mode,
            ..StepConfig::default()
        };
        check(cfg.validate())?;
        let state = TransientState::uniform(&ScalarField::constant(g, m.params.r0), mode);
        let u = m.params.surface_velocity();
        *slot = Box::into_raw(Box::new(RrpTransient { model: m, h, u, cfg, state }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rrp_transient_free(run: *mut RrpTransient) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Advances `n_steps` steps. `rate` receives max|dR| / (dt R0) of the last
/// step. On failure the run keeps its last accepted state.
#[no_mangle]
pub unsafe extern "C" fn rrp_transient_advance(run: *mut RrpTransient, n_steps: usize, rate: *mut f64) -> RrpStatus {
    guard(|| {
        let s = deref_mut(run)?;
        let mut last = 0.0;
        for _ in 0..n_steps {
            let stepped = match s.cfg.mode {
                Mode::Inertialess => step_inertialess(&s.model, &s.state, &s.h, s.u, &s.cfg),
                Mode::Inertial => step_inertial(&s.model, &s.state, &s.h, s.u, &s.cfg),
            };
            let (next, _) = check(stepped)?;
            last = next
                .r
                .values()
                .iter()
                .zip(s.state.r.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                / (s.cfg.dt * s.model.params.r0);
            s.state = next;
        }
        if !rate.is_null() {
            *rate = last;
        }
        Ok(())
    })
}

/// Number of cells, the length of every field buffer.
#[no_mangle]
pub unsafe extern "C" fn rrp_transient_cells(run: *const RrpTransient, cells: *mut usize) -> RrpStatus {
    guard(|| {
        *deref_mut(cells)? = deref(run)?.h.values().len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rrp_transient_time(run: *const RrpTransient, t: *mut f64) -> RrpStatus {
    guard(|| {
        *deref_mut(t)? = deref(run)?.state.t;
        Ok(())
    })
}

/// Copies R / R0 and the scaled pressure of the current state, row-major.
#[no_mangle]
pub unsafe extern "C" fn rrp_transient_fields(
    run: *const RrpTransient,
    r_hat: *mut f64,
    p: *mut f64,
    len: usize,
) -> RrpStatus {
    guard(|| {
        let s = deref(run)?;
        copy_field(&s.state.r, 1.0 / s.model.params.r0, r_hat, len)?;
        copy_field(&s.state.p, 1.0, p, len)
    })
}

/// Parses a configuration and runs the given command: "transient",
/// "stationary", "stability" or "sweep". Files go to `output_dir` of the
/// configuration.
#[no_mangle]
pub unsafe extern "C" fn rrp_run_config(config: *const c_char, command: *const c_char) -> RrpStatus {
    guard(|| {
        let text = CStr::from_ptr(deref(config)?).to_str().map_err(|_| {
            set_error("configuration is not valid UTF-8");
            RrpStatus::Config
        })?;
        let command = CStr::from_ptr(deref(command)?).to_string_lossy();
        let mut cfg = check(parse_config(text))?;
        cfg.mode = match command.as_ref() {
            "transient" => RunMode::Transient,
            "stationary" => RunMode::Stationary,
            "stability" => RunMode::Stability,
            "sweep" => RunMode::Sweep,
            other => {
                set_error(format!("unknown command `{other}`"));
                return Err(RrpStatus::Config);
            }
        };
        check(cfg.validate())?;
        let outcome = check(cli::run(&cfg))?;
        if outcome.exit_code != 0 {
            set_error(outcome.message);
            return Err(RrpStatus::Numerical);
        }
        Ok(())
    })
}
