//! Command-line front end: configuration, the run commands and their files.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use crate::dynamics::{run_transient_lenient, Mode, StepRecord, TransientState, TransientSummary, Watch};
use crate::error::{Error, Result};
use crate::grid::{fields_csv, fmt9, gap_function, BoundaryX1, Grid, ScalarField};
use crate::physics::{Model, PhysicalParams};
use crate::stability::{
    assemble_lg, compute_spectrum, critical_speed, hurwitz_analysis, lf_spectrum, separable_lf, separable_lg,
    Linearization, ModeConstants, OperatorTag, SpectrumReport,
};
use crate::stationary::{solve_stationary, StationarySolution};

pub use config::{parse_config, RunConfig, RunMode, StabilityDomain, SweepAxis, SweepSolver};

/// Column layout of every file the commands can write.
const FILE_SCHEMAS: [(&str, &str); 13] = [
    ("config.toml", "the full configuration of the run, every key explicit"),
    ("snapshot_<step>.csv", "x1,x2,R_hat,p_scaled,p_gauge_Pa,alpha"),
    ("final.csv", "x1,x2,R_hat,p_scaled,p_gauge_Pa,alpha"),
    ("stationary.csv", "x1,x2,R_hat,p_scaled,p_gauge_Pa,alpha"),
    ("midline.csv", "x1,R_hat,p_scaled,p_gauge_Pa,alpha"),
    (
        "history.csv",
        "step,t,rate,min_Rhat,max_Rhat,min_p_scaled,max_p_scaled,picard_iterations,halvings",
    ),
    ("continuation.csv", "speed,newton_iterations,residual"),
    ("summary.txt", "key value lines"),
    ("spectrum_LG.csv", "re,im"),
    ("spectrum_LF.csv", "re,im"),
    ("hurwitz.txt", "key value lines: mode, coefficients, determinants, sign changes, critical speed"),
    ("sweep.csv", "value,converged,max_Rhat,min_phat,max_alpha"),
    ("point_<index>/", "outputs of one sweep point; error.txt when the point failed"),
];

/// Result of a command that ran to completion.
#[derive(Debug, Clone)]
pub struct CommandOutcome {
    /// 0 when the run succeeded, 3 when it produced output but failed
    /// numerically.
    pub exit_code: i32,
    pub files: Vec<String>,
    pub message: String,
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Lists the files written so far with their layouts, then itself.
    fn finish(mut self, exit_code: i32, message: String) -> Result<CommandOutcome> {
        let mut text = String::from("file\tcolumns\n");
        let mut listed = self.files.clone();
        listed.push("MANIFEST".into());
        for f in &listed {
            let _ = writeln!(text, "{f}\t{}", schema_of(f));
        }
        self.write("MANIFEST", &text)?;
        Ok(CommandOutcome {
            exit_code,
            files: self.files,
            message,
        })
    }
}

fn schema_of(file: &str) -> &'static str {
    if file == "MANIFEST" {
        return "file<TAB>columns, one line per file in this directory";
    }
    if file.starts_with("snapshot_") {
        return FILE_SCHEMAS[1].1;
    }
    if file.starts_with("point_") {
        return FILE_SCHEMAS[12].1;
    }
    FILE_SCHEMAS
        .iter()
        .find(|(f, _)| *f == file)
        .map(|(_, s)| *s)
        .unwrap_or("")
}

/// Fields sampled along x2 = L2 / 2.
pub fn midline_csv(r: &ScalarField, p: &ScalarField, params: &PhysicalParams) -> String {
    let g = r.grid();
    let (rm, pm) = (r.midline(), p.midline());
    let aux = crate::physics::AuxFunctions::new(params);
    let mut s = String::from("x1,R_hat,p_scaled,p_gauge_Pa,alpha\n");
    for i in 0..g.n1 {
        let x1 = (i as f64 + 0.5) * g.dx1;
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt9(x1),
            fmt9(rm[i] / params.r0),
            fmt9(pm[i]),
            fmt9(pm[i] * params.rho_l),
            fmt9(aux.alpha(rm[i]))
        );
    }
    s
}

fn history_csv(history: &[StepRecord]) -> String {
    let mut s = String::from(FILE_SCHEMAS[5].1);
    s.push('\n');
    for h in history {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            h.step,
            fmt9(h.t),
            fmt9(h.rate),
            fmt9(h.min_rhat),
            fmt9(h.max_rhat),
            fmt9(h.min_p),
            fmt9(h.max_p),
            h.picard_iterations,
            h.halvings
        );
    }
    s
}

/// Extremes used in sweep reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub converged: bool,
    pub max_rhat: f64,
    pub min_phat: f64,
    pub max_alpha: f64,
}

impl RunMetrics {
    const FAILED: RunMetrics = RunMetrics {
        converged: false,
        max_rhat: f64::NAN,
        min_phat: f64::NAN,
        max_alpha: f64::NAN,
    };

    /// Maximum radius and minimum pressure over the accepted steps.
    fn of_transient(model: &Model, s: &TransientSummary) -> Self {
        let max_rhat = s.history.iter().map(|h| h.max_rhat).fold(f64::NAN, f64::max);
        let min_phat = s.history.iter().map(|h| h.min_p).fold(f64::NAN, f64::min);
        RunMetrics {
            converged: s.converged && s.failure.is_none(),
            max_rhat,
            min_phat,
            max_alpha: model.aux.alpha(max_rhat * model.params.r0),
        }
    }

    fn of_stationary(model: &Model, s: &StationarySolution) -> Self {
        RunMetrics {
            converged: true,
            max_rhat: s.r.max() / model.params.r0,
            min_phat: s.p.min(),
            max_alpha: model.aux.alpha(s.r.max()),
        }
    }
}

fn journal_setup(cfg: &RunConfig) -> Result<(Model, Grid, ScalarField)> {
    let model = Model::new(cfg.params)?;
    let grid = Grid::journal(&cfg.params, cfg.grid.0, cfg.grid.1)?;
    let h = gap_function(&grid, &cfg.params)?;
    Ok((model, grid, h))
}

fn transient_into(cfg: &RunConfig, out: &mut Output) -> Result<(RunMetrics, Option<String>)> {
    let (model, grid, h) = journal_setup(cfg)?;
    let init = TransientState::uniform(&ScalarField::constant(grid, cfg.params.r0), cfg.step.mode);
    let watch = Watch {
        stationarity_tol: cfg.stationarity_tol,
        snapshot_every: (cfg.snapshot_every > 0).then_some(cfg.snapshot_every),
        snapshot_dir: (cfg.snapshot_every > 0).then(|| out.dir.clone()),
        stop_on_crit: cfg.stop_on_crit,
    };
    let s = run_transient_lenient(&model, &init, &h, cfg.velocity(), &cfg.step, cfg.steps, &watch)?;
    if cfg.snapshot_every > 0 {
        let mut names: Vec<usize> = (0..=s.steps).filter(|k| k % cfg.snapshot_every == 0).collect();
        if names.last() != Some(&s.steps) {
            names.push(s.steps);
        }
        out.files.extend(names.into_iter().map(|k| format!("snapshot_{k}.csv")));
    }
    let state = &s.final_state;
    out.write("final.csv", &fields_csv(&state.r, &state.p, &model.params))?;
    out.write("midline.csv", &midline_csv(&state.r, &state.p, &model.params))?;
    out.write("history.csv", &history_csv(&s.history))?;

    let metrics = RunMetrics::of_transient(&model, &s);
    let p_cav = model.derived.p_cav;
    let mid_min_p = state.p.midline().into_iter().fold(f64::INFINITY, f64::min);
    let mut text = String::new();
    let _ = writeln!(text, "converged {}", metrics.converged);
    let _ = writeln!(text, "steps {}", s.steps);
    let _ = writeln!(text, "t_end {:.9e}", state.t);
    let _ = writeln!(text, "final_rate {:.9e}", s.final_rate);
    let _ = writeln!(text, "stationarity_tol {:.9e}", cfg.stationarity_tol);
    let _ = writeln!(text, "final_max_Rhat {:.9}", state.r.max() / cfg.params.r0);
    let _ = writeln!(text, "final_min_Rhat {:.9}", state.r.min() / cfg.params.r0);
    let _ = writeln!(text, "final_min_p_scaled {:.9e}", state.p.min());
    let _ = writeln!(text, "final_max_p_scaled {:.9e}", state.p.max());
    let _ = writeln!(text, "midline_min_p_scaled {mid_min_p:.9e}");
    let _ = writeln!(text, "max_Rhat {:.9}", metrics.max_rhat);
    let _ = writeln!(text, "min_p_scaled {:.9e}", metrics.min_phat);
    let _ = writeln!(text, "Rhat_crit {:.9}", model.rhat_crit());
    let _ = writeln!(text, "p_cav {p_cav:.9e}");
    let _ = writeln!(text, "final_p_above_p_cav {}", state.p.min() >= p_cav);
    let _ = writeln!(text, "crossed_crit {}", s.crossed_crit);
    match s.first_undershoot {
        Some(k) => _ = writeln!(text, "first_undershoot_step {k}"),
        None => _ = writeln!(text, "first_undershoot_step none"),
    }
    let _ = writeln!(text, "failure {}", s.failure.as_deref().unwrap_or("none"));
    out.write("summary.txt", &text)?;
    Ok((metrics, s.failure))
}

fn stationary_into(cfg: &RunConfig, out: &mut Output) -> Result<RunMetrics> {
    let (model, _, h) = journal_setup(cfg)?;
    let sol = solve_stationary(&model, &h, cfg.velocity(), &cfg.stationary)?;
    out.write("stationary.csv", &fields_csv(&sol.r, &sol.p, &model.params))?;
    out.write("midline.csv", &midline_csv(&sol.r, &sol.p, &model.params))?;
    let mut cont = String::from("speed,newton_iterations,residual\n");
    for st in &sol.report.steps {
        let _ = writeln!(cont, "{},{},{}", fmt9(st.speed), st.iterations, fmt9(st.residual));
    }
    out.write("continuation.csv", &cont)?;
    let metrics = RunMetrics::of_stationary(&model, &sol);
    let mut text = String::new();
    let _ = writeln!(text, "converged true");
    let _ = writeln!(text, "continued {}", sol.report.continued);
    let _ = writeln!(text, "continuation_steps {}", sol.report.steps.len());
    let iters: usize = sol.report.steps.iter().map(|s| s.iterations).sum();
    let _ = writeln!(text, "newton_iterations {iters}");
    if let Some(last) = sol.report.steps.last() {
        let _ = writeln!(text, "final_residual {:.9e}", last.residual);
    }
    let _ = writeln!(text, "max_Rhat {:.9}", metrics.max_rhat);
    let _ = writeln!(text, "min_p_scaled {:.9e}", metrics.min_phat);
    let _ = writeln!(text, "max_alpha {:.9}", metrics.max_alpha);
    let _ = writeln!(text, "Rhat_crit {:.9}", model.rhat_crit());
    let _ = writeln!(text, "p_cav {:.9e}", model.derived.p_cav);
    out.write("summary.txt", &text)?;
    Ok(metrics)
}

/// Transient run from R = R0: snapshots, final fields, midline, history and
/// summary. A failed step still writes the files and exits with code 3.
pub fn cmd_transient(cfg: &RunConfig) -> Result<CommandOutcome> {
    let mut out = Output::new(&cfg.output_dir)?;
    out.write("config.toml", &cfg.render())?;
    let (m, failure) = transient_into(cfg, &mut out)?;
    let msg = match &failure {
        Some(f) => format!("transient failed: {f}"),
        None => format!("transient converged {}, max R/R0 = {:.6}", m.converged, m.max_rhat),
    };
    out.finish(if failure.is_some() { 3 } else { 0 }, msg)
}

pub fn cmd_stationary(cfg: &RunConfig) -> Result<CommandOutcome> {
    let mut out = Output::new(&cfg.output_dir)?;
    out.write("config.toml", &cfg.render())?;
    match stationary_into(cfg, &mut out) {
        Ok(m) => out.finish(0, format!("stationary solution, max R/R0 = {:.6}", m.max_rhat)),
        Err(e) if !e.is_config() => {
            out.write("summary.txt", &format!("converged false\nfailure {e}\n"))?;
            out.finish(3, String::new())?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}

/// True when the state and the gap do not vary along x2.
fn uniform_in_x2(r: &ScalarField, h: &ScalarField) -> bool {
    let g = r.grid();
    (0..g.n1).all(|i| {
        (1..g.n2).all(|j| {
            r.values()[j * g.n1 + i] == r.values()[i] && h.values()[j * g.n1 + i] == h.values()[i]
        })
    })
}

/// Stationary branch, spectra of L_G (and L_F for inertial dynamics), and
/// the Routh-Hurwitz report of the critical mode.
pub fn cmd_stability(cfg: &RunConfig) -> Result<CommandOutcome> {
    let mut out = Output::new(&cfg.output_dir)?;
    out.write("config.toml", &cfg.render())?;
    let model = Model::new(cfg.params)?;
    let (grid, h) = match cfg.stability.domain {
        StabilityDomain::Journal => {
            let g = Grid::journal(&cfg.params, cfg.grid.0, cfg.grid.1)?;
            (g, gap_function(&g, &cfg.params)?)
        }
        StabilityDomain::UnitSquare => {
            if cfg.params.ecc != 0.0 {
                warn!("the unit-square problem uses the constant gap h0; ecc = {} ignored", cfg.params.ecc);
            }
            let g = Grid::new(cfg.grid.0, cfg.grid.1, 1.0, 1.0, BoundaryX1::Dirichlet)?;
            (g, ScalarField::constant(g, cfg.params.h0))
        }
    };
    let u = cfg.velocity();
    let sol = solve_stationary(&model, &h, u, &cfg.stationary)?;
    let lin = Linearization::new(&model, &sol.r, &h, u)?;
    let margin = cfg.stability.margin;
    let separable = u[1] == 0.0 && uniform_in_x2(&sol.r, &h);
    info!("stationary branch found; {} spectra", if separable { "mode-wise" } else { "dense" });

    let mut reports: Vec<SpectrumReport> = Vec::new();
    reports.push(if separable {
        separable_lg(&lin, margin)?.report
    } else {
        compute_spectrum(&assemble_lg(&lin)?, OperatorTag::LG, (grid.n1, grid.n2), margin)?
    });
    if cfg.step.mode == Mode::Inertial {
        reports.push(if separable {
            separable_lf(&lin, margin)?.report
        } else {
            lf_spectrum(&lin, margin)?
        });
    }
    for rep in &reports {
        out.write(&format!("spectrum_{}.csv", rep.operator.name().replace('_', "")), &rep.to_csv())?;
    }

    let consts = ModeConstants::from_model(&model);
    let domain = (grid.l1, grid.l2);
    let u_norm = (u[0] * u[0] + u[1] * u[1]).sqrt();
    let crit = critical_speed(&consts, domain, cfg.stability.kmax)?;
    let hw = hurwitz_analysis(&consts, domain, u_norm, crit.k)?;
    let mut text = format!(
        "parallel film on {:.9e} x {:.9e}, modes up to {}\ncritical_mode {} {}\ncritical_speed {:.17e}\n",
        domain.0, domain.1, cfg.stability.kmax, crit.k.0, crit.k.1, crit.u_crit
    );
    text.push_str(&hw.to_text());
    out.write("hurwitz.txt", &text)?;

    let mut summary = String::new();
    let _ = writeln!(summary, "speed {u_norm:.9e}");
    let _ = writeln!(summary, "critical_speed {:.9e}", crit.u_crit);
    let _ = writeln!(summary, "stationary_max_Rhat {:.9}", sol.r.max() / cfg.params.r0);
    for rep in &reports {
        let _ = writeln!(summary, "{}", rep.summary());
    }
    out.write("summary.txt", &summary)?;
    let msg = reports.iter().map(|r| r.summary()).collect::<Vec<_>>().join("\n");
    out.finish(0, msg)
}

fn fmt_metric(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        fmt9(v)
    }
}

/// One solve per sweep value, each in `point_<index>`, run on up to
/// `workers` threads. Failed points are reported in sweep.csv and do not
/// stop the sweep.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<CommandOutcome> {
    if cfg.sweep_axis == SweepAxis::None || cfg.sweep_values.is_empty() {
        return Err(Error::Key {
            key: "sweep_values".into(),
            msg: "a sweep needs an axis and at least one value".into(),
        });
    }
    let mut out = Output::new(&cfg.output_dir)?;
    out.write("config.toml", &cfg.render())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let run_point = |idx: usize, value: f64| -> RunMetrics {
        let dir = cfg.output_dir.join(format!("point_{idx}"));
        let result = (|| -> Result<RunMetrics> {
            let mut pc = cfg.point(value)?;
            pc.output_dir = dir.clone();
            let mut po = Output::new(&dir)?;
            po.write("config.toml", &pc.render())?;
            let m = match cfg.sweep_solver {
                SweepSolver::Transient => transient_into(&pc, &mut po)?.0,
                SweepSolver::Stationary => stationary_into(&pc, &mut po)?,
            };
            po.finish(0, String::new())?;
            Ok(m)
        })();
        match result {
            Ok(m) => {
                info!("sweep value {value}: converged {}", m.converged);
                m
            }
            Err(e) => {
                warn!("sweep value {value} failed: {e}");
                let _ = std::fs::create_dir_all(&dir);
                let _ = std::fs::write(dir.join("error.txt"), format!("{e}\n"));
                RunMetrics::FAILED
            }
        }
    };
    let metrics: Vec<RunMetrics> = pool.install(|| {
        cfg.sweep_values
            .par_iter()
            .enumerate()
            .map(|(i, v)| run_point(i, *v))
            .collect()
    });
    let mut csv = String::from("value,converged,max_Rhat,min_phat,max_alpha\n");
    for (v, m) in cfg.sweep_values.iter().zip(&metrics) {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            fmt9(*v),
            m.converged,
            fmt_metric(m.max_rhat),
            fmt_metric(m.min_phat),
            fmt_metric(m.max_alpha)
        );
    }
    out.write("sweep.csv", &csv)?;
    for i in 0..cfg.sweep_values.len() {
        out.files.push(format!("point_{i}/"));
    }
    let n_conv = metrics.iter().filter(|m| m.converged).count();
    out.finish(0, format!("sweep: {n_conv} of {} points converged", metrics.len()))
}

/// Runs the command selected by `cfg.mode`.
pub fn run(cfg: &RunConfig) -> Result<CommandOutcome> {
    match cfg.mode {
        RunMode::Transient => cmd_transient(cfg),
        RunMode::Stationary => cmd_stationary(cfg),
        RunMode::Stability => cmd_stability(cfg),
        RunMode::Sweep => cmd_sweep(cfg),
    }
}
