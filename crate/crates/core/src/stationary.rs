//! Stationary states. At rest dR/dt = 0 forces p = f1(R) pointwise, which
//! leaves the nonlinear elliptic problem K(R) f1(R) = div(U h f4(R)) for R.

use crate::elliptic::{assemble_couette_rhs, assemble_diffusion, flux_jacobian};
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::linalg::{BandedLu, FivePoint};
use crate::physics::Model;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryConfig {
    /// Tolerance on max|F| relative to the Couette forcing scale.
    pub newton_tol: f64,
    pub newton_max: usize,
    /// Number of equal speed increments used when a direct solve fails.
    pub continuation_steps: usize,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        StationaryConfig {
            newton_tol: 1e-10,
            newton_max: 50,
            continuation_steps: 8,
        }
    }
}

impl StationaryConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::Key { key: key.into(), msg });
        if !(self.newton_tol > 0.0 && self.newton_tol.is_finite()) {
            return bad("newton_tol", format!("{} must be positive", self.newton_tol));
        }
        if self.newton_max < 1 {
            return bad("newton_max", "must be at least 1".into());
        }
        if self.continuation_steps < 1 {
            return bad("continuation_steps", "must be at least 1".into());
        }
        Ok(())
    }
}

/// (R, p) = (R_bar, 0), a solution whenever U = 0 or the film is parallel.
pub fn trivial_solution(model: &Model, grid: Grid) -> (ScalarField, ScalarField) {
    (ScalarField::constant(grid, model.derived.r_bar), ScalarField::zeros(grid))
}

/// F(R) = K(R) f1(R) - div(U h f4(R)).
pub fn stationary_residual(model: &Model, r: &ScalarField, h: &ScalarField, u: [f64; 2]) -> Result<Vec<f64>> {
    let op = assemble_diffusion(model, r, h)?;
    let div = assemble_couette_rhs(model, r, h, u)?;
    let p: Vec<f64> = r.values().iter().map(|&v| model.aux.f1(v)).collect();
    let mut f = vec![0.0; p.len()];
    op.apply(&p, &mut f);
    f.iter_mut().zip(div.values()).for_each(|(a, b)| *a -= b);
    Ok(f)
}

/// Size of the Couette forcing, used to make residuals relative.
fn forcing_scale(model: &Model, h: &ScalarField, u: [f64; 2]) -> f64 {
    let g = h.grid();
    let speed = u[0].abs() / g.dx1 + u[1].abs() / g.dx2;
    speed * h.max() * model.aux.f4(model.derived.r_bar) + f64::MIN_POSITIVE
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationStep {
    /// Surface speed |U| solved for at this step.
    pub speed: f64,
    pub iterations: usize,
    /// Final max|F| relative to the forcing scale.
    pub residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct StationaryReport {
    pub steps: Vec<ContinuationStep>,
    /// Relative residual after every Newton iterate, across all steps.
    pub residual_history: Vec<f64>,
    /// Whether the direct solve failed and the speed ramp was used.
    pub continued: bool,
}

#[derive(Debug, Clone)]
pub struct StationarySolution {
    pub r: ScalarField,
    /// p = f1(R).
    pub p: ScalarField,
    pub report: StationaryReport,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Exact Jacobian K(R) diag(f1'(R)) + d/dR[K(R) p - div(U h f4(R))] at p = f1(R).
pub fn stationary_jacobian(model: &Model, r: &ScalarField, h: &ScalarField, u: [f64; 2]) -> Result<FivePoint> {
    let aux = &model.aux;
    let p: Vec<f64> = r.values().iter().map(|&v| aux.f1(v)).collect();
    let slope: Vec<f64> = r.values().iter().map(|&v| aux.f1_prime(v)).collect();
    let mut jac = flux_jacobian(model, r, h, u, &p)?;
    let mut neg_k = assemble_diffusion(model, r, h)?.to_five_point(None);
    neg_k.scale_columns(&slope);
    jac.add(&neg_k, -1.0);
    Ok(jac)
}

/// Damped Newton from `r`; returns the iteration count.
fn newton(
    model: &Model,
    r: &mut ScalarField,
    h: &ScalarField,
    u: [f64; 2],
    cfg: &StationaryConfig,
    history: &mut Vec<f64>,
) -> Result<(usize, f64)> {
    let grid = *r.grid();
    let scale = forcing_scale(model, h, u);
    let r_crit = model.derived.r_crit;
    let mut f = stationary_residual(model, r, h, u)?;
    let mut rel = norm_inf(&f) / scale;
    history.push(rel);
    let mut step = vec![0.0; grid.len()];
    for it in 0..cfg.newton_max {
        if rel <= cfg.newton_tol {
            return Ok((it, rel));
        }
        let lu = BandedLu::factor(&stationary_jacobian(model, r, h, u)?)?;
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        lu.solve(&rhs, &mut step);
        let base = norm2(&f);
        let mut lambda = 1.0;
        let mut accepted = None;
        let mut beyond = None;
        for _ in 0..=20 {
            let trial: Vec<f64> = r.values().iter().zip(&step).map(|(a, b)| a + lambda * b).collect();
            let top = trial.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if top >= r_crit {
                beyond = Some(top);
            } else if trial.iter().all(|&v| v > 0.0) {
                let tf = ScalarField::new(grid, trial)?;
                let ft = stationary_residual(model, &tf, h, u)?;
                if norm2(&ft) <= (1.0 - 1e-4 * lambda) * base {
                    accepted = Some((tf, ft));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((tf, ft)) => {
                *r = tf;
                f = ft;
                rel = norm_inf(&f) / scale;
                history.push(rel);
            }
            None => {
                return Err(match beyond {
                    Some(top) => Error::BeyondH1 {
                        max_rhat: top / model.params.r0,
                        rhat_crit: model.rhat_crit(),
                    },
                    None => Error::NoConvergence {
                        solver: "Newton line search",
                        iterations: it + 1,
                        residual: rel,
                    },
                });
            }
        }
    }
    if rel <= cfg.newton_tol {
        return Ok((cfg.newton_max, rel));
    }
    Err(Error::NoConvergence {
        solver: "Newton",
        iterations: cfg.newton_max,
        residual: rel,
    })
}

/// Newton solve from the trivial state; on failure the surface speed is
/// ramped up from zero in `continuation_steps` increments.
pub fn solve_stationary(
    model: &Model,
    h: &ScalarField,
    u: [f64; 2],
    cfg: &StationaryConfig,
) -> Result<StationarySolution> {
    cfg.validate()?;
    let grid = *h.grid();
    let speed = (u[0] * u[0] + u[1] * u[1]).sqrt();
    let mut report = StationaryReport::default();
    let (r_bar, _) = trivial_solution(model, grid);

    let mut r = r_bar.clone();
    let direct = newton(model, &mut r, h, u, cfg, &mut report.residual_history);
    match direct {
        Ok((iterations, residual)) => report.steps.push(ContinuationStep {
            speed,
            iterations,
            residual,
        }),
        Err(Error::BeyondH1 { .. } | Error::NoConvergence { .. }) => {
            log::info!("direct Newton solve failed, ramping the surface speed");
            report.continued = true;
            r = r_bar;
            let n = cfg.continuation_steps;
            for k in 1..=n {
                let t = k as f64 / n as f64;
                let ut = [t * u[0], t * u[1]];
                let (iterations, residual) = newton(model, &mut r, h, ut, cfg, &mut report.residual_history)?;
                report.steps.push(ContinuationStep {
                    speed: t * speed,
                    iterations,
                    residual,
                });
            }
        }
        Err(e) => return Err(e),
    }
    let p = r.map(|v| model.aux.f1(v));
    Ok(StationarySolution { r, p, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::gap_function;
    use crate::physics::PhysicalParams;

    fn journal(ecc: f64, n1: usize, n2: usize) -> (Model, ScalarField) {
        let m = Model::new(PhysicalParams {
            ecc,
            ..PhysicalParams::reference()
        })
        .unwrap();
        let g = Grid::journal(&m.params, n1, n2).unwrap();
        let h = gap_function(&g, &m.params).unwrap();
        (m, h)
    }

    #[test]
    fn trivial_pair_has_zero_residual() {
        let (m, h) = journal(0.0, 16, 8);
        let (r, p) = trivial_solution(&m, *h.grid());
        assert!(p.values().iter().all(|&v| v == 0.0));
        assert!(r.values().iter().all(|&v| v == m.derived.r_bar));
        let f = stationary_residual(&m, &r, &h, m.params.surface_velocity()).unwrap();
        let scale = forcing_scale(&m, &h, m.params.surface_velocity());
        assert!(norm_inf(&f) / scale < 1e-12);
        for &v in r.values() {
            assert!(m.aux.f1(v).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_speed_returns_trivial_solution_immediately() {
        let (m, h) = journal(0.4, 16, 8);
        let sol = solve_stationary(&m, &h, [0.0, 0.0], &StationaryConfig::default()).unwrap();
        assert_eq!(sol.report.steps[0].iterations, 0);
        assert!(sol.r.values().iter().all(|&v| v == m.derived.r_bar));
    }

    #[test]
    fn newton_converges_and_satisfies_both_equations() {
        let (m, h) = journal(0.3, 32, 8);
        let u = m.params.surface_velocity();
        let cfg = StationaryConfig::default();
        let sol = solve_stationary(&m, &h, u, &cfg).unwrap();
        assert!(!sol.report.continued);
        let f = stationary_residual(&m, &sol.r, &h, u).unwrap();
        assert!(norm_inf(&f) / forcing_scale(&m, &h, u) <= cfg.newton_tol);
        for (r, p) in sol.r.values().iter().zip(sol.p.values()) {
            assert_eq!(*p, m.aux.f1(*r));
        }
        assert!(sol.r.max() > m.derived.r_bar && sol.r.min() < m.derived.r_bar);
        // quadratic convergence at the end
        let hist = &sol.report.residual_history;
        let n = hist.len();
        assert!(n >= 3 && hist[n - 1] < hist[n - 2] * hist[n - 2].sqrt());
    }

    #[test]
    fn max_radius_grows_with_eccentricity() {
        let mut last = 0.0;
        for ecc in [0.1, 0.2, 0.3] {
            let (m, h) = journal(ecc, 32, 8);
            let sol = solve_stationary(&m, &h, m.params.surface_velocity(), &StationaryConfig::default()).unwrap();
            let top = sol.r.max();
            assert!(top > last);
            last = top;
        }
    }

    #[test]
    fn refuses_to_cross_critical_radius() {
        let (m, h) = journal(0.6, 32, 8);
        let err = solve_stationary(&m, &h, m.params.surface_velocity(), &StationaryConfig::default()).unwrap_err();
        assert!(matches!(err, Error::BeyondH1 { .. }), "{err}");
    }

    #[test]
    fn continuation_reaches_the_direct_solution() {
        let (m, h) = journal(0.2, 32, 8);
        let u = m.params.surface_velocity();
        let cfg = StationaryConfig::default();
        let direct = solve_stationary(&m, &h, u, &cfg).unwrap();
        let mut r = trivial_solution(&m, *h.grid()).0;
        let mut hist = Vec::new();
        for k in 1..=4 {
            let t = k as f64 / 4.0;
            newton(&m, &mut r, &h, [t * u[0], t * u[1]], &cfg, &mut hist).unwrap();
        }
        for (a, b) in r.values().iter().zip(direct.r.values()) {
            assert!((a - b).abs() < 1e-10 * m.params.r0);
        }
    }

    #[test]
    fn config_validation() {
        assert!(StationaryConfig::default().validate().is_ok());
        let bad = StationaryConfig {
            continuation_steps: 0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Key { key, .. }) if key == "continuation_steps"));
    }
}
