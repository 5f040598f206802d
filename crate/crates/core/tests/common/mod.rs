//! Checks shared by the acceptance run and the property tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rrp_core::dynamics::{run_transient, Mode, StepConfig, TransientState, Watch};
use rrp_core::elliptic::{apply_a2, EllipticOperator, LinearSolveConfig};
use rrp_core::grid::{gap_function, Grid, ScalarField};
use rrp_core::physics::{Model, PhysicalParams};

pub const ATM: f64 = 101325.0;

pub fn reference(ecc: f64) -> Model {
    Model::new(PhysicalParams {
        ecc,
        ..PhysicalParams::reference()
    })
    .unwrap()
}

/// Reference values with P0 = 1 atm, so that R0 is not the equilibrium radius.
pub fn literal_p0(ecc: f64, alpha0: f64) -> Model {
    Model::new(PhysicalParams {
        ecc,
        alpha0,
        p0: ATM,
        ..PhysicalParams::reference()
    })
    .unwrap()
}

/// Equilibrium radius from a bisection on f1 written out independently of
/// the library, with R_crit from the closed form of f1' = 0.
pub fn oracle_r_bar(p: &PhysicalParams) -> f64 {
    let k3 = 3.0 * p.k_poly;
    let f1 = |r: f64| p.p0 * (p.r0 / r).powf(k3) - p.p_bnd - 2.0 * p.sigma / r;
    let r_crit = (k3 * p.p0 * p.r0.powf(k3) / (2.0 * p.sigma)).powf(1.0 / (k3 - 1.0));
    let (mut lo, mut hi) = (1e-3 * p.r0, r_crit);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f1(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Smallest normalized value of sum (-f5) h A2(R, w) w over random draws.
/// The sum is -A2 . K A2 and cannot be negative.
pub fn monotonicity_min(seed: u64, draws: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..draws {
        let m = reference(rng.gen_range(0.0..0.8));
        let g = Grid::journal(&m.params, 16, 8).unwrap();
        let h = gap_function(&g, &m.params).unwrap();
        let r0 = m.params.r0;
        let r: Vec<f64> = (0..g.len()).map(|_| r0 * rng.gen_range(0.3..1.7)).collect();
        let w: Vec<f64> = (0..g.len()).map(|_| r0 * rng.gen_range(-1.0..1.0)).collect();
        let r = ScalarField::new(g, r).unwrap();
        let w = ScalarField::new(g, w).unwrap();
        let (a2, _) = apply_a2(&m, &r, &h, &w, &LinearSolveConfig::default()).unwrap();
        let mut sum = 0.0;
        let mut scale = 0.0;
        for c in 0..g.len() {
            let t = -m.aux.f5(r.values()[c]) * h.values()[c] * a2.values()[c] * w.values()[c];
            sum += g.cell_area() * t;
            scale += g.cell_area() * t.abs();
        }
        worst = worst.min(sum / scale);
    }
    worst
}

/// Largest mismatch between analytic derivatives and central differences,
/// measured against |f'| + |f| / R.
pub fn derivative_mismatch(seed: u64, draws: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for m in [reference(0.0), literal_p0(0.0, 0.1)] {
        let a = &m.aux;
        let r_crit = m.derived.r_crit;
        let pairs: [(&dyn Fn(f64) -> f64, &dyn Fn(f64) -> f64); 6] = [
            (&|r| a.f1(r), &|r| a.f1_prime(r)),
            (&|r| a.f2(r), &|r| a.f2_prime(r)),
            (&|r| a.alpha(r), &|r| a.alpha_prime(r)),
            (&|r| a.f3(r), &|r| a.f3_prime(r)),
            (&|r| a.f4(r), &|r| a.f4_prime(r)),
            (&|r| a.f4(r), &|r| a.f5(r)),
        ];
        for _ in 0..draws {
            let r = rng.gen_range(0.05..2.0) * r_crit;
            let dr = 1e-5 * r;
            for (f, df) in pairs.iter() {
                let fd = (f(r + dr) - f(r - dr)) / (2.0 * dr);
                let exact = df(r);
                let scale = exact.abs() + f(r).abs() / r;
                worst = worst.max((fd - exact).abs() / scale);
            }
        }
    }
    worst
}

/// L2 errors of the unit-mobility discrete Laplacian on
/// p = sin(x1 / J_r) sin(pi x2 / B) for the given resolutions, and the
/// observed orders between successive grids.
pub fn manufactured_orders(sizes: &[(usize, usize)]) -> (Vec<f64>, Vec<f64>) {
    let p = PhysicalParams::reference();
    let pi = std::f64::consts::PI;
    let mut errors = Vec::new();
    for &(n1, n2) in sizes {
        let g = Grid::journal(&p, n1, n2).unwrap();
        let exact = |x: f64, y: f64| (x / p.j_r).sin() * (pi * y / p.b).sin();
        let lap = -(1.0 / (p.j_r * p.j_r) + pi * pi / (p.b * p.b));
        let op = EllipticOperator::from_mobility(g, vec![1.0; g.len()]);
        let u = ScalarField::from_fn(g, exact);
        let mut ku = vec![0.0; g.len()];
        op.apply(u.values(), &mut ku);
        let err: f64 = (0..g.len())
            .map(|c| {
                let (x, y) = g.center(c);
                (ku[c] - lap * exact(x, y)).powi(2) * g.cell_area()
            })
            .sum::<f64>()
            .sqrt();
        errors.push(err);
    }
    let orders = errors
        .windows(2)
        .zip(sizes.windows(2))
        .map(|(e, s)| (e[0] / e[1]).ln() / (s[1].0 as f64 / s[0].0 as f64).ln())
        .collect();
    (errors, orders)
}

/// RK4 for dR/dt = f1(R) / (R f2(R)).
pub fn rk4_scalar(m: &Model, r0: f64, t_end: f64, n: usize) -> f64 {
    let g = |r: f64| m.aux.f1(r) / (r * m.aux.f2(r));
    let h = t_end / n as f64;
    let mut r = r0;
    for _ in 0..n {
        let k1 = g(r);
        let k2 = g(r + 0.5 * h * k1);
        let k3 = g(r + 0.5 * h * k2);
        let k4 = g(r + h * k3);
        r += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    r
}

pub struct ScalarReduction {
    /// max |R - R_ode| / R_ode after the last step.
    pub error: f64,
    /// Largest spatial spread max R - min R over all steps, relative to R0.
    pub spread: f64,
    /// |R_end - R_start| / R0, to show the run is not trivial.
    pub travel: f64,
}

/// Uniform start R0 on a parallel film at rest with alpha0 = 0, integrated
/// by backward Euler and compared with RK4 at dt / 100.
pub fn scalar_reduction(dt: f64, steps: usize) -> ScalarReduction {
    let m = literal_p0(0.0, 0.0);
    let g = Grid::journal(&m.params, 32, 8).unwrap();
    let h = gap_function(&g, &m.params).unwrap();
    let cfg = StepConfig {
        dt,
        picard_tol: 1e-13,
        ..StepConfig::default()
    };
    let watch = Watch {
        stationarity_tol: 0.0,
        ..Watch::default()
    };
    let r0 = m.params.r0;
    let init = TransientState::uniform(&ScalarField::constant(g, r0), Mode::Inertialess);
    let sum = run_transient(&m, &init, &h, [0.0, 0.0], &cfg, steps, &watch).unwrap();
    assert_eq!(sum.steps, steps);
    let spread = sum
        .history
        .iter()
        .map(|s| s.max_rhat - s.min_rhat)
        .fold(0.0, f64::max);
    let r_end = &sum.final_state.r;
    let ode = rk4_scalar(&m, r0, steps as f64 * dt, 100 * steps);
    let error = r_end.values().iter().map(|r| (r - ode).abs()).fold(0.0, f64::max) / ode;
    ScalarReduction {
        error,
        spread,
        travel: (r_end.values()[0] - r0).abs() / r0,
    }
}
