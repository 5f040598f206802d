//! Finite-volume Reynolds operator, Couette source term and the elliptic
//! solves A1 (shear-driven pressure) and A2 (squeeze-driven pressure).

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::{BoundaryX1, Grid, ScalarField};
use crate::linalg::{neighbor, pcg, BandedCholesky, Dir, FivePoint};
use crate::physics::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    /// Banded Cholesky up to `DIRECT_LIMIT` unknowns, CG above.
    Auto,
    DirectBanded,
    Krylov,
}

pub const DIRECT_LIMIT: usize = 65_536;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolveConfig {
    pub method: SolverMethod,
    /// Relative residual target.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LinearSolveConfig {
    fn default() -> Self {
        LinearSolveConfig {
            method: SolverMethod::Auto,
            tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

impl LinearSolveConfig {
    pub fn krylov(tol: f64) -> Self {
        LinearSolveConfig {
            method: SolverMethod::Krylov,
            tol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol <= 1e-2) {
            return Err(Error::Key {
                key: "linear_tol".into(),
                msg: format!("{} not in (0, 1e-2]", self.tol),
            });
        }
        if self.max_iter < 1 {
            return Err(Error::Key {
                key: "linear_max_iter".into(),
                msg: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    fn resolve(&self, n: usize) -> SolverMethod {
        match self.method {
            SolverMethod::Auto if n <= DIRECT_LIMIT => SolverMethod::DirectBanded,
            SolverMethod::Auto => SolverMethod::Krylov,
            m => m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub method: SolverMethod,
    pub iterations: usize,
    /// Relative residual of the returned solution.
    pub residual: f64,
}

/// Discrete div(D grad .) with D = f3(R) h^3 given per cell.
///
/// Interior faces use the arithmetic mean of the two cell mobilities; a
/// Dirichlet face reflects the cell value into a ghost cell, which adds
/// `2 D_c / dx^2` to the diagonal.
#[derive(Debug, Clone)]
pub struct EllipticOperator {
    grid: Grid,
    mobility: Vec<f64>,
    /// Coupling to the east neighbour, zero where there is none.
    east: Vec<f64>,
    north: Vec<f64>,
    /// Diagonal of -K.
    diag: Vec<f64>,
}

impl EllipticOperator {
    pub fn from_mobility(grid: Grid, mobility: Vec<f64>) -> Self {
        let (n1, n2) = (grid.n1, grid.n2);
        let n = grid.len();
        let (ax, ay) = (1.0 / (grid.dx1 * grid.dx1), 1.0 / (grid.dx2 * grid.dx2));
        let mut east = vec![0.0; n];
        let mut north = vec![0.0; n];
        let mut diag = vec![0.0; n];
        for j in 0..n2 {
            for i in 0..n1 {
                let c = j * n1 + i;
                let d = mobility[c];
                if i + 1 < n1 || grid.bc_x1 == BoundaryX1::Periodic {
                    let e = if i + 1 < n1 { c + 1 } else { c + 1 - n1 };
                    let a = 0.5 * (d + mobility[e]) * ax;
                    east[c] = a;
                    diag[c] += a;
                    diag[e] += a;
                } else {
                    diag[c] += 2.0 * d * ax;
                }
                if grid.bc_x1 == BoundaryX1::Dirichlet && i == 0 {
                    diag[c] += 2.0 * d * ax;
                }
                if j + 1 < n2 {
                    let a = 0.5 * (d + mobility[c + n1]) * ay;
                    north[c] = a;
                    diag[c] += a;
                    diag[c + n1] += a;
                } else {
                    diag[c] += 2.0 * d * ay;
                }
                if j == 0 {
                    diag[c] += 2.0 * d * ay;
                }
            }
        }
        EllipticOperator {
            grid,
            mobility,
            east,
            north,
            diag,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mobility(&self) -> &[f64] {
        &self.mobility
    }

    /// Diagonal of -K.
    pub fn neg_diagonal(&self) -> &[f64] {
        &self.diag
    }

    #[inline]
    fn east_of(&self, c: usize) -> usize {
        if (c + 1).is_multiple_of(self.grid.n1) {
            c + 1 - self.grid.n1
        } else {
            c + 1
        }
    }

    /// y = (-K + diag(shift)) x.
    pub fn apply_shifted(&self, shift: Option<&[f64]>, x: &[f64], y: &mut [f64]) {
        let n1 = self.grid.n1;
        let n = self.grid.len();
        match shift {
            Some(s) => {
                for c in 0..n {
                    y[c] = (self.diag[c] + s[c]) * x[c];
                }
            }
            None => {
                for c in 0..n {
                    y[c] = self.diag[c] * x[c];
                }
            }
        }
        for c in 0..n {
            let a = self.east[c];
            if a != 0.0 {
                let e = self.east_of(c);
                y[c] -= a * x[e];
                y[e] -= a * x[c];
            }
            let b = self.north[c];
            if b != 0.0 {
                y[c] -= b * x[c + n1];
                y[c + n1] -= b * x[c];
            }
        }
    }

    /// y = K x.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_shifted(None, x, y);
        y.iter_mut().for_each(|v| *v = -*v);
    }

    /// -K + diag(shift) as a five-point matrix.
    pub fn to_five_point(&self, shift: Option<&[f64]>) -> FivePoint {
        let g = self.grid;
        let mut m = FivePoint::zeros(g);
        for c in 0..g.len() {
            m.diag[c] = self.diag[c] + shift.map_or(0.0, |s| s[c]);
            if self.east[c] != 0.0 {
                let e = self.east_of(c);
                m.east[c] = -self.east[c];
                m.west[e] = -self.east[c];
            }
            if self.north[c] != 0.0 {
                m.north[c] = -self.north[c];
                m.south[c + g.n1] = -self.north[c];
            }
        }
        m
    }

    /// Dense matrix of K.
    pub fn to_dense(&self) -> Array2<f64> {
        -self.to_five_point(None).to_dense()
    }

    pub fn factor(&self, shift: Option<&[f64]>) -> Result<BandedCholesky> {
        BandedCholesky::factor(&self.to_five_point(shift))
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves (-K + diag(shift)) x = rhs. `x` holds the initial guess on entry
/// (used by the Krylov path only).
pub fn solve_spd(
    op: &EllipticOperator,
    shift: Option<&[f64]>,
    rhs: &[f64],
    x: &mut [f64],
    cfg: &LinearSolveConfig,
) -> Result<SolveReport> {
    let n = op.grid.len();
    let method = cfg.resolve(n);
    if rhs.iter().all(|&v| v == 0.0) {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveReport {
            method,
            iterations: 0,
            residual: 0.0,
        });
    }
    match method {
        SolverMethod::Krylov => {
            let diag: Vec<f64> = match shift {
                Some(s) => op.diag.iter().zip(s).map(|(a, b)| a + b).collect(),
                None => op.diag.clone(),
            };
            let out = pcg(
                |u, v| op.apply_shifted(shift, u, v),
                &diag,
                rhs,
                x,
                cfg.tol,
                cfg.max_iter,
            );
            if !out.converged {
                return Err(Error::NoConvergence {
                    solver: "conjugate gradients",
                    iterations: out.iterations,
                    residual: out.residual,
                });
            }
            Ok(SolveReport {
                method,
                iterations: out.iterations,
                residual: out.residual,
            })
        }
        _ => {
            let chol = op.factor(shift)?;
            chol.solve(rhs, x);
            let bnorm = norm2(rhs);
            let mut r = vec![0.0; n];
            let mut dx = vec![0.0; n];
            let mut residual = f64::INFINITY;
            let mut refinements = 0;
            loop {
                op.apply_shifted(shift, x, &mut r);
                r.iter_mut().zip(rhs).for_each(|(a, b)| *a = b - *a);
                residual = residual.min(norm2(&r) / bnorm);
                if residual <= cfg.tol || refinements == 2 {
                    break;
                }
                chol.solve(&r, &mut dx);
                x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
                refinements += 1;
            }
            if residual > cfg.tol {
                return Err(Error::NoConvergence {
                    solver: "banded Cholesky",
                    iterations: refinements,
                    residual,
                });
            }
            Ok(SolveReport {
                method,
                iterations: refinements,
                residual,
            })
        }
    }
}

fn check_fields(r: &ScalarField, h: &ScalarField) -> Result<()> {
    if r.grid() != h.grid() {
        return Err(Error::State("R and h live on different grids".into()));
    }
    if let Some((c, v)) = r.values().iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::State(format!("non-positive radius {v:e} at cell {c}")));
    }
    Ok(())
}

pub fn assemble_diffusion(model: &Model, r: &ScalarField, h: &ScalarField) -> Result<EllipticOperator> {
    check_fields(r, h)?;
    let mobility = r
        .values()
        .iter()
        .zip(h.values())
        .map(|(&rv, &hv)| model.aux.f3(rv) * hv * hv * hv)
        .collect();
    Ok(EllipticOperator::from_mobility(*r.grid(), mobility))
}

/// Upwind divergence of the face flux `u q`. `inflow(c)` is the transported
/// value entering through a boundary face of cell `c`.
pub fn upwind_divergence(
    grid: &Grid,
    u: [f64; 2],
    q: &[f64],
    inflow: impl Fn(usize) -> f64,
) -> Vec<f64> {
    let (n1, n2) = (grid.n1, grid.n2);
    let mut div = vec![0.0; grid.len()];
    // face k separates cells k-1 and k along a line of n cells
    let mut sweep = |n: usize, periodic: bool, vel: f64, dx: f64, cell: &dyn Fn(usize) -> usize| {
        let faces = if periodic { n } else { n + 1 };
        for k in 0..faces {
            let left = match k {
                0 if periodic => Some(cell(n - 1)),
                0 => None,
                _ => Some(cell(k - 1)),
            };
            let right = (k < n).then(|| cell(k));
            let upwind = if vel > 0.0 { left } else { right };
            let value = match upwind {
                Some(c) => q[c],
                None => inflow(left.or(right).unwrap()),
            };
            let flux = vel * value / dx;
            if let Some(l) = left {
                div[l] += flux;
            }
            if let Some(r) = right {
                div[r] -= flux;
            }
        }
    };
    if u[0] != 0.0 {
        let periodic = grid.bc_x1 == BoundaryX1::Periodic;
        for j in 0..n2 {
            sweep(n1, periodic, u[0], grid.dx1, &|i| j * n1 + i);
        }
    }
    if u[1] != 0.0 {
        for i in 0..n1 {
            sweep(n2, false, u[1], grid.dx2, &|j| j * n1 + i);
        }
    }
    div
}

/// Discrete div(U h f4(R)). Flux entering through a Dirichlet boundary
/// carries bubbles at the equilibrium radius.
pub fn assemble_couette_rhs(
    model: &Model,
    r: &ScalarField,
    h: &ScalarField,
    u: [f64; 2],
) -> Result<ScalarField> {
    check_fields(r, h)?;
    let hv = h.values();
    let q: Vec<f64> = r
        .values()
        .iter()
        .zip(hv)
        .map(|(&rv, &hh)| hh * model.aux.f4(rv))
        .collect();
    let f4_in = model.aux.f4(model.derived.r_bar);
    let div = upwind_divergence(r.grid(), u, &q, |c| hv[c] * f4_in);
    ScalarField::new(*r.grid(), div)
}

fn add_entry(m: &mut FivePoint, row: usize, col: usize, v: f64) {
    if row == col {
        m.diag[row] += v;
        return;
    }
    let g = m.grid;
    let slot = if neighbor(&g, row, Dir::West) == Some(col) {
        &mut m.west
    } else if neighbor(&g, row, Dir::East) == Some(col) {
        &mut m.east
    } else if neighbor(&g, row, Dir::South) == Some(col) {
        &mut m.south
    } else {
        debug_assert_eq!(neighbor(&g, row, Dir::North), Some(col));
        &mut m.north
    };
    slot[row] += v;
}

/// Derivative in R of K(R) p - div(U h f4(R)) with `p` held fixed.
pub fn flux_jacobian(
    model: &Model,
    r: &ScalarField,
    h: &ScalarField,
    u: [f64; 2],
    p: &[f64],
) -> Result<FivePoint> {
    check_fields(r, h)?;
    let g = *r.grid();
    let (n1, n2) = (g.n1, g.n2);
    let aux = &model.aux;
    let hv = h.values();
    let rv = r.values();
    let dmob: Vec<f64> = (0..g.len()).map(|c| aux.f3_prime(rv[c]) * hv[c].powi(3)).collect();
    let dq: Vec<f64> = (0..g.len()).map(|c| hv[c] * aux.f4_prime(rv[c])).collect();
    let mut m = FivePoint::zeros(g);
    let periodic = g.bc_x1 == BoundaryX1::Periodic;

    // face between a and b with weight w: (K p)_a += T (p_b - p_a), T = (D_a + D_b) w / 2
    let face = |m: &mut FivePoint, a: usize, b: usize, w: f64| {
        let jump = p[b] - p[a];
        add_entry(m, a, a, 0.5 * dmob[a] * w * jump);
        add_entry(m, a, b, 0.5 * dmob[b] * w * jump);
        add_entry(m, b, b, -0.5 * dmob[b] * w * jump);
        add_entry(m, b, a, -0.5 * dmob[a] * w * jump);
    };
    let (ax, ay) = (1.0 / (g.dx1 * g.dx1), 1.0 / (g.dx2 * g.dx2));
    for j in 0..n2 {
        for i in 0..n1 {
            let c = g.index(i, j);
            if i + 1 < n1 {
                face(&mut m, c, c + 1, ax);
            } else if periodic {
                face(&mut m, c, c + 1 - n1, ax);
            }
            if j + 1 < n2 {
                face(&mut m, c, c + n1, ay);
            }
            let mut wall = 0.0;
            if !periodic && (i == 0 || i + 1 == n1) {
                wall += 2.0 * ax;
            }
            if j == 0 || j + 1 == n2 {
                wall += 2.0 * ay;
            }
            if wall != 0.0 {
                add_entry(&mut m, c, c, -dmob[c] * wall * p[c]);
            }
        }
    }

    // upwind Couette flux, mirrored from `upwind_divergence`; inflow values are fixed
    let sweep = |m: &mut FivePoint, n: usize, periodic: bool, vel: f64, dx: f64, cell: &dyn Fn(usize) -> usize| {
        let faces = if periodic { n } else { n + 1 };
        for k in 0..faces {
            let left = match k {
                0 if periodic => Some(cell(n - 1)),
                0 => None,
                _ => Some(cell(k - 1)),
            };
            let right = (k < n).then(|| cell(k));
            let Some(up) = (if vel > 0.0 { left } else { right }) else {
                continue;
            };
            let d = vel * dq[up] / dx;
            if let Some(l) = left {
                add_entry(m, l, up, -d);
            }
            if let Some(r) = right {
                add_entry(m, r, up, d);
            }
        }
    };
    if u[0] != 0.0 {
        for j in 0..n2 {
            sweep(&mut m, n1, periodic, u[0], g.dx1, &|i| j * n1 + i);
        }
    }
    if u[1] != 0.0 {
        for i in 0..n1 {
            sweep(&mut m, n2, false, u[1], g.dx2, &|j| j * n1 + i);
        }
    }
    Ok(m)
}

/// A1(R): solution of K A1 = div(U h f4(R)) with zero Dirichlet data.
pub fn solve_a1(
    model: &Model,
    r: &ScalarField,
    h: &ScalarField,
    u: [f64; 2],
    cfg: &LinearSolveConfig,
) -> Result<(ScalarField, SolveReport)> {
    let op = assemble_diffusion(model, r, h)?;
    let div = assemble_couette_rhs(model, r, h, u)?;
    let rhs: Vec<f64> = div.values().iter().map(|v| -v).collect();
    let mut x = vec![0.0; rhs.len()];
    let rep = solve_spd(&op, None, &rhs, &mut x, cfg)?;
    Ok((ScalarField::new(*r.grid(), x)?, rep))
}

/// A2(R, S): solution of K A2 = h f5(R) S with zero Dirichlet data.
pub fn apply_a2(
    model: &Model,
    r: &ScalarField,
    h: &ScalarField,
    s: &ScalarField,
    cfg: &LinearSolveConfig,
) -> Result<(ScalarField, SolveReport)> {
    let op = assemble_diffusion(model, r, h)?;
    let rhs: Vec<f64> = r
        .values()
        .iter()
        .zip(h.values())
        .zip(s.values())
        .map(|((&rv, &hv), &sv)| -hv * model.aux.f5(rv) * sv)
        .collect();
    let mut x = vec![0.0; rhs.len()];
    let rep = solve_spd(&op, None, &rhs, &mut x, cfg)?;
    Ok((ScalarField::new(*r.grid(), x)?, rep))
}
