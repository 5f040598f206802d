use ndarray::Array2;
use ndarray_linalg::{EigVals, Inverse};
use num_complex::Complex64;
use rayon::prelude::*;

use super::{block_companion_eigenvalues, OperatorTag, SpectrumReport};
use crate::elliptic::{assemble_diffusion, flux_jacobian};
use crate::error::{Error, Result};
use crate::grid::{BoundaryX1, Grid, ScalarField};
use crate::linalg::{BandedCholesky, BandedLu, FivePoint};
use crate::physics::Model;

/// Derivatives of the pressure elimination about a stationary state
/// (R_s, p_s = f1(R_s)).
///
/// pi1(w) = -K^{-1} J w, with J the derivative of K(R) p_s - div(U h f4(R)),
/// and pi2(s) = K^{-1}(h f5 s). L_G solves
/// R f2 L_G w + pi2(L_G w) = f1' w - pi1(w); L_F is the Jacobian of
/// (R, R') -> (R', -3/2 R'^2/R - f2 R' + (f1 - p)/R) at (R_s, 0).
pub struct Linearization {
    grid: Grid,
    rf2: Vec<f64>,
    f1p: Vec<f64>,
    f2: Vec<f64>,
    inv_r: Vec<f64>,
    hf5: Vec<f64>,
    flux: FivePoint,
    /// K diag(f1') + J, the Jacobian of the stationary residual.
    stat: FivePoint,
    neg_k: BandedCholesky,
    /// K diag(R f2) + diag(h f5).
    lhs: BandedLu,
}

fn unit(n: usize, j: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[j] = 1.0;
    e
}

impl Linearization {
    pub fn new(model: &Model, r_s: &ScalarField, h: &ScalarField, u: [f64; 2]) -> Result<Self> {
        let aux = &model.aux;
        let grid = *r_s.grid();
        let rv = r_s.values();
        let p_s: Vec<f64> = rv.iter().map(|&r| aux.f1(r)).collect();
        let f1p: Vec<f64> = rv.iter().map(|&r| aux.f1_prime(r)).collect();
        let f2: Vec<f64> = rv.iter().map(|&r| aux.f2(r)).collect();
        let rf2: Vec<f64> = rv.iter().zip(&f2).map(|(r, f)| r * f).collect();
        let inv_r: Vec<f64> = rv.iter().map(|r| 1.0 / r).collect();
        let hf5: Vec<f64> = rv.iter().zip(h.values()).map(|(&r, hv)| hv * aux.f5(r)).collect();

        let op = assemble_diffusion(model, r_s, h)?;
        let neg_k_mat = op.to_five_point(None);
        let flux = flux_jacobian(model, r_s, h, u, &p_s)?;

        let mut stat = flux.clone();
        let mut k_f1p = neg_k_mat.clone();
        k_f1p.scale_columns(&f1p);
        stat.add(&k_f1p, -1.0);

        let mut k_rf2 = neg_k_mat.clone();
        k_rf2.scale_columns(&rf2);
        let mut lhs = FivePoint::zeros(grid);
        lhs.add(&k_rf2, -1.0);
        lhs.diag.iter_mut().zip(&hf5).for_each(|(d, v)| *d += v);

        Ok(Linearization {
            grid,
            rf2,
            f1p,
            f2,
            inv_r,
            hf5,
            flux,
            stat,
            neg_k: BandedCholesky::factor(&neg_k_mat)?,
            lhs: BandedLu::factor(&lhs)?,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn pi1(&self, w: &[f64]) -> Vec<f64> {
        let mut jw = vec![0.0; w.len()];
        self.flux.apply(w, &mut jw);
        let mut out = vec![0.0; w.len()];
        self.neg_k.solve(&jw, &mut out);
        out
    }

    pub fn pi2(&self, s: &[f64]) -> Vec<f64> {
        let rhs: Vec<f64> = s.iter().zip(&self.hf5).map(|(a, b)| -a * b).collect();
        let mut out = vec![0.0; s.len()];
        self.neg_k.solve(&rhs, &mut out);
        out
    }

    pub fn apply_lg(&self, w: &[f64]) -> Vec<f64> {
        let mut rhs = vec![0.0; w.len()];
        self.stat.apply(w, &mut rhs);
        let mut out = vec![0.0; w.len()];
        self.lhs.solve(&rhs, &mut out);
        out
    }

    /// Residual of the defining relation R f2 v - f1' w + pi1(w) + pi2(v).
    pub fn lg_defect(&self, w: &[f64], v: &[f64]) -> Vec<f64> {
        let p1 = self.pi1(w);
        let p2 = self.pi2(v);
        (0..w.len())
            .map(|c| self.rf2[c] * v[c] - self.f1p[c] * w[c] + p1[c] + p2[c])
            .collect()
    }

    /// B1 x = -(f1'/R) x + pi1(x) / R.
    pub fn apply_b1(&self, x: &[f64]) -> Vec<f64> {
        let p1 = self.pi1(x);
        (0..x.len()).map(|c| self.inv_r[c] * (p1[c] - self.f1p[c] * x[c])).collect()
    }

    /// B2 x = f2 x + pi2(x) / R.
    pub fn apply_b2(&self, x: &[f64]) -> Vec<f64> {
        let p2 = self.pi2(x);
        (0..x.len()).map(|c| self.f2[c] * x[c] + self.inv_r[c] * p2[c]).collect()
    }

    /// `s` stacks S1 over S2.
    pub fn apply_lf(&self, s: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        let (s1, s2) = s.split_at(n);
        let p1 = self.pi1(s1);
        let p2 = self.pi2(s2);
        let mut out = Vec::with_capacity(2 * n);
        out.extend_from_slice(s2);
        out.extend((0..n).map(|c| {
            self.inv_r[c] * (self.f1p[c] * s1[c] - p1[c] - p2[c]) - self.f2[c] * s2[c]
        }));
        out
    }
}

fn dense_from_columns(n: usize, apply: impl Fn(&[f64]) -> Vec<f64> + Sync) -> Array2<f64> {
    let cols: Vec<Vec<f64>> = (0..n).into_par_iter().map(|j| apply(&unit(n, j))).collect();
    Array2::from_shape_fn((n, n), |(i, j)| cols[j][i])
}

/// Dense L_G, one column per unit perturbation.
pub fn assemble_lg(lin: &Linearization) -> Result<Array2<f64>> {
    let n = lin.grid.len();
    if n > 4096 {
        return Err(Error::Config(format!("dense L_G limited to 4096 cells, got {n}")));
    }
    Ok(dense_from_columns(n, |e| lin.apply_lg(e)))
}

/// Dense L_F on (S1, S2).
pub fn assemble_lf(lin: &Linearization) -> Result<Array2<f64>> {
    let n = lin.grid.len();
    if n > 4096 {
        return Err(Error::Config(format!("dense L_F limited to 4096 cells, got {n}")));
    }
    Ok(dense_from_columns(2 * n, |e| lin.apply_lf(e)))
}

/// L_G from differentiating the fixed point S = (f1(R) - A1(R) - A2(R, S)) / (R f2(R)),
/// built with dense inverses and no sparse solves.
pub fn assemble_lg_fixed_point(model: &Model, r_s: &ScalarField, h: &ScalarField, u: [f64; 2]) -> Result<Array2<f64>> {
    let aux = &model.aux;
    let rv = r_s.values();
    let n = rv.len();
    let k = assemble_diffusion(model, r_s, h)?.to_dense();
    let k_inv = k.inv().map_err(|e| Error::Eigen(e.to_string()))?;
    let p_s: Vec<f64> = rv.iter().map(|&r| aux.f1(r)).collect();
    let j = flux_jacobian(model, r_s, h, u, &p_s)?.to_dense();
    // dA1 = -K^{-1} J, dA2/dS = K^{-1} diag(h f5)
    let da1 = -k_inv.dot(&j);
    let mut da2 = k_inv;
    for c in 0..n {
        let s = h.values()[c] * aux.f5(rv[c]);
        da2.column_mut(c).mapv_inplace(|v| v * s);
    }
    // (I + D da2) L = D (diag(f1') - dA1), D = diag(1 / (R f2))
    let mut a = Array2::<f64>::eye(n);
    let mut b = -da1;
    for c in 0..n {
        let d = 1.0 / (rv[c] * aux.f2(rv[c]));
        b[[c, c]] += aux.f1_prime(rv[c]);
        for col in 0..n {
            a[[c, col]] += d * da2[[c, col]];
            b[[c, col]] *= d;
        }
    }
    let a_inv = a.inv().map_err(|e| Error::Eigen(e.to_string()))?;
    Ok(a_inv.dot(&b))
}

/// Positive eigenvalues of -Laplacian on an all-Dirichlet grid, ascending.
/// Cell-centred unknowns with reflected ghosts have the modes
/// sin(k pi (i + 1/2) / n).
pub fn dirichlet_laplacian_eigenvalues(grid: &Grid) -> Result<Vec<f64>> {
    if grid.bc_x1 != BoundaryX1::Dirichlet {
        return Err(Error::Config("closed-form Laplacian spectrum needs Dirichlet x1 boundaries".into()));
    }
    let one = |n: usize, dx: f64| -> Vec<f64> {
        (1..=n)
            .map(|k| {
                let s = (k as f64 * std::f64::consts::PI / (2.0 * n as f64)).sin();
                4.0 * s * s / (dx * dx)
            })
            .collect()
    };
    let a = one(grid.n1, grid.dx1);
    let b = one(grid.n2, grid.dx2);
    let mut out: Vec<f64> = a.iter().flat_map(|x| b.iter().map(move |y| x + y)).collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SeparableSpectrum {
    pub report: SpectrumReport,
    /// Largest relative part of an image lying outside the probed x2 mode.
    pub leakage: f64,
}

/// Sine modes in x2, normalized.
fn x2_modes(n2: usize) -> Vec<Vec<f64>> {
    (1..=n2)
        .map(|m| {
            let v: Vec<f64> = (0..n2)
                .map(|j| (m as f64 * std::f64::consts::PI * (j as f64 + 0.5) / n2 as f64).sin())
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

const LEAKAGE_LIMIT: f64 = 1e-9;

/// Matrix of a single-block operator restricted to the x2 mode `s`, and the
/// largest relative part of an image falling outside that mode.
fn reduce_to_mode(grid: &Grid, s: &[f64], apply: &(dyn Fn(&[f64]) -> Vec<f64> + Sync)) -> (Array2<f64>, f64) {
    let (n1, n2) = (grid.n1, grid.n2);
    let mut reduced = Array2::<f64>::zeros((n1, n1));
    let mut leak: f64 = 0.0;
    for i in 0..n1 {
        let mut v = vec![0.0; grid.len()];
        for (j, sj) in s.iter().enumerate() {
            v[j * n1 + i] = *sj;
        }
        let y = apply(&v);
        let total: f64 = y.iter().map(|x| x * x).sum();
        let mut outside = 0.0;
        for ii in 0..n1 {
            let at = |j: usize| y[j * n1 + ii];
            let coef: f64 = (0..n2).map(|j| s[j] * at(j)).sum();
            reduced[[ii, i]] = coef;
            outside += (0..n2).map(|j| (at(j) - coef * s[j]).powi(2)).sum::<f64>();
        }
        if total > 0.0 {
            leak = leak.max((outside / total).sqrt());
        }
    }
    (reduced, leak)
}

/// Spectrum of an operator that commutes with the x2 sine transform,
/// computed mode by mode. Holds for x2-uniform states with U2 = 0.
fn separable_spectrum(
    grid: &Grid,
    per_mode: impl Fn(&[f64]) -> Result<(Vec<Complex64>, f64)> + Sync,
    tag: OperatorTag,
    margin: f64,
) -> Result<SeparableSpectrum> {
    let results: Vec<Result<(Vec<Complex64>, f64)>> = x2_modes(grid.n2).par_iter().map(|s| per_mode(s)).collect();
    let mut eigenvalues = Vec::new();
    let mut leakage: f64 = 0.0;
    for r in results {
        let (e, l) = r?;
        eigenvalues.extend(e);
        leakage = leakage.max(l);
    }
    if leakage > LEAKAGE_LIMIT {
        return Err(Error::Config(format!(
            "operator couples x2 modes (leakage {leakage:.3e}); the state must be uniform in x2 with U2 = 0"
        )));
    }
    Ok(SeparableSpectrum {
        report: SpectrumReport::from_eigenvalues(tag, (grid.n1, grid.n2), eigenvalues, margin)?,
        leakage,
    })
}

pub fn separable_lg(lin: &Linearization, margin: f64) -> Result<SeparableSpectrum> {
    let grid = lin.grid;
    separable_spectrum(
        &grid,
        |s| {
            let (a, leak) = reduce_to_mode(&grid, s, &|v| lin.apply_lg(v));
            let eig = a.eigvals().map_err(|e| Error::Eigen(e.to_string()))?;
            Ok((eig.to_vec(), leak))
        },
        OperatorTag::LG,
        margin,
    )
}

pub fn separable_lf(lin: &Linearization, margin: f64) -> Result<SeparableSpectrum> {
    let grid = lin.grid;
    separable_spectrum(
        &grid,
        |s| {
            let (b1, l1) = reduce_to_mode(&grid, s, &|v| lin.apply_b1(v));
            let (b2, l2) = reduce_to_mode(&grid, s, &|v| lin.apply_b2(v));
            Ok((block_companion_eigenvalues(&b1, &b2)?, l1.max(l2)))
        },
        OperatorTag::LF,
        margin,
    )
}

/// Dense B1 and B2 with L_F = [[0, I], [-B1, -B2]].
pub fn lf_blocks(lin: &Linearization) -> Result<(Array2<f64>, Array2<f64>)> {
    let n = lin.grid.len();
    if n > 4096 {
        return Err(Error::Config(format!("dense L_F limited to 4096 cells, got {n}")));
    }
    Ok((
        dense_from_columns(n, |e| lin.apply_b1(e)),
        dense_from_columns(n, |e| lin.apply_b2(e)),
    ))
}

/// Full L_F spectrum from its blocks.
pub fn lf_spectrum(lin: &Linearization, margin: f64) -> Result<SpectrumReport> {
    let (b1, b2) = lf_blocks(lin)?;
    let g = lin.grid;
    SpectrumReport::from_eigenvalues(
        OperatorTag::LF,
        (g.n1, g.n2),
        block_companion_eigenvalues(&b1, &b2)?,
        margin,
    )
}
