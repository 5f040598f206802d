//! Sparse five-point operators and the solvers used on them: banded
//! Cholesky, banded LU with partial pivoting and Jacobi-preconditioned CG.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::{BoundaryX1, Grid};

/// General five-point matrix on a grid.
///
/// Row `c` reads `diag[c] x[c] + west[c] x[W] + east[c] x[E] + south[c] x[S] + north[c] x[N]`.
/// Coefficients pointing across a Dirichlet boundary must be zero.
#[derive(Debug, Clone)]
pub struct FivePoint {
    pub grid: Grid,
    pub diag: Vec<f64>,
    pub west: Vec<f64>,
    pub east: Vec<f64>,
    pub south: Vec<f64>,
    pub north: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    West,
    East,
    South,
    North,
}

/// Neighbouring cell in direction `d`, if any.
#[inline]
pub fn neighbor(g: &Grid, c: usize, d: Dir) -> Option<usize> {
    let (i, j) = (c % g.n1, c / g.n1);
    let periodic = g.bc_x1 == BoundaryX1::Periodic;
    match d {
        Dir::West if i > 0 => Some(c - 1),
        Dir::West if periodic => Some(c + g.n1 - 1),
        Dir::East if i + 1 < g.n1 => Some(c + 1),
        Dir::East if periodic => Some(c + 1 - g.n1),
        Dir::South if j > 0 => Some(c - g.n1),
        Dir::North if j + 1 < g.n2 => Some(c + g.n1),
        _ => None,
    }
}

impl FivePoint {
    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        FivePoint {
            grid,
            diag: vec![0.0; n],
            west: vec![0.0; n],
            east: vec![0.0; n],
            south: vec![0.0; n],
            north: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    /// Off-diagonal entries of row `c` as (column, value) pairs.
    pub fn row(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let g = &self.grid;
        [
            (Dir::West, self.west[c]),
            (Dir::East, self.east[c]),
            (Dir::South, self.south[c]),
            (Dir::North, self.north[c]),
        ]
        .into_iter()
        .filter_map(move |(d, v)| neighbor(g, c, d).map(|nb| (nb, v)))
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for c in 0..self.n() {
            let mut s = self.diag[c] * x[c];
            for (nb, v) in self.row(c) {
                s += v * x[nb];
            }
            y[c] = s;
        }
    }

    /// self * diag(d).
    pub fn scale_columns(&mut self, d: &[f64]) {
        let g = self.grid;
        for c in 0..self.n() {
            self.diag[c] *= d[c];
            let at = |dir| neighbor(&g, c, dir).map_or(0.0, |nb| d[nb]);
            self.west[c] *= at(Dir::West);
            self.east[c] *= at(Dir::East);
            self.south[c] *= at(Dir::South);
            self.north[c] *= at(Dir::North);
        }
    }

    /// self + other, both on the same grid.
    pub fn add(&mut self, other: &FivePoint, scale: f64) {
        for (a, b) in [
            (&mut self.diag, &other.diag),
            (&mut self.west, &other.west),
            (&mut self.east, &other.east),
            (&mut self.south, &other.south),
            (&mut self.north, &other.north),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.n();
        let mut a = Array2::zeros((n, n));
        for c in 0..n {
            a[[c, c]] += self.diag[c];
            for (nb, v) in self.row(c) {
                a[[c, nb]] += v;
            }
        }
        a
    }
}

/// Cell numbering that keeps a five-point matrix banded. Periodic x1 is
/// folded (0, n1-1, 1, n1-2, ...) so the wrap-around coupling stays local.
#[derive(Debug, Clone)]
pub struct BandOrdering {
    /// Band position of each cell.
    pub pos: Vec<usize>,
    pub bandwidth: usize,
}

impl BandOrdering {
    pub fn for_grid(g: &Grid) -> Self {
        let (n1, n2) = (g.n1, g.n2);
        let mut pos = vec![0; g.len()];
        match g.bc_x1 {
            BoundaryX1::Periodic => {
                let half = n1.div_ceil(2);
                for c in 0..g.len() {
                    let (i, j) = (c % n1, c / n1);
                    let k = if i < half { 2 * i } else { 2 * (n1 - 1 - i) + 1 };
                    pos[c] = k * n2 + j;
                }
                BandOrdering {
                    pos,
                    bandwidth: 2 * n2,
                }
            }
            BoundaryX1::Dirichlet if n2 <= n1 => {
                for c in 0..g.len() {
                    pos[c] = (c % n1) * n2 + c / n1;
                }
                BandOrdering { pos, bandwidth: n2 }
            }
            BoundaryX1::Dirichlet => {
                for (c, p) in pos.iter_mut().enumerate() {
                    *p = c;
                }
                BandOrdering { pos, bandwidth: n1 }
            }
        }
    }

    fn permute(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (c, &p) in self.pos.iter().enumerate() {
            y[p] = x[c];
        }
        y
    }

    fn unpermute(&self, y: &[f64], x: &mut [f64]) {
        for (c, &p) in self.pos.iter().enumerate() {
            x[c] = y[p];
        }
    }
}

/// Cholesky factor of a symmetric positive definite five-point matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    ord: BandOrdering,
    n: usize,
    /// Row i stores L(i, i-bw..=i).
    lb: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &FivePoint) -> Result<Self> {
        let ord = BandOrdering::for_grid(&a.grid);
        let (n, bw) = (a.n(), ord.bandwidth);
        let w = bw + 1;
        let mut lb = vec![0.0; n * w];
        for c in 0..n {
            let pc = ord.pos[c];
            lb[pc * w + bw] += a.diag[c];
            for (nb, v) in a.row(c) {
                let pn = ord.pos[nb];
                if pn < pc {
                    lb[pc * w + pn + bw - pc] += v;
                }
            }
        }
        for i in 0..n {
            let k0 = i.saturating_sub(bw);
            for k in k0..=i {
                let m0 = k0.max(k.saturating_sub(bw));
                let ri = &lb[i * w + m0 + bw - i..i * w + k + bw - i];
                let rk = &lb[k * w + m0 + bw - k..k * w + bw];
                let dot: f64 = ri.iter().zip(rk).map(|(a, b)| a * b).sum();
                let s = lb[i * w + k + bw - i] - dot;
                if k == i {
                    if !(s > 0.0) {
                        return Err(Error::State(format!(
                            "matrix is not positive definite (pivot {s:e} at row {i})"
                        )));
                    }
                    lb[i * w + bw] = s.sqrt();
                } else {
                    lb[i * w + k + bw - i] = s / lb[k * w + bw];
                }
            }
        }
        Ok(BandedCholesky { ord, n, lb })
    }

    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let (n, bw) = (self.n, self.ord.bandwidth);
        let w = bw + 1;
        let mut y = self.ord.permute(b);
        for i in 0..n {
            let k0 = i.saturating_sub(bw);
            let row = &self.lb[i * w + k0 + bw - i..i * w + bw];
            let dot: f64 = row.iter().zip(&y[k0..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - dot) / self.lb[i * w + bw];
        }
        for i in (0..n).rev() {
            y[i] /= self.lb[i * w + bw];
            let yi = y[i];
            let k0 = i.saturating_sub(bw);
            for k in k0..i {
                y[k] -= self.lb[i * w + k + bw - i] * yi;
            }
        }
        self.ord.unpermute(&y, x);
    }
}

/// LU factorization with partial pivoting of a general five-point matrix,
/// stored in the LAPACK band layout with room for pivoting fill-in.
#[derive(Debug, Clone)]
pub struct BandedLu {
    ord: BandOrdering,
    n: usize,
    kl: usize,
    kv: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &FivePoint) -> Result<Self> {
        let ord = BandOrdering::for_grid(&a.grid);
        let n = a.n();
        let kl = ord.bandwidth;
        let ku = ord.bandwidth;
        let kv = kl + ku;
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![0.0; ldab * n];
        let at = |r: usize, c: usize| kv + r - c + c * ldab;
        for c in 0..n {
            let pc = ord.pos[c];
            ab[at(pc, pc)] += a.diag[c];
            for (nb, v) in a.row(c) {
                ab[at(pc, ord.pos[nb])] += v;
            }
        }
        let mut ipiv = vec![0; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = kv + j * ldab;
            let mut jp = 0;
            let mut best = ab[col].abs();
            for t in 1..=km {
                if ab[col + t].abs() > best {
                    best = ab[col + t].abs();
                    jp = t;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return Err(Error::State(format!("singular matrix at column {j}")));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    ab.swap(kv + j + jp - c + c * ldab, kv + j - c + c * ldab);
                }
            }
            if km > 0 {
                let inv = 1.0 / ab[col];
                for t in 1..=km {
                    ab[col + t] *= inv;
                }
                for c in j + 1..=ju {
                    let u = ab[kv + j - c + c * ldab];
                    if u != 0.0 {
                        let base = kv + j - c + c * ldab;
                        for t in 1..=km {
                            ab[base + t] -= ab[col + t] * u;
                        }
                    }
                }
            }
        }
        Ok(BandedLu {
            ord,
            n,
            kl,
            kv,
            ldab,
            ab,
            ipiv,
        })
    }

    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let (n, kl, kv, ldab) = (self.n, self.kl, self.kv, self.ldab);
        let mut y = self.ord.permute(b);
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                y.swap(p, j);
            }
            let km = kl.min(n - 1 - j);
            let yj = y[j];
            if yj != 0.0 {
                let col = kv + j * ldab;
                for t in 1..=km {
                    y[j + t] -= self.ab[col + t] * yj;
                }
            }
        }
        for j in (0..n).rev() {
            y[j] /= self.ab[kv + j * ldab];
            let yj = y[j];
            if yj != 0.0 {
                for i in j.saturating_sub(kv)..j {
                    y[i] -= self.ab[kv + i - j + j * ldab] * yj;
                }
            }
        }
        self.ord.unpermute(&y, x);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgOutcome {
    pub iterations: usize,
    /// Final ||b - A x|| / ||b||.
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients, warm-started from `x`.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> PcgOutcome {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return PcgOutcome {
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for k in 0..n {
        r[k] = b[k] - r[k];
    }
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / bnorm;
    let mut it = 0;
    while res > tol && it < max_iter {
        apply(&p, &mut q);
        let a = rz / dot(&p, &q);
        for k in 0..n {
            x[k] += a * p[k];
            r[k] -= a * q[k];
        }
        res = dot(&r, &r).sqrt() / bnorm;
        it += 1;
        if res <= tol {
            break;
        }
        for k in 0..n {
            z[k] = r[k] / diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    PcgOutcome {
        iterations: it,
        residual: res,
        converged: res <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray_linalg::Solve;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(grid: Grid, rng: &mut ChaCha8Rng) -> FivePoint {
        let mut a = FivePoint::zeros(grid);
        for c in 0..grid.len() {
            for d in [Dir::East, Dir::North] {
                if let Some(nb) = neighbor(&grid, c, d) {
                    let w: f64 = rng.gen_range(0.5..2.0);
                    match d {
                        Dir::East => {
                            a.east[c] = -w;
                            a.west[nb] = -w;
                        }
                        _ => {
                            a.north[c] = -w;
                            a.south[nb] = -w;
                        }
                    }
                    a.diag[c] += w;
                    a.diag[nb] += w;
                }
            }
            a.diag[c] += rng.gen_range(0.01..0.1);
        }
        a
    }

    fn grids() -> Vec<Grid> {
        vec![
            Grid::new(7, 5, 1.0, 1.0, BoundaryX1::Periodic).unwrap(),
            Grid::new(8, 6, 1.0, 1.0, BoundaryX1::Periodic).unwrap(),
            Grid::new(6, 9, 1.0, 1.0, BoundaryX1::Dirichlet).unwrap(),
            Grid::new(9, 5, 2.0, 1.0, BoundaryX1::Dirichlet).unwrap(),
        ]
    }

    fn dense_solve(a: &FivePoint, b: &[f64]) -> Vec<f64> {
        let m = a.to_dense();
        let rhs = ndarray::Array1::from(b.to_vec());
        m.solve_into(rhs).unwrap().to_vec()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn folded_ordering_is_a_permutation_with_stated_bandwidth() {
        for g in grids() {
            let ord = BandOrdering::for_grid(&g);
            let mut seen = vec![false; g.len()];
            for &p in &ord.pos {
                assert!(!seen[p]);
                seen[p] = true;
            }
            for c in 0..g.len() {
                for d in [Dir::West, Dir::East, Dir::South, Dir::North] {
                    if let Some(nb) = neighbor(&g, c, d) {
                        assert!(ord.pos[c].abs_diff(ord.pos[nb]) <= ord.bandwidth);
                    }
                }
            }
        }
    }

    #[test]
    fn cholesky_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for g in grids() {
            let a = random_spd(g, &mut rng);
            let b: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut x = vec![0.0; g.len()];
            BandedCholesky::factor(&a).unwrap().solve(&b, &mut x);
            assert!(max_diff(&x, &dense_solve(&a, &b)) < 1e-10);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let g = grids()[0];
        let mut a = random_spd(g, &mut ChaCha8Rng::seed_from_u64(1));
        a.diag[3] = -5.0;
        assert!(BandedCholesky::factor(&a).is_err());
    }

    #[test]
    fn lu_matches_dense_solve_on_nonsymmetric_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for g in grids() {
            let mut a = random_spd(g, &mut rng);
            for c in 0..g.len() {
                a.east[c] += rng.gen_range(-3.0..3.0) * (neighbor(&g, c, Dir::East).is_some() as u8 as f64);
                a.south[c] *= rng.gen_range(-2.0..2.0);
                // small diagonals force pivoting
                a.diag[c] *= rng.gen_range(-0.2..0.2);
            }
            let b: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut x = vec![0.0; g.len()];
            BandedLu::factor(&a).unwrap().solve(&b, &mut x);
            let xd = dense_solve(&a, &b);
            let scale = xd.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            assert!(max_diff(&x, &xd) < 1e-9 * scale);
        }
    }

    #[test]
    fn pcg_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for g in grids() {
            let a = random_spd(g, &mut rng);
            let b: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut x = vec![0.0; g.len()];
            let out = pcg(|u, v| a.apply(u, v), &a.diag, &b, &mut x, 1e-13, 1000);
            assert!(out.converged);
            assert!(max_diff(&x, &dense_solve(&a, &b)) < 1e-9);
        }
    }

    #[test]
    fn pcg_zero_rhs_gives_zero() {
        let g = grids()[1];
        let a = random_spd(g, &mut ChaCha8Rng::seed_from_u64(2));
        let mut x = vec![1.0; g.len()];
        let out = pcg(|u, v| a.apply(u, v), &a.diag, &vec![0.0; g.len()], &mut x, 1e-12, 10);
        assert!(out.converged && x.iter().all(|&v| v == 0.0));
    }
}
