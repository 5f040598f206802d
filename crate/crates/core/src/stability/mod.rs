//! Linear stability of stationary states: the inertialess linearization
//! L_G, the inertial one L_F, their spectra, and the mode-wise Routh-Hurwitz
//! analysis of the parallel-film problem.

mod hurwitz;
mod linearize;

pub use hurwitz::{critical_speed, hurwitz_analysis, CriticalSpeed, HurwitzReport, ModeConstants};
pub use linearize::{
    assemble_lf, assemble_lg, assemble_lg_fixed_point, dirichlet_laplacian_eigenvalues, lf_blocks, lf_spectrum,
    separable_lf, separable_lg, Linearization, SeparableSpectrum,
};

use std::fmt::Write as _;

use ndarray::Array2;
use ndarray_linalg::{EigVals, Inverse};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const DEFAULT_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorTag {
    /// Inertialess linearization.
    LG,
    /// Inertial linearization on (S1, S2) = (dR, dR/dt).
    LF,
}

impl OperatorTag {
    pub fn name(self) -> &'static str {
        match self {
            OperatorTag::LG => "L_G",
            OperatorTag::LF => "L_F",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable,
    Marginal,
}

impl Verdict {
    pub fn from_max_real(max_re: f64, margin: f64) -> Self {
        if max_re < -margin {
            Verdict::Stable
        } else if max_re > margin {
            Verdict::Unstable
        } else {
            Verdict::Marginal
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Marginal => "marginal",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub operator: OperatorTag,
    pub resolution: (usize, usize),
    /// Sorted by decreasing real part.
    pub eigenvalues: Vec<Complex64>,
    pub max_real_part: f64,
    pub verdict: Verdict,
}

impl SpectrumReport {
    pub fn from_eigenvalues(
        operator: OperatorTag,
        resolution: (usize, usize),
        mut eigenvalues: Vec<Complex64>,
        margin: f64,
    ) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::Eigen("empty spectrum".into()));
        }
        if eigenvalues.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Eigen("non-finite eigenvalue".into()));
        }
        eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
        let max_real_part = eigenvalues[0].re;
        Ok(SpectrumReport {
            operator,
            resolution,
            eigenvalues,
            max_real_part,
            verdict: Verdict::from_max_real(max_real_part, margin),
        })
    }

    pub fn max_imag_abs(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    /// One `re,im` line per eigenvalue.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("re,im\n");
        for z in &self.eigenvalues {
            let _ = writeln!(s, "{:.17e},{:.17e}", z.re, z.im);
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "{} {}x{}: {} eigenvalues, max Re = {:.9e}, verdict {}",
            self.operator.name(),
            self.resolution.0,
            self.resolution.1,
            self.eigenvalues.len(),
            self.max_real_part,
            self.verdict.name()
        )
    }
}

/// Full eigendecomposition of a dense matrix.
pub fn compute_spectrum(
    matrix: &Array2<f64>,
    operator: OperatorTag,
    resolution: (usize, usize),
    margin: f64,
) -> Result<SpectrumReport> {
    if !(margin >= 0.0) {
        return Err(Error::Config(format!("stability margin must be non-negative, got {margin}")));
    }
    if !matrix.is_square() || matrix.nrows() > 8192 {
        return Err(Error::Config(format!(
            "dense spectrum needs a square matrix of size <= 8192, got {:?}",
            matrix.dim()
        )));
    }
    let eig = matrix.eigvals().map_err(|e| Error::Eigen(e.to_string()))?;
    SpectrumReport::from_eigenvalues(operator, resolution, eig.to_vec(), margin)
}

/// Eigenvalues of A = [[0, I], [-B1, -B2]].
///
/// When the moduli of the spectrum split across a wide gap, dense
/// eigenvalues of A are accurate only for the large ones. The small ones
/// are then taken as reciprocals of the eigenvalues of
/// A^{-1} = [[-B1^{-1} B2, -B1^{-1}], [I, 0]], which is formed blockwise.
pub fn block_companion_eigenvalues(b1: &Array2<f64>, b2: &Array2<f64>) -> Result<Vec<Complex64>> {
    let n = b1.nrows();
    let mut a = Array2::<f64>::zeros((2 * n, 2 * n));
    for i in 0..n {
        a[[i, n + i]] = 1.0;
        for j in 0..n {
            a[[n + i, j]] = -b1[[i, j]];
            a[[n + i, n + j]] = -b2[[i, j]];
        }
    }
    let direct = a.eigvals().map_err(|e| Error::Eigen(e.to_string()))?.to_vec();

    let mut moduli: Vec<f64> = direct.iter().map(|z| z.norm()).collect();
    moduli.sort_by(f64::total_cmp);
    // widest relative gap between consecutive moduli
    let (mut split, mut ratio) = (0, 1.0);
    for k in 1..moduli.len() {
        let r = moduli[k] / moduli[k - 1].max(f64::MIN_POSITIVE);
        if r > ratio {
            (split, ratio) = (k, r);
        }
    }
    if ratio < 1e3 {
        return Ok(direct);
    }
    let cut = (moduli[split] * moduli[split - 1]).sqrt();
    let Ok(b1_inv) = b1.inv() else {
        return Ok(direct);
    };
    let top = -b1_inv.dot(b2);
    let mut a_inv = Array2::<f64>::zeros((2 * n, 2 * n));
    for i in 0..n {
        a_inv[[n + i, i]] = 1.0;
        for j in 0..n {
            a_inv[[i, j]] = top[[i, j]];
            a_inv[[i, n + j]] = -b1_inv[[i, j]];
        }
    }
    let reciprocal = a_inv.eigvals().map_err(|e| Error::Eigen(e.to_string()))?;
    let small: Vec<Complex64> = reciprocal
        .iter()
        .filter(|nu| nu.norm() > 1.0 / cut)
        .map(|nu| 1.0 / nu)
        .collect();
    if small.len() != split {
        return Ok(direct);
    }
    let mut out: Vec<Complex64> = direct.into_iter().filter(|z| z.norm() >= cut).collect();
    out.extend(small);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn stiff_companion_keeps_small_roots_accurate() {
        // scalar blocks: lambda^2 + b lambda + c with roots near -c/b and -b
        let (b, c) = (6.0e12, 1.7e16);
        let eig = block_companion_eigenvalues(&array![[c]], &array![[b]]).unwrap();
        let disc = (b * b - 4.0 * c).sqrt();
        let small = -2.0 * c / (b + disc);
        let large = -(b + disc) / 2.0;
        let mut got: Vec<f64> = eig.iter().map(|z| z.re).collect();
        got.sort_by(f64::total_cmp);
        assert!((got[0] - large).abs() < 1e-14 * large.abs());
        assert!((got[1] - small).abs() < 1e-14 * small.abs(), "{} vs {small}", got[1]);
    }

    #[test]
    fn diagonal_matrix_is_stable() {
        let a = array![[-1.0, 0.0], [0.0, -2.0]];
        let rep = compute_spectrum(&a, OperatorTag::LG, (2, 1), DEFAULT_MARGIN).unwrap();
        assert_eq!(rep.verdict, Verdict::Stable);
        assert_eq!(rep.max_real_part, -1.0);
    }

    #[test]
    fn verdict_uses_the_margin_on_both_sides() {
        assert_eq!(Verdict::from_max_real(-1e-9, 1e-8), Verdict::Marginal);
        assert_eq!(Verdict::from_max_real(1e-9, 1e-8), Verdict::Marginal);
        assert_eq!(Verdict::from_max_real(2e-8, 1e-8), Verdict::Unstable);
        assert_eq!(Verdict::from_max_real(-2e-8, 1e-8), Verdict::Stable);
    }

    #[test]
    fn rotation_generator_is_marginal_and_csv_lists_pairs() {
        let a = array![[0.0, 1.0], [-1.0, 0.0]];
        let rep = compute_spectrum(&a, OperatorTag::LF, (1, 1), DEFAULT_MARGIN).unwrap();
        assert_eq!(rep.verdict, Verdict::Marginal);
        let csv = rep.to_csv();
        assert!(csv.starts_with("re,im\n"));
        assert_eq!(csv.lines().count(), 3);
        assert!((rep.max_imag_abs() - 1.0).abs() < 1e-14);
    }
}
