//! Uniform cell-centred mesh of the unwrapped film and scalar fields on it.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::physics::{AuxFunctions, PhysicalParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryX1 {
    Periodic,
    /// Zero pressure on x1 = 0 and x1 = L1.
    Dirichlet,
}

/// Cell `(i, j)` has centre `((i + 1/2) dx1, (j + 1/2) dx2)` and linear index
/// `j * n1 + i`. The x2 boundaries always carry zero Dirichlet data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub n1: usize,
    pub n2: usize,
    pub l1: f64,
    pub l2: f64,
    pub dx1: f64,
    pub dx2: f64,
    pub bc_x1: BoundaryX1,
}

impl Grid {
    pub fn new(n1: usize, n2: usize, l1: f64, l2: f64, bc_x1: BoundaryX1) -> Result<Self> {
        if n1 < 4 || n2 < 4 {
            return Err(Error::Config(format!("grid needs at least 4 cells per axis, got {n1}x{n2}")));
        }
        if !(l1 > 0.0 && l2 > 0.0 && l1.is_finite() && l2.is_finite()) {
            return Err(Error::Config(format!("domain extents must be positive, got {l1} x {l2}")));
        }
        Ok(Grid {
            n1,
            n2,
            l1,
            l2,
            dx1: l1 / n1 as f64,
            dx2: l2 / n2 as f64,
            bc_x1,
        })
    }

    /// Unwrapped journal film [0, 2 pi J_r] x [0, B], periodic in x1.
    pub fn journal(params: &PhysicalParams, n1: usize, n2: usize) -> Result<Self> {
        Grid::new(
            n1,
            n2,
            2.0 * std::f64::consts::PI * params.j_r,
            params.b,
            BoundaryX1::Periodic,
        )
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n1 + i
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.dx1 * self.dx2
    }

    pub fn area(&self) -> f64 {
        self.l1 * self.l2
    }

    #[inline]
    pub fn center(&self, c: usize) -> (f64, f64) {
        let i = c % self.n1;
        let j = c / self.n1;
        ((i as f64 + 0.5) * self.dx1, (j as f64 + 0.5) * self.dx2)
    }
}

/// One value per cell of a grid; never contains NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::State(format!(
                "field has {} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(c) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::State(format!("NaN in field at cell {c}")));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        ScalarField {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|c| {
                let (x1, x2) = grid.center(c);
                f(x1, x2)
            })
            .collect();
        ScalarField { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Values along x2 = L2/2: the middle row for odd n2, the mean of the two
    /// central rows otherwise.
    pub fn midline(&self) -> Vec<f64> {
        let g = &self.grid;
        let row = |j: usize| &self.values[j * g.n1..(j + 1) * g.n1];
        if g.n2 % 2 == 1 {
            row(g.n2 / 2).to_vec()
        } else {
            let (a, b) = (row(g.n2 / 2 - 1), row(g.n2 / 2));
            a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
        }
    }
}

/// Film thickness h0 (1 - ecc cos(x1 / J_r)) at the cell centres.
pub fn gap_function(grid: &Grid, params: &PhysicalParams) -> Result<ScalarField> {
    if !(0.0..1.0).contains(&params.ecc) {
        return Err(Error::Key {
            key: "ecc".into(),
            msg: format!("eccentricity {} must lie in [0, 1)", params.ecc),
        });
    }
    let (h0, ecc, j_r) = (params.h0, params.ecc, params.j_r);
    Ok(ScalarField::from_fn(*grid, |x1, _| h0 * (1.0 - ecc * (x1 / j_r).cos())))
}

/// h - min h.
pub fn h_plus(h: &ScalarField) -> ScalarField {
    let m = h.min();
    h.map(|v| v - m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldNorms {
    pub l2: f64,
    pub linf: f64,
    pub l1: f64,
}

pub fn field_norms(field: &ScalarField) -> FieldNorms {
    let da = field.grid.cell_area();
    let (mut sq, mut abs, mut linf) = (0.0, 0.0, 0.0f64);
    for &v in &field.values {
        sq += v * v;
        abs += v.abs();
        linf = linf.max(v.abs());
    }
    FieldNorms {
        l2: (sq * da).sqrt(),
        linf,
        l1: abs * da,
    }
}

pub const FIELD_CSV_HEADER: &str = "x1,x2,R_hat,p_scaled,p_gauge_Pa,alpha";

/// Nine significant digits in scientific notation.
pub fn fmt9(v: f64) -> String {
    format!("{v:.8e}")
}

/// Renders R and p in the field CSV layout.
pub fn fields_csv(r: &ScalarField, p: &ScalarField, params: &PhysicalParams) -> String {
    let aux = AuxFunctions::new(params);
    let g = r.grid();
    let mut out = String::with_capacity(80 * g.len());
    out.push_str(FIELD_CSV_HEADER);
    out.push('\n');
    for c in 0..g.len() {
        let (x1, x2) = g.center(c);
        let (rv, pv) = (r.values[c], p.values[c]);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt9(x1),
            fmt9(x2),
            fmt9(rv / params.r0),
            fmt9(pv),
            fmt9(pv * params.rho_l),
            fmt9(aux.alpha(rv))
        );
    }
    out
}

pub fn write_fields_csv(
    path: &Path,
    r: &ScalarField,
    p: &ScalarField,
    params: &PhysicalParams,
) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(fields_csv(r, p, params).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Reads back R and p from a field CSV written for the same grid.
pub fn read_fields_csv(
    path: &Path,
    grid: &Grid,
    params: &PhysicalParams,
) -> Result<(ScalarField, ScalarField)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(path, e))?
        .unwrap_or_default();
    if header.trim() != FIELD_CSV_HEADER {
        return Err(Error::State(format!("{}: unexpected header `{header}`", path.display())));
    }
    let mut r = Vec::with_capacity(grid.len());
    let mut p = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let parse = |k: usize| -> Result<f64> {
            cols.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::State(format!("{}: malformed row `{line}`", path.display())))
        };
        r.push(parse(2)? * params.r0);
        p.push(parse(3)?);
    }
    Ok((ScalarField::new(*grid, r)?, ScalarField::new(*grid, p)?))
}
