//! Closure functions of the bubbly-film model, physical parameters and the
//! equilibrium constants derived from them.

use std::fmt;

use crate::error::{Error, Result};

/// Scalar inputs of the journal-bearing problem, SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    pub rho_l: f64,
    pub mu_l: f64,
    pub rho_g: f64,
    pub mu_g: f64,
    /// Surface dilatational viscosity (Pa s m).
    pub kappa_s: f64,
    pub k_poly: f64,
    pub sigma: f64,
    /// Bubble inner pressure at radius `r0` (Pa).
    pub p0: f64,
    /// Pressure at the film boundary (Pa).
    pub p_bnd: f64,
    pub r0: f64,
    pub alpha0: f64,
    /// Journal radius (m).
    pub j_r: f64,
    /// Journal width (m).
    pub b: f64,
    /// Radial clearance (m).
    pub h0: f64,
    pub ecc: f64,
    /// Rotational speed (rad/s).
    pub omega: f64,
}

/// Names used for the parameters in configuration files, in declaration order.
pub const PARAM_KEYS: [&str; 16] = [
    "rho_l", "mu_l", "rho_g", "mu_g", "kappa_s", "k_poly", "sigma", "P0", "p_bnd", "R0", "alpha0",
    "J_r", "B", "h0", "ecc", "omega",
];

pub const ATM: f64 = 101_325.0;

/// Bubble inner pressure that makes `r0` the equilibrium radius at `p_bnd`.
pub fn equilibrium_p0(p_bnd: f64, sigma: f64, r0: f64) -> f64 {
    p_bnd + 2.0 * sigma / r0
}

impl PhysicalParams {
    /// Oil-lubricated journal bearing at 1000 rpm with R0 the equilibrium
    /// radius at 1 atm, which fixes P0 = p_bnd + 2 sigma / R0.
    pub fn reference() -> Self {
        let sigma = 3.5e-2;
        let r0 = 3.85e-7;
        let j_r = 25.4e-3;
        PhysicalParams {
            rho_l: 854.0,
            mu_l: 7.1e-3,
            rho_g: 1.0,
            mu_g: 1.81e-5,
            kappa_s: 7.85e-5,
            k_poly: 1.4,
            sigma,
            p0: equilibrium_p0(ATM, sigma, r0),
            p_bnd: ATM,
            r0,
            alpha0: 0.1,
            j_r,
            b: 25.4e-3,
            h0: 0.001 * j_r,
            ecc: 0.0,
            omega: 2.0 * std::f64::consts::PI * 1000.0 / 60.0,
        }
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        Some(match key {
            "rho_l" => self.rho_l,
            "mu_l" => self.mu_l,
            "rho_g" => self.rho_g,
            "mu_g" => self.mu_g,
            "kappa_s" => self.kappa_s,
            "k_poly" => self.k_poly,
            "sigma" => self.sigma,
            "P0" => self.p0,
            "p_bnd" => self.p_bnd,
            "R0" => self.r0,
            "alpha0" => self.alpha0,
            "J_r" => self.j_r,
            "B" => self.b,
            "h0" => self.h0,
            "ecc" => self.ecc,
            "omega" => self.omega,
            _ => return None,
        })
    }

    /// Sets a parameter by its configuration key. Returns false for unknown keys.
    pub fn set(&mut self, key: &str, value: f64) -> bool {
        let slot = match key {
            "rho_l" => &mut self.rho_l,
            "mu_l" => &mut self.mu_l,
            "rho_g" => &mut self.rho_g,
            "mu_g" => &mut self.mu_g,
            "kappa_s" => &mut self.kappa_s,
            "k_poly" => &mut self.k_poly,
            "sigma" => &mut self.sigma,
            "P0" => &mut self.p0,
            "p_bnd" => &mut self.p_bnd,
            "R0" => &mut self.r0,
            "alpha0" => &mut self.alpha0,
            "J_r" => &mut self.j_r,
            "B" => &mut self.b,
            "h0" => &mut self.h0,
            "ecc" => &mut self.ecc,
            "omega" => &mut self.omega,
            _ => return false,
        };
        *slot = value;
        true
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Key {
                key: key.to_string(),
                msg: msg.to_string(),
            })
        };
        for key in PARAM_KEYS {
            if !self.get(key).unwrap().is_finite() {
                return bad(key, "must be finite");
            }
        }
        for key in [
            "rho_l", "mu_l", "rho_g", "mu_g", "sigma", "P0", "R0", "h0", "J_r", "B",
        ] {
            if self.get(key).unwrap() <= 0.0 {
                return bad(key, "must be strictly positive");
            }
        }
        if self.kappa_s < 0.0 {
            return bad("kappa_s", "must be non-negative");
        }
        if !(0.0..1.0).contains(&self.alpha0) {
            return bad("alpha0", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.ecc) {
            return bad("ecc", "eccentricity must lie in [0, 1)");
        }
        if (self.k_poly - 1.0).abs() > 1e-12 && (self.k_poly - 1.4).abs() > 1e-12 {
            return bad("k_poly", "only the isothermal (1) and adiabatic (1.4) exponents are supported");
        }
        Ok(())
    }

    /// Surface speed of the journal, directed along x1.
    pub fn surface_velocity(&self) -> [f64; 2] {
        [self.omega * self.j_r, 0.0]
    }
}

/// Evaluators for f1..f5, the gas fraction and the mixture properties.
///
/// The methods do not check their argument; use the `eval_*` functions for
/// checked scalar evaluation.
#[derive(Debug, Clone, Copy)]
pub struct AuxFunctions {
    p: PhysicalParams,
    three_k: f64,
    gas_ratio: f64,
}

impl AuxFunctions {
    pub fn new(params: &PhysicalParams) -> Self {
        AuxFunctions {
            p: *params,
            three_k: 3.0 * params.k_poly,
            gas_ratio: params.rho_g / params.rho_l,
        }
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.p
    }

    #[inline]
    fn gas_pressure(&self, r: f64) -> f64 {
        self.p.p0 * (self.p.r0 / r).powf(self.three_k)
    }

    #[inline]
    pub fn f1(&self, r: f64) -> f64 {
        (self.gas_pressure(r) - self.p.p_bnd - 2.0 * self.p.sigma / r) / self.p.rho_l
    }

    #[inline]
    pub fn f1_prime(&self, r: f64) -> f64 {
        (-self.three_k * self.gas_pressure(r) / r + 2.0 * self.p.sigma / (r * r)) / self.p.rho_l
    }

    #[inline]
    pub fn f2(&self, r: f64) -> f64 {
        4.0 * (self.p.mu_l + self.p.kappa_s / r) / (self.p.rho_l * r * r)
    }

    #[inline]
    pub fn f2_prime(&self, r: f64) -> f64 {
        -(8.0 * self.p.mu_l / r + 12.0 * self.p.kappa_s / (r * r)) / (self.p.rho_l * r * r)
    }

    #[inline]
    pub fn alpha(&self, r: f64) -> f64 {
        let x = r / self.p.r0;
        let v = self.p.alpha0 * x * x * x;
        v / (1.0 + v)
    }

    #[inline]
    pub fn alpha_prime(&self, r: f64) -> f64 {
        let x = r / self.p.r0;
        let d = 1.0 + self.p.alpha0 * x * x * x;
        3.0 * self.p.alpha0 * x * x / (self.p.r0 * d * d)
    }

    /// Mixture density for gas fraction `a`.
    #[inline]
    pub fn rho_mix(&self, a: f64) -> f64 {
        a * self.p.rho_g + (1.0 - a) * self.p.rho_l
    }

    /// Effective viscosity for gas fraction `a` (linear blend).
    #[inline]
    pub fn mu_eff(&self, a: f64) -> f64 {
        a * self.p.mu_g + (1.0 - a) * self.p.mu_l
    }

    /// Film mobility rho_mix / (12 mu_eff). The pressure unknown is p/rho_l,
    /// so the density enters here in full rather than as the ratio to rho_l.
    #[inline]
    fn f3_of_alpha(&self, a: f64) -> f64 {
        self.rho_mix(a) / (12.0 * self.mu_eff(a))
    }

    #[inline]
    pub fn f3(&self, r: f64) -> f64 {
        self.f3_of_alpha(self.alpha(r))
    }

    #[inline]
    pub fn f3_prime(&self, r: f64) -> f64 {
        let a = self.alpha(r);
        let mu = self.mu_eff(a);
        let num = (self.p.rho_g - self.p.rho_l) * mu - self.rho_mix(a) * (self.p.mu_g - self.p.mu_l);
        num / (12.0 * mu * mu) * self.alpha_prime(r)
    }

    /// Lower and upper bounds of f3 over all radii (its values at alpha = 0 and 1).
    pub fn f3_bounds(&self) -> (f64, f64) {
        let a = self.f3_of_alpha(0.0);
        let b = self.f3_of_alpha(1.0);
        (a.min(b), a.max(b))
    }

    #[inline]
    pub fn f4(&self, r: f64) -> f64 {
        0.5 * (1.0 + self.alpha(r) * (self.gas_ratio - 1.0))
    }

    #[inline]
    pub fn f4_prime(&self, r: f64) -> f64 {
        0.5 * (self.gas_ratio - 1.0) * self.alpha_prime(r)
    }

    /// df4/dalpha times dalpha/dR, which coincides with `f4_prime`.
    #[inline]
    pub fn f5(&self, r: f64) -> f64 {
        self.f4_prime(r)
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { what: "R", value: r })
    }
}

macro_rules! checked_eval {
    ($(#[$m:meta])* $name:ident, $method:ident) => {
        $(#[$m])*
        pub fn $name(r: f64, params: &PhysicalParams) -> Result<f64> {
            check_radius(r)?;
            Ok(AuxFunctions::new(params).$method(r))
        }
    };
}

checked_eval!(
    /// (P0 (R0/R)^{3k} - p_bnd - 2 sigma/R) / rho_l, in m^2/s^2.
    eval_f1, f1
);
checked_eval!(eval_f1_prime, f1_prime);
checked_eval!(
    /// Viscous damping coefficient 4 (mu_l + kappa_s/R) / (rho_l R^2).
    eval_f2, f2
);
checked_eval!(eval_alpha, alpha);
checked_eval!(eval_f3, f3);
checked_eval!(eval_f4, f4);
checked_eval!(eval_f5, f5);

/// Equilibrium radius, critical radius and linearization constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    pub r_bar: f64,
    pub r_crit: f64,
    /// Minimum of f1, reached at `r_crit`.
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

impl DerivedConstants {
    pub fn rhat_crit(&self, params: &PhysicalParams) -> f64 {
        self.r_crit / params.r0
    }
}

/// Bisection on a bracket with f(lo) and f(hi) of opposite signs, carried to
/// machine precision.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo = f(lo);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (f_lo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn compute_derived(params: &PhysicalParams) -> Result<DerivedConstants> {
    let aux = AuxFunctions::new(params);
    let lo = 1e-3 * params.r0;
    if aux.f1_prime(lo) >= 0.0 {
        return Err(Error::Config(format!(
            "f1 is not decreasing at R = {lo:e}; no critical radius"
        )));
    }
    let mut hi = params.r0;
    let mut doublings = 0;
    while aux.f1_prime(hi) <= 0.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 || !hi.is_finite() {
            return Err(Error::Config("f1' never changes sign; no critical radius".into()));
        }
    }
    let r_crit = bisect(|r| aux.f1_prime(r), lo, hi);
    let p_cav = aux.f1(r_crit);
    if !(aux.f1(lo) > 0.0 && p_cav < 0.0) {
        return Err(Error::Config(format!(
            "f1 has no sign change on [{lo:e}, {r_crit:e}]; no equilibrium radius"
        )));
    }
    let r_bar = bisect(|r| aux.f1(r), lo, r_crit);

    let f1p = aux.f1_prime(r_bar);
    let f2 = aux.f2(r_bar);
    let f3 = aux.f3(r_bar);
    Ok(DerivedConstants {
        r_bar,
        r_crit,
        p_cav,
        b1: -f1p / r_bar,
        b2: f2,
        b3: f3,
        b4: -aux.f4_prime(r_bar),
        b5: -aux.f5(r_bar),
        b_r: 1.0 / r_bar,
        d1: -f1p / (r_bar * f2),
        d2: 1.0 / (r_bar * f2),
        d3: r_bar * f3 * f2,
        d4: -aux.f4_prime(r_bar),
        d5: -aux.f5(r_bar),
    })
}

/// Parameters bundled with their closure evaluators and derived constants.
#[derive(Debug, Clone, Copy)]
pub struct Model {
    pub params: PhysicalParams,
    pub aux: AuxFunctions,
    pub derived: DerivedConstants,
}

impl Model {
    pub fn new(params: PhysicalParams) -> Result<Self> {
        params.validate()?;
        let derived = compute_derived(&params)?;
        Ok(Model {
            params,
            aux: AuxFunctions::new(&params),
            derived,
        })
    }

    pub fn rhat_crit(&self) -> f64 {
        self.derived.r_crit / self.params.r0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    H1,
    H2,
    H3,
    H4,
    H5,
    H6,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone)]
pub struct HypothesisOutcome {
    pub id: Hypothesis,
    pub passed: bool,
    /// First sampled radius at which the hypothesis fails.
    pub violation_at: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct HypothesisReport {
    pub interval: (f64, f64),
    pub outcomes: Vec<HypothesisOutcome>,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn outcome(&self, id: Hypothesis) -> &HypothesisOutcome {
        self.outcomes.iter().find(|o| o.id == id).expect("every hypothesis is reported")
    }
}

pub const HYPOTHESIS_SAMPLES: usize = 1000;

/// Samples the sign and bound conditions of the model functions on
/// `interval`. H6 concerns the gap and is evaluated from `h0` and `ecc`.
pub fn hypotheses_check(params: &PhysicalParams, interval: (f64, f64)) -> HypothesisReport {
    let aux = AuxFunctions::new(params);
    let (a, b) = interval;
    let n = HYPOTHESIS_SAMPLES;
    let radii: Vec<f64> = (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .filter(|r| *r > 0.0)
        .collect();
    let (m3, big_m3) = aux.f3_bounds();
    let slack = 1e-12 * big_m3;
    let f4_lo = 0.5 * params.rho_g / params.rho_l;

    let mut outcomes = Vec::with_capacity(6);
    let mut scan = |id, desc: &str, ok: &dyn Fn(f64) -> bool| {
        let violation_at = radii.iter().copied().find(|&r| !ok(r));
        outcomes.push(HypothesisOutcome {
            id,
            passed: violation_at.is_none() && radii.len() == n,
            violation_at,
            detail: desc.to_string(),
        });
    };
    scan(Hypothesis::H1, "f1' < 0", &|r| aux.f1_prime(r) < 0.0);
    scan(Hypothesis::H2, "f2 > 0", &|r| aux.f2(r) > 0.0);
    scan(Hypothesis::H3, "m3 <= f3 <= M3", &|r| {
        let v = aux.f3(r);
        v >= m3 - slack && v <= big_m3 + slack
    });
    scan(Hypothesis::H4, "rho_g/(2 rho_l) <= f4 <= 1/2 and f4' < 0", &|r| {
        let v = aux.f4(r);
        v >= f4_lo && v <= 0.5 && aux.f4_prime(r) < 0.0
    });
    scan(Hypothesis::H5, "f5 < 0", &|r| aux.f5(r) < 0.0);

    let h_min = params.h0 * (1.0 - params.ecc);
    outcomes.push(HypothesisOutcome {
        id: Hypothesis::H6,
        passed: h_min > 0.0 && params.ecc < 1.0,
        violation_at: None,
        detail: format!("gap bounded below by h0 (1 - ecc) = {h_min:e}"),
    });
    HypothesisReport {
        interval,
        outcomes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn literal_atm() -> PhysicalParams {
        PhysicalParams {
            p0: ATM,
            ..PhysicalParams::reference()
        }
    }

    #[test]
    fn f1_at_r0_with_one_atmosphere() {
        // (0 - 2 sigma / R0) / rho_l
        let v = eval_f1(3.85e-7, &literal_atm()).unwrap();
        assert!(rel(v, -212.90185224611454) < 1e-12, "{v}");
        assert!(rel(v, -212.87) < 2e-4);
    }

    #[test]
    fn f2_at_r0() {
        let v = eval_f2(3.85e-7, &PhysicalParams::reference()).unwrap();
        let expected = (4.0 / 854.0) * ((7.1e-3 + 7.85e-5 / 3.85e-7) / (3.85e-7f64).powi(2));
        assert!(rel(v, expected) < 1e-14);
        assert!(rel(v, 6443245979725.0729) < 1e-12);
    }

    #[test]
    fn f2_large_radius_limit() {
        let p = PhysicalParams::reference();
        let r = 1e6;
        let v = eval_f2(r, &p).unwrap();
        assert!(rel(v, 4.0 * p.mu_l / (p.rho_l * r * r)) < 1e-6);
    }

    #[test]
    fn non_positive_radius_is_a_domain_error() {
        let p = PhysicalParams::reference();
        for f in [eval_f1, eval_f2, eval_alpha, eval_f3, eval_f4, eval_f5] {
            assert!(matches!(f(0.0, &p), Err(Error::Domain { .. })));
            assert!(matches!(f(-1e-7, &p), Err(Error::Domain { .. })));
            assert!(f(f64::NAN, &p).is_err());
        }
    }

    #[test]
    fn alpha_values_and_limits() {
        let p = PhysicalParams::reference();
        assert!(rel(eval_alpha(p.r0, &p).unwrap(), 0.1 / 1.1) < 1e-15);
        assert!(eval_alpha(1e-12 * p.r0, &p).unwrap() < 1e-30);
        assert!(eval_alpha(1e6 * p.r0, &p).unwrap() > 1.0 - 1e-15);
        assert!(eval_alpha(2.0 * p.r0, &p).unwrap() > eval_alpha(p.r0, &p).unwrap());
    }

    #[test]
    fn f3_limits_and_bounds() {
        let p = PhysicalParams::reference();
        let aux = AuxFunctions::new(&p);
        assert!(rel(aux.f3(1e-6 * p.r0), p.rho_l / (12.0 * p.mu_l)) < 1e-12);
        assert!(rel(aux.f3(1e5 * p.r0), p.rho_g / (12.0 * p.mu_g)) < 1e-9);
        let (lo, hi) = aux.f3_bounds();
        for i in 0..=1000 {
            let r = p.r0 * 10f64.powf(-2.0 + 4.0 * i as f64 / 1000.0);
            let v = aux.f3(r);
            assert!(v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12));
        }
        assert!(rel(aux.f3(p.r0), 10022.092959400491) < 1e-12);
    }

    #[test]
    fn f4_f5_signs() {
        let p = PhysicalParams::reference();
        let aux = AuxFunctions::new(&p);
        assert!(rel(aux.f4(1e-9 * p.r0), 0.5) < 1e-15);
        assert!(aux.f4(2.0 * p.r0) < aux.f4(p.r0));
        for i in 0..=1000 {
            let r = p.r0 * (0.1 + 9.9 * i as f64 / 1000.0);
            assert!(aux.f5(r) < 0.0);
        }
        assert!(rel(aux.f5(p.r0), -321615.01764923678) < 1e-12);
    }

    #[test]
    fn mixture_properties_stay_between_phases() {
        let p = PhysicalParams::reference();
        let aux = AuxFunctions::new(&p);
        for i in 0..=100 {
            let a = i as f64 / 100.0;
            let rho = aux.rho_mix(a);
            let mu = aux.mu_eff(a);
            assert!(rho >= p.rho_g && rho <= p.rho_l);
            assert!(mu >= p.mu_g && mu <= p.mu_l);
        }
    }

    #[test]
    fn derived_constants_at_reference_values() {
        let p = PhysicalParams::reference();
        let d = compute_derived(&p).unwrap();
        // closed form of the critical radius: R^{3k-1} = 3k P0 R0^{3k} / (2 sigma)
        let rc = (3.0 * p.k_poly * p.p0 * p.r0.powf(3.0 * p.k_poly) / (2.0 * p.sigma))
            .powf(1.0 / (3.0 * p.k_poly - 1.0));
        assert!(rel(d.r_crit, rc) < 1e-12);
        assert!(rel(d.rhat_crit(&p), 1.7983766393674601) < 1e-12);
        assert!(rel(d.r_bar, 3.85e-7) < 1e-12);
        assert!(rel(d.p_cav, -208.84607420171646) < 1e-10);
        assert!(rel(d.b1, 7958209474236559.8) < 1e-9);
        assert!(rel(d.b2, 6443245979725.0729) < 1e-10);
        assert!(rel(d.b3, 10022.092959400491) < 1e-10);
        assert!(rel(d.b4, 321615.01764923678) < 1e-10);
        assert_eq!(d.b4, d.b5);
        assert!(rel(d.d1, 1235.1242679976233) < 1e-9);
        assert!(rel(d.d2, 4.0312019835589547e-7) < 1e-10);
        assert!(rel(d.d3, 24861301915.098946) < 1e-10);
        for c in [d.b1, d.b2, d.b3, d.b4, d.b5, d.d1, d.d2, d.d3, d.d4, d.d5] {
            assert!(c > 0.0);
        }
    }

    #[test]
    fn derived_constants_one_atmosphere() {
        let p = literal_atm();
        let d = compute_derived(&p).unwrap();
        assert!(d.r_bar < p.r0);
        assert!(rel(d.r_bar, 2.8765187126730959e-7) < 1e-11);
        assert!(rel(d.r_crit, 5.0219908211510617e-7) < 1e-11);
        assert!(rel(d.p_cav, -243.00302512580878) < 1e-10);
        assert!(rel(d.d1, 1103.2024082482115) < 1e-9);
        assert!(eval_f1(d.r_bar, &p).unwrap().abs() < 1e-8);
    }

    #[test]
    fn f1_shape_around_critical_radius() {
        let p = PhysicalParams::reference();
        let aux = AuxFunctions::new(&p);
        let d = compute_derived(&p).unwrap();
        for i in 1..=1000 {
            let r = d.r_crit * 4.0 * i as f64 / 1000.0;
            let s = aux.f1_prime(r);
            if r < d.r_crit * (1.0 - 1e-9) {
                assert!(s < 0.0, "f1' >= 0 at {r}");
            } else if r > d.r_crit * (1.0 + 1e-9) {
                assert!(s > 0.0, "f1' <= 0 at {r}");
            }
            assert!(aux.f1(r) >= d.p_cav);
        }
    }

    #[test]
    fn missing_sign_change_is_a_config_error() {
        // a huge boundary pressure leaves f1 negative on the whole bracket
        let p = PhysicalParams {
            p_bnd: 1e20,
            ..PhysicalParams::reference()
        };
        assert!(matches!(compute_derived(&p), Err(Error::Config(_))));
    }

    #[test]
    fn hypotheses_hold_below_critical_radius() {
        let p = PhysicalParams::reference();
        let d = compute_derived(&p).unwrap();
        let rep = hypotheses_check(&p, (0.5 * p.r0, 0.99 * d.r_crit));
        assert!(rep.all_passed(), "{rep:?}");

        let rep = hypotheses_check(&p, (0.5 * p.r0, 1.5 * d.r_crit));
        let h1 = rep.outcome(Hypothesis::H1);
        assert!(!h1.passed);
        assert!(h1.violation_at.unwrap() >= d.r_crit * (1.0 - 1e-3));
        assert!(rep.outcome(Hypothesis::H2).passed);

        let rep = hypotheses_check(&p, (0.01 * p.r0, 100.0 * p.r0));
        assert!(rep.outcome(Hypothesis::H3).passed);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut p = PhysicalParams::reference();
        p.ecc = 1.2;
        assert!(matches!(p.validate(), Err(Error::Key { ref key, .. }) if key == "ecc"));
        let mut p = PhysicalParams::reference();
        p.mu_l = 0.0;
        assert!(p.validate().is_err());
        let mut p = PhysicalParams::reference();
        p.k_poly = 2.0;
        assert!(p.validate().is_err());
        assert!(PhysicalParams::reference().validate().is_ok());
    }

    #[test]
    fn keys_round_trip_through_set_and_get() {
        let mut p = PhysicalParams::reference();
        for (i, key) in PARAM_KEYS.iter().enumerate() {
            assert!(p.set(key, i as f64 + 0.5));
            assert_eq!(p.get(key), Some(i as f64 + 0.5));
        }
        assert!(!p.set("nope", 1.0));
        assert_eq!(p.get("nope"), None);
    }
}
