use std::f64::consts::PI;
use std::fmt::Write as _;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::physics::Model;

/// Constants of the mode polynomial for a parallel film of gap h0:
/// sigma1 = b4^2 b_r^2 / (b3^2 h0^4), sigma2 = b5 b_r / (b3 h0^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeConstants {
    pub b1: f64,
    pub b2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl ModeConstants {
    pub fn from_model(model: &Model) -> Self {
        let d = &model.derived;
        let h2 = model.params.h0 * model.params.h0;
        ModeConstants {
            b1: d.b1,
            b2: d.b2,
            sigma1: (d.b4 * d.b_r / (d.b3 * h2)).powi(2),
            sigma2: d.b5 * d.b_r / (d.b3 * h2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HurwitzReport {
    pub k: (u32, u32),
    /// pi^2 (k1^2 / L1^2 + k2^2 / L2^2); pi^2 |k|^2 on the unit square.
    pub q: f64,
    pub u_norm: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    /// Delta_1..Delta_4 from the closed forms.
    pub deltas: [f64; 4],
    /// The same determinants expanded exactly from the Hurwitz matrices,
    /// with entries formed in rational arithmetic from the f64 inputs.
    pub deltas_direct: [f64; 4],
    /// Sign changes along (alpha0, D1, D2/D1, D3/D2, D4/D3).
    pub sign_changes: usize,
    pub u_crit_sq: f64,
}

impl HurwitzReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode {} {}", self.k.0, self.k.1);
        let _ = writeln!(s, "q {:.17e}", self.q);
        let _ = writeln!(s, "U_norm {:.17e}", self.u_norm);
        for (name, v) in [
            ("alpha0", self.alpha0),
            ("beta0", self.beta0),
            ("alpha1", self.alpha1),
            ("beta1", self.beta1),
            ("alpha2", self.alpha2),
        ] {
            let _ = writeln!(s, "{name} {v:.17e}");
        }
        for i in 0..4 {
            let _ = writeln!(s, "Delta{} {:.17e} direct {:.17e}", i + 1, self.deltas[i], self.deltas_direct[i]);
        }
        let _ = writeln!(s, "sign_changes {}", self.sign_changes);
        let _ = writeln!(s, "U_crit_sq {:.17e}", self.u_crit_sq);
        let _ = writeln!(s, "U_crit {:.17e}", self.u_crit_sq.sqrt());
        s
    }
}

/// Cofactor expansion along the first row.
fn det_exact(m: &[Vec<BigRational>]) -> BigRational {
    let n = m.len();
    if n == 1 {
        return m[0][0].clone();
    }
    let mut sum = BigRational::zero();
    for j in 0..n {
        if m[0][j].is_zero() {
            continue;
        }
        let minor: Vec<Vec<BigRational>> = m[1..]
            .iter()
            .map(|row| row.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, v)| v.clone()).collect())
            .collect();
        let term = &m[0][j] * det_exact(&minor);
        if j % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    sum
}

/// Leading principal minors of the 4x4 Hurwitz matrix, exactly.
fn hurwitz_minors_exact(b1: f64, b2: f64, s1: f64, s2: f64, q: f64, u2: f64) -> [f64; 4] {
    let r = |x: f64| BigRational::from_float(x);
    let (Some(b1), Some(b2), Some(s1), Some(s2), Some(q), Some(u2)) = (r(b1), r(b2), r(s1), r(s2), r(q), r(u2)) else {
        return [f64::NAN; 4];
    };
    let n = |k: i64| BigRational::from_integer(k.into());
    let a0 = n(4) * &q;
    let be0 = n(4) * &s2 + n(8) * &q * &b2;
    let a1 = n(4) * &s2 * &b2 + n(4) * &q * (&b2 * &b2 + n(2) * &b1);
    let be1 = n(4) * &s2 * &b1 + n(8) * &q * &b1 * &b2;
    let a2 = n(4) * &q * &b1 * &b1 + &s1 * &u2;
    let z = BigRational::zero();
    let h = [
        [be0.clone(), be1.clone(), z.clone(), z.clone()],
        [a0.clone(), a1.clone(), a2.clone(), z.clone()],
        [z.clone(), be0, be1, z.clone()],
        [z, a0, a1, a2],
    ];
    std::array::from_fn(|k| {
        let sub: Vec<Vec<BigRational>> = h[..=k].iter().map(|row| row[..=k].to_vec()).collect();
        det_exact(&sub).to_f64().unwrap_or(f64::NAN)
    })
}

fn sign_changes(seq: &[f64]) -> usize {
    let signs: Vec<bool> = seq.iter().filter(|v| **v != 0.0).map(|v| *v > 0.0).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Routh-Hurwitz data of the quartic satisfied by the L_F eigenvalues of
/// Dirichlet mode k on an L1 x L2 rectangle at surface speed `u_norm`.
pub fn hurwitz_analysis(c: &ModeConstants, domain: (f64, f64), u_norm: f64, k: (u32, u32)) -> Result<HurwitzReport> {
    if k.0 == 0 || k.1 == 0 {
        return Err(Error::Domain {
            what: "mode index",
            value: 0.0,
        });
    }
    if !(domain.0 > 0.0 && domain.1 > 0.0) {
        return Err(Error::Config(format!("domain extents must be positive, got {domain:?}")));
    }
    let ModeConstants { b1, b2, sigma1: s1, sigma2: s2 } = *c;
    let q = PI * PI * ((k.0 as f64 / domain.0).powi(2) + (k.1 as f64 / domain.1).powi(2));
    let u2 = u_norm * u_norm;

    let alpha0 = 4.0 * q;
    let beta0 = 4.0 * s2 + 8.0 * q * b2;
    let alpha1 = 4.0 * s2 * b2 + 4.0 * q * (b2 * b2 + 2.0 * b1);
    let beta1 = 4.0 * s2 * b1 + 8.0 * q * b1 * b2;
    let alpha2 = 4.0 * q * b1 * b1 + s1 * u2;

    let d1 = beta0;
    let d2 = beta0 * (4.0 * s2 * b2 + 4.0 * q * (b2 * b2 + b1));
    let d3 = (320.0 * b1 * b2 * b2 * q - 16.0 * s1 * u2) * s2 * s2
        + (512.0 * b1 * b2.powi(3) * q * q - 64.0 * b2 * q * s1 * u2) * s2
        - 64.0 * b2 * b2 * q * q * s1 * u2
        + 256.0 * b1 * b2.powi(4) * q.powi(3)
        + 64.0 * b1 * b2 * s2.powi(3);
    let d4 = alpha2 * d3;

    let deltas_direct = hurwitz_minors_exact(b1, b2, s1, s2, q, u2);

    Ok(HurwitzReport {
        k,
        q,
        u_norm,
        alpha0,
        beta0,
        alpha1,
        beta1,
        alpha2,
        deltas: [d1, d2, d3, d4],
        deltas_direct,
        sign_changes: sign_changes(&[alpha0, d1, d2 / d1, d3 / d2, d4 / d3]),
        u_crit_sq: 4.0 * b1 * b2 * (b2 * q + s2) / s1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalSpeed {
    pub u_crit: f64,
    pub k: (u32, u32),
}

/// Smallest mode-wise critical speed over k1, k2 in 1..=kmax.
pub fn critical_speed(c: &ModeConstants, domain: (f64, f64), kmax: u32) -> Result<CriticalSpeed> {
    if kmax == 0 {
        return Err(Error::Config("mode cap must be at least 1".into()));
    }
    let mut best: Option<CriticalSpeed> = None;
    for k1 in 1..=kmax {
        for k2 in 1..=kmax {
            let rep = hurwitz_analysis(c, domain, 0.0, (k1, k2))?;
            let u = rep.u_crit_sq.sqrt();
            if best.is_none_or(|b| u < b.u_crit) {
                best = Some(CriticalSpeed { u_crit: u, k: (k1, k2) });
            }
        }
    }
    Ok(best.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::PhysicalParams;

    fn reference() -> ModeConstants {
        ModeConstants::from_model(&Model::new(PhysicalParams::reference()).unwrap())
    }

    #[test]
    fn zero_mode_index_is_rejected() {
        assert!(matches!(
            hurwitz_analysis(&reference(), (1.0, 1.0), 1.0, (0, 2)),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn resting_film_has_no_sign_change() {
        let rep = hurwitz_analysis(&reference(), (1.0, 1.0), 0.0, (1, 1)).unwrap();
        assert!(rep.deltas[2] > 0.0);
        assert_eq!(rep.sign_changes, 0);
    }

    #[test]
    fn sign_change_appears_just_above_critical_speed() {
        let c = reference();
        let base = hurwitz_analysis(&c, (1.0, 1.0), 0.0, (2, 1)).unwrap();
        let u = (base.u_crit_sq * (1.0 + 1e-6)).sqrt();
        let rep = hurwitz_analysis(&c, (1.0, 1.0), u, (2, 1)).unwrap();
        assert!(rep.deltas[2] < 0.0);
        assert!(rep.sign_changes >= 1);
        let below = hurwitz_analysis(&c, (1.0, 1.0), (base.u_crit_sq * (1.0 - 1e-6)).sqrt(), (2, 1)).unwrap();
        assert_eq!(below.sign_changes, 0);
    }

    #[test]
    fn delta4_is_alpha2_times_delta3() {
        let rep = hurwitz_analysis(&reference(), (1.0, 1.0), 3.0e5, (1, 2)).unwrap();
        assert_eq!(rep.deltas[3], rep.alpha2 * rep.deltas[2]);
    }

    #[test]
    fn isotropic_minimum_is_the_first_mode() {
        let c = ModeConstants {
            b1: 2.0,
            b2: 0.5,
            sigma1: 0.3,
            sigma2: 1.5,
        };
        let crit = critical_speed(&c, (1.0, 1.0), 8).unwrap();
        assert_eq!(crit.k, (1, 1));
        // sign scan of Delta3 in |U|
        let mut flip = None;
        for i in 0..4000 {
            let u = crit.u_crit * (0.5 + i as f64 * 2.5e-4);
            if hurwitz_analysis(&c, (1.0, 1.0), u, (1, 1)).unwrap().deltas[2] < 0.0 {
                flip = Some(u);
                break;
            }
        }
        let flip = flip.unwrap();
        assert!((flip - crit.u_crit).abs() <= 2.5e-4 * crit.u_crit);
    }
}
