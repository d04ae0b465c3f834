//! Explicit constants of the stability inequalities.

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::dist::gaussian_abs_moment;
use crate::error::{Error, Result};
use crate::psi::PsiRegime;
use crate::quadrature::{integrate, QuadOptions};

/// Upper end of the truncated integrals; the tail is below `e^{-40}`.
pub const INTEGRAL_UPPER: f64 = 80.0;

/// Loss factor of the diagonal argument; every per-step constant is divided
/// by it.
pub const DIAG_DIVISOR: f64 = 25.0;

/// Cap on `a₁²` used before diagonalizing.
pub fn diag_cap(n: usize) -> f64 {
    0.9 - 1.0 / n as f64
}

fn falling4(p: f64) -> f64 {
    p * (p - 1.0) * (p - 2.0) * (p - 3.0)
}

fn truncated_integral<F: Fn(f64) -> f64>(f: F, upper: f64) -> Result<f64> {
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-13,
        max_intervals: 2000,
    };
    Ok(integrate(f, 1.0, upper, opts)?.value)
}

fn kernel(t: f64) -> f64 {
    t / ((t + 1.0) * (t + 1.0).sqrt()) * (-(t + 1.0) / 2.0).exp()
}

/// `∫₁^∞ t/(t+1)^{3/2} · (2+√t)^{p−4} e^{−(t+1)/2} dt`, truncated at [`INTEGRAL_UPPER`].
pub fn integral_34(p: f64) -> Result<f64> {
    if !(p > 3.0 && p < 4.0) {
        return Err(Error::domain(format!("integral_34 needs 3 < p < 4, got {p}")));
    }
    integral_34_to(p, INTEGRAL_UPPER)
}

fn integral_34_to(p: f64, upper: f64) -> Result<f64> {
    truncated_integral(|t| kernel(t) * (2.0 + t.sqrt()).powf(p - 4.0), upper)
}

/// `∫₁^∞ t/(t+1)^{3/2} · (t−1)/t^{3/2} · e^{−(t+1)/2} dt`, truncated at [`INTEGRAL_UPPER`].
pub fn integral_p3() -> Result<f64> {
    integral_p3_to(INTEGRAL_UPPER)
}

fn integral_p3_to(upper: f64) -> Result<f64> {
    truncated_integral(|t| kernel(t) * (t - 1.0) / (t * t.sqrt()), upper)
}

/// `C̃_p = min{2^{(p−6)/2}, 2^{(p−4)/2} Γ((p−3)/2)/√π}`: the sharp constant in
/// `E|S|^{p−4} ≥ C̃_p (E S²)^{(p−4)/2}`.
pub fn haagerup_tilde(p: f64) -> Result<f64> {
    if !(p > 4.0 && p < 6.0) {
        return Err(Error::domain(format!("haagerup_tilde needs 4 < p < 6, got {p}")));
    }
    let left = 2f64.powf((p - 6.0) / 2.0);
    let right = 2f64.powf((p - 4.0) / 2.0) * libm::tgamma((p - 3.0) / 2.0) / PI.sqrt();
    Ok(left.min(right))
}

/// Factor in `E|S|^{p−4} ≥ factor · (E S²)^{(p−4)/2}`, for `p > 4`:
/// `C̃_p` below 6, and 1 from Jensen at and above 6.
pub fn khintchine_floor_factor(p: f64) -> Result<f64> {
    if p >= 6.0 {
        Ok(1.0)
    } else {
        haagerup_tilde(p)
    }
}

/// Constant in `E|G|^p − E|S|^p ≥ C_p Σaᵢ⁴`, before the ¼ for `a₁² > ½`.
pub fn gauss_constant(p: f64) -> Result<f64> {
    let regime = PsiRegime::from_p(p)?;
    let k = falling4(p);
    Ok(match regime {
        PsiRegime::P3 => 9.0 / (32.0 * (2.0 * PI).sqrt()) * integral_p3()?,
        PsiRegime::P3To4 => k * (1.0 - 2.0 / E) / (6.0 * (2.0 * PI).sqrt()) * integral_34(p)?,
        PsiRegime::P4 => 2.0,
        PsiRegime::PGt4 => {
            let base = 2f64.powf((4.0 - p) / 2.0) * 3.0 * k / 128.0;
            if p < 6.0 {
                base * haagerup_tilde(p)?
            } else {
                base
            }
        }
    })
}

/// Per-step constant of the diagonal argument, already divided by
/// [`DIAG_DIVISOR`]. For `p > 4` it scales with the caller's lower bound on
/// `E|S|^{p−4}`.
pub fn diag_constant(p: f64, moment_floor: f64) -> Result<f64> {
    if !(p.is_finite() && p > 3.0) {
        return Err(Error::domain(format!("diag_constant needs p > 3, got {p}")));
    }
    let k = falling4(p);
    Ok(if p < 4.0 {
        2.0 * (k / 6.0) * (1.0 - 2.0 / E) * (2.0 + 2f64.sqrt()).powf(p - 4.0) / DIAG_DIVISOR
    } else if p == 4.0 {
        8.0 / DIAG_DIVISOR
    } else {
        if !(moment_floor.is_finite() && moment_floor > 0.0) {
            return Err(Error::domain(format!("moment floor must be positive, got {moment_floor}")));
        }
        2.0 * (3.0 * k / 64.0) * moment_floor / DIAG_DIVISOR
    })
}

/// Constant of the `p = 3` inequality with the positive-part deficit.
pub fn crit_constant() -> f64 {
    2f64.powi(-6)
}

/// `C(p) = 2p E|G|^p` in `E|G|^p − E|Sₙ|^p ≤ C(p)/n`.
pub fn doubling_rate_constant(p: f64) -> Result<f64> {
    if !(p.is_finite() && p >= 3.0) {
        return Err(Error::domain(format!("doubling_rate_constant needs p >= 3, got {p}")));
    }
    Ok(2.0 * p * gaussian_abs_moment(p))
}

/// Worst-case floor on `E|S|^{p−4}` over vectors with `a₁² ≤ 0.9`, for `p > 4`.
pub fn worst_case_moment_floor(p: f64) -> Result<f64> {
    Ok(khintchine_floor_factor(p)? * (1.0 - 0.9f64).powf((p - 4.0) / 2.0))
}

/// Every constant at one exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantBundle {
    pub p: f64,
    #[serde(rename = "gauss_C")]
    pub gauss_c: f64,
    /// Diagonal constant; absent at `p = 3`, where the positive-part form applies.
    #[serde(rename = "diag_C")]
    pub diag_c: Option<f64>,
    /// Present only at `p = 3`.
    #[serde(rename = "crit_C")]
    pub crit_c: Option<f64>,
    #[serde(rename = "doubling_C")]
    pub doubling_c: f64,
    pub branch: PsiRegime,
    pub components: BTreeMap<String, f64>,
}

impl ConstantBundle {
    pub fn compute(p: f64) -> Result<Self> {
        let branch = PsiRegime::from_p(p)?;
        let mut components = BTreeMap::new();
        components.insert("falling4".to_string(), falling4(p));
        components.insert("gaussian_moment".to_string(), gaussian_abs_moment(p));
        let diag_c = match branch {
            PsiRegime::P3 => {
                components.insert("integral_p3".to_string(), integral_p3()?);
                None
            }
            PsiRegime::P3To4 => {
                components.insert("integral_34".to_string(), integral_34(p)?);
                Some(diag_constant(p, 1.0)?)
            }
            PsiRegime::P4 => Some(diag_constant(p, 1.0)?),
            PsiRegime::PGt4 => {
                components.insert("c_p".to_string(), 3.0 * falling4(p) / 64.0);
                if p < 6.0 {
                    components.insert("haagerup_tilde".to_string(), haagerup_tilde(p)?);
                }
                let floor = worst_case_moment_floor(p)?;
                components.insert("moment_floor".to_string(), floor);
                Some(diag_constant(p, floor)?)
            }
        };
        Ok(Self {
            p,
            gauss_c: gauss_constant(p)?,
            diag_c,
            crit_c: (branch == PsiRegime::P3).then(crit_constant),
            doubling_c: doubling_rate_constant(p)?,
            branch,
            components,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // 50-digit reference quadrature of the untruncated integrals
    const I3_REF: f64 = 0.083_698_702_557_621_6;
    const I34_REF: [(f64, f64); 3] = [
        (3.001, 0.075_255_498_097_346_3),
        (3.5, 0.141_743_350_144_642),
        (3.999, 0.267_977_893_714_197),
    ];

    /// Composite Simpson on [1, upper], independent of the adaptive rule.
    fn simpson<F: Fn(f64) -> f64>(f: F, upper: f64, panels: usize) -> f64 {
        let h = (upper - 1.0) / panels as f64;
        let mut sum = f(1.0) + f(upper);
        for i in 1..panels {
            let x = 1.0 + i as f64 * h;
            sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        sum * h / 3.0
    }

    #[test]
    fn integral_p3_reference() {
        let v = integral_p3().unwrap();
        assert_relative_eq!(v, I3_REF, max_relative = 1e-12);
        let oracle = simpson(|t| kernel(t) * (t - 1.0) / (t * t.sqrt()), 80.0, 400_000);
        assert_relative_eq!(v, oracle, max_relative = 1e-10);
    }

    #[test]
    fn integral_34_reference() {
        for (p, r) in I34_REF {
            let v = integral_34(p).unwrap();
            assert_relative_eq!(v, r, max_relative = 1e-12);
            let oracle = simpson(|t| kernel(t) * (2.0 + t.sqrt()).powf(p - 4.0), 80.0, 400_000);
            assert_relative_eq!(v, oracle, max_relative = 1e-10);
        }
    }

    #[test]
    fn truncation_is_negligible() {
        assert!((integral_p3_to(60.0).unwrap() - integral_p3_to(80.0).unwrap()).abs() < 1e-12);
        assert!((integral_34_to(3.5, 60.0).unwrap() - integral_34_to(3.5, 80.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn integral_34_increases_in_p() {
        // (2+√t)^{p−4} grows with p for every t ≥ 1
        let mut prev = 0.0;
        for k in 1..100 {
            let v = integral_34(3.0 + k as f64 * 0.01).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(integral_34(3.0).is_err());
        assert!(integral_34(4.0).is_err());
    }

    #[test]
    fn gauss_constant_examples() {
        assert_eq!(gauss_constant(4.0).unwrap(), 2.0);
        assert_relative_eq!(gauss_constant(6.0).unwrap(), 4.21875, max_relative = 1e-15);
        let c3 = gauss_constant(3.0).unwrap();
        assert_relative_eq!(c3, 9.0 / (32.0 * (2.0 * PI).sqrt()) * I3_REF, max_relative = 1e-12);
        assert!(c3 >= 1e-3);
        assert_relative_eq!(gauss_constant(3.5).unwrap(), 0.016_342_979_001_180_8, max_relative = 1e-11);
        assert!(gauss_constant(2.5).is_err());
    }

    #[test]
    fn gauss_constant_positive_and_shaped() {
        for k in 0..=900 {
            let p = 3.0 + k as f64 * 0.01;
            assert!(gauss_constant(p).unwrap() > 0.0, "p = {p}");
        }
        for k in 0..=40 {
            let p = 20.0 + k as f64;
            let shape = gauss_constant(p).unwrap() * 2f64.powf(p / 2.0) / p.powi(4);
            assert!((0.04..=0.1).contains(&shape), "p = {p}: {shape}");
        }
    }

    #[test]
    fn gauss_constant_continuous_at_six() {
        let left = gauss_constant(6.0 - 1e-12).unwrap();
        let right = gauss_constant(6.0).unwrap();
        assert!((left - right).abs() <= 1e-9);
    }

    #[test]
    fn haagerup_examples() {
        assert_relative_eq!(haagerup_tilde(5.0).unwrap(), 0.5f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(haagerup_tilde(6.0 - 1e-12).unwrap(), 1.0, max_relative = 1e-10);
        let v = haagerup_tilde(4.1).unwrap();
        let gamma_branch = 2f64.powf(0.05) * libm::tgamma(0.55) / PI.sqrt();
        // near p = 4 the power branch is the smaller one
        assert_relative_eq!(v, 2f64.powf(-0.95), max_relative = 1e-15);
        assert!(v < gamma_branch);
        assert!(haagerup_tilde(4.0).is_err());
        assert!(haagerup_tilde(6.0).is_err());
    }

    #[test]
    fn haagerup_is_the_gaussian_limit() {
        // C̃_p never exceeds E|G|^{p−4}, the CLT limit of E|Sₙ|^{p−4}
        for k in 1..200 {
            let p = 4.0 + k as f64 * 0.01;
            assert!(haagerup_tilde(p).unwrap() <= gaussian_abs_moment(p - 4.0) * (1.0 + 1e-14));
        }
    }

    #[test]
    fn diag_constant_examples() {
        assert_relative_eq!(diag_constant(4.0, 1.0).unwrap(), 0.32);
        let expected = 2.0 * (3.5 * 2.5 * 1.5 * 0.5 / 6.0) * (1.0 - 2.0 / E) * (2.0 + 2f64.sqrt()).powf(-0.5) / 25.0;
        assert_relative_eq!(diag_constant(3.5, 1.0).unwrap(), expected, max_relative = 1e-15);
        assert_relative_eq!(diag_constant(5.0, 0.7).unwrap(), 0.45 * 0.7, max_relative = 1e-15);
        assert!(diag_constant(3.0, 1.0).is_err());
        assert!(diag_constant(5.0, 0.0).is_err());
    }

    #[test]
    fn crit_and_doubling() {
        assert_eq!(crit_constant(), 0.015625);
        assert_eq!(doubling_rate_constant(4.0).unwrap(), 24.0);
        assert_relative_eq!(doubling_rate_constant(3.0).unwrap(), 12.0 * (2.0 / PI).sqrt(), max_relative = 1e-15);
        assert!(doubling_rate_constant(2.0).is_err());
    }

    #[test]
    fn bundles() {
        let b3 = ConstantBundle::compute(3.0).unwrap();
        assert_eq!(b3.branch, PsiRegime::P3);
        assert_eq!(b3.crit_c, Some(0.015625));
        assert!(b3.diag_c.is_none());
        for p in [3.5, 4.0, 5.0, 6.0, 8.0] {
            let b = ConstantBundle::compute(p).unwrap();
            assert!(b.gauss_c > 0.0 && b.diag_c.unwrap() > 0.0 && b.doubling_c > 0.0);
            assert!(b.crit_c.is_none());
        }
        assert!(ConstantBundle::compute(5.0).unwrap().components.contains_key("haagerup_tilde"));
        assert!(ConstantBundle::compute(2.0).is_err());
    }
}
