//! The kernel `ψ_s(t) = |s+√t|^p + |s−√t|^p` and bounds on its second
//! derivative in `t`.
//!
//! `ψ_s(t) = 2E|s + ε√t|^p` for a Rademacher `ε`, which is how it enters
//! moment comparisons: replacing one coefficient changes `t` only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions};

/// Exponent regime; the bounds on `ψ''` are different formulas in each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PsiRegime {
    P3,
    P3To4,
    P4,
    PGt4,
}

impl PsiRegime {
    /// Exact comparisons: `3 + 1e-15` belongs to `P3To4`.
    pub fn from_p(p: f64) -> Result<Self> {
        if !p.is_finite() || p < 3.0 {
            return Err(Error::domain(format!("exponent must be finite and >= 3, got {p}")));
        }
        Ok(if p == 3.0 {
            PsiRegime::P3
        } else if p < 4.0 {
            PsiRegime::P3To4
        } else if p == 4.0 {
            PsiRegime::P4
        } else {
            PsiRegime::PGt4
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            PsiRegime::P3 => "P3",
            PsiRegime::P3To4 => "P3TO4",
            PsiRegime::P4 => "P4",
            PsiRegime::PGt4 => "PGT4",
        }
    }
}

fn check_t_positive(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::domain(format!("t must be finite and > 0, got {t}")));
    }
    Ok(())
}

/// `|x|^q · sign(x)`.
fn signed_pow(x: f64, q: f64) -> f64 {
    x.abs().powf(q).copysign(x)
}

/// `ψ_s(t)`.
pub fn psi(s: f64, t: f64, p: f64) -> Result<f64> {
    PsiRegime::from_p(p)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::domain(format!("t must be finite and >= 0, got {t}")));
    }
    let r = t.sqrt();
    Ok((s + r).abs().powf(p) + (s - r).abs().powf(p))
}

/// `ψ_s'(t)`.
pub fn psi_first(s: f64, t: f64, p: f64) -> Result<f64> {
    PsiRegime::from_p(p)?;
    check_t_positive(t)?;
    let r = t.sqrt();
    Ok(p * (signed_pow(s + r, p - 1.0) - signed_pow(s - r, p - 1.0)) / (2.0 * r))
}

/// Beyond this `t/s²` the power series of `ψ_s''` is not used.
const SERIES_RATIO: f64 = 0.25;

/// `ψ_s''(t)`. For `p > 3` and `t ≤ s²/4` the binomial series is summed
/// instead of the closed form, whose two terms cancel there.
pub fn psi_second(s: f64, t: f64, p: f64) -> Result<f64> {
    let regime = PsiRegime::from_p(p)?;
    check_t_positive(t)?;
    let s = s.abs();
    match regime {
        PsiRegime::P3 => Ok(3.0 * (t - s * s).max(0.0) / (2.0 * t.powf(1.5))),
        PsiRegime::P4 => Ok(4.0),
        _ if t <= SERIES_RATIO * s * s => Ok(psi_second_series(s, t, p)),
        _ => {
            let r = t.sqrt();
            let (u, v) = (s + r, s - r);
            let first = p * (p - 1.0) * (u.abs().powf(p - 2.0) + v.abs().powf(p - 2.0)) / (4.0 * t);
            let second = p * (signed_pow(u, p - 1.0) - signed_pow(v, p - 1.0)) / (4.0 * t * r);
            Ok((first - second).max(0.0))
        }
    }
}

/// `2 Σ_{k≥2} C(p,2k) k(k−1) s^{p−2k} t^{k−2}`, valid for `t < s²`.
fn psi_second_series(s: f64, t: f64, p: f64) -> f64 {
    let x = t / (s * s);
    let base = s.powf(p - 4.0);
    // c holds C(p, 2k) x^{k-2}
    let mut c = p * (p - 1.0) * (p - 2.0) * (p - 3.0) / 24.0;
    let mut sum = 0.0;
    for k in 2..400u32 {
        let kf = k as f64;
        let term = 2.0 * c * kf * (kf - 1.0);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
        let m = 2.0 * kf;
        c *= (p - m) * (p - m - 1.0) / ((m + 1.0) * (m + 2.0)) * x;
    }
    (sum * base).max(0.0)
}

/// `ψ_s''(t)` from its integral representation, for cross-validation:
/// `[p(p−1)(p−2)(p−3)/(4t^{3/2})] · ½∫_{s−√t}^{s+√t} |z|^{p−4}(t − (z−s)²) dz`.
pub fn psi_second_integral(s: f64, t: f64, p: f64) -> Result<f64> {
    let regime = PsiRegime::from_p(p)?;
    if regime == PsiRegime::P3 {
        return Err(Error::domain("integral representation needs p > 3"));
    }
    check_t_positive(t)?;
    let r = t.sqrt();
    let (lo, hi) = (s - r, s + r);
    let weight = |z: f64| t - (z - s) * (z - s);
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-13,
        max_intervals: 4000,
    };

    let integral = if regime == PsiRegime::P3To4 {
        // z^{p-4} dz = dw/(p-3) with w = z^{p-3} removes the singularity at 0
        let q = p - 3.0;
        let from_zero = |end: f64, sign: f64| -> Result<f64> {
            if end <= 0.0 {
                return Ok(0.0);
            }
            let f = |w: f64| weight(sign * w.powf(1.0 / q)) / q;
            Ok(integrate(f, 0.0, end.powf(q), opts)?.value)
        };
        if lo < 0.0 && hi > 0.0 {
            from_zero(hi, 1.0)? + from_zero(-lo, -1.0)?
        } else if lo == 0.0 {
            from_zero(hi, 1.0)?
        } else if hi == 0.0 {
            from_zero(-lo, -1.0)?
        } else {
            integrate(|z| z.abs().powf(p - 4.0) * weight(z), lo, hi, opts)?.value
        }
    } else {
        let f = |z: f64| z.abs().powf(p - 4.0) * weight(z);
        if lo < 0.0 && hi > 0.0 {
            integrate(f, lo, 0.0, opts)?.value + integrate(f, 0.0, hi, opts)?.value
        } else {
            integrate(f, lo, hi, opts)?.value
        }
    };
    let k = p * (p - 1.0) * (p - 2.0) * (p - 3.0);
    Ok(k / (4.0 * t * r) * 0.5 * integral)
}

/// Regime-dependent lower bound on `ψ_s''(t)`.
pub fn psi_second_lower_bound(s: f64, t: f64, p: f64) -> Result<f64> {
    let regime = PsiRegime::from_p(p)?;
    check_t_positive(t)?;
    let s = s.abs();
    let k = p * (p - 1.0) * (p - 2.0) * (p - 3.0);
    Ok(match regime {
        PsiRegime::P3 => 3.0 * (t - s * s).max(0.0) / (2.0 * t.powf(1.5)),
        PsiRegime::P3To4 => k / 6.0 * (s + t.sqrt()).powf(p - 4.0),
        PsiRegime::P4 => 4.0,
        PsiRegime::PGt4 => {
            let at_zero = p * (p - 2.0) / 2.0 * t.powf((p - 4.0) / 2.0);
            let shifted = 3.0 * k / 64.0 * s.powf(p - 4.0);
            at_zero.max(shifted)
        }
    })
}

/// `(ψ_s(x²(1+t)) + ψ_s(x²(1−t)))/2`.
pub fn psi_pair(s: f64, x: f64, t: f64, p: f64) -> Result<f64> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::domain(format!("x must be finite and > 0, got {x}")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("t must lie in [0, 1], got {t}")));
    }
    let x2 = x * x;
    Ok(0.5 * (psi(s, x2 * (1.0 + t), p)? + psi(s, x2 * (1.0 - t), p)?))
}
