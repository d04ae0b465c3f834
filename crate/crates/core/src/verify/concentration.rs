//! Small-ball bounds for `T = √(1−b²) S + bG`.

use super::DeficitReport;
use crate::dist::{mixed_interval_probability, CoefficientVector, SymmetricAtomicDistribution};
use crate::error::{Error, Result};

/// `c` in `P(|T| ≤ ℓ) ≥ c ℓ` for `a₁ ≤ ℓ ≤ 1`.
pub const CONCENTRATION_CONSTANT: f64 = 3.0 / 16.0;

/// `P(|T| ≤ 2) ≥ 1 − 2/e` and `P(|T| ≤ ℓ) ≥ (3/16) ℓ` with
/// `ℓ = max(√(1−b²) a₁, level)`. The Rademacher part is rescaled so that
/// `T` has unit variance.
pub fn verify_concentration(a: &CoefficientVector, gaussian_mass: f64, level: Option<f64>) -> Result<DeficitReport> {
    let b = gaussian_mass;
    if !(b.is_finite() && (0.0..=1.0 + 1e-12).contains(&b)) {
        return Err(Error::HypothesisViolated(format!("gaussian mass must lie in [0, 1], got {b}")));
    }
    let b = b.min(1.0);
    let scale = (1.0 - b * b).max(0.0).sqrt();
    let coeffs: Vec<f64> = a.coeffs().iter().map(|c| c * scale).collect();
    let d = SymmetricAtomicDistribution::from_coefficients(&coeffs)?;
    let top = coeffs[0];
    let probe = match level {
        Some(l) if !(l.is_finite() && l > 0.0 && l <= 1.0) => {
            return Err(Error::HypothesisViolated(format!("probe level must lie in (0, 1], got {l}")));
        }
        Some(l) => l.max(top),
        None => top,
    };
    let wide = mixed_interval_probability(&d, b, 2.0);
    let mut r = DeficitReport::new("conc", a.len(), 0.0, wide, 1.0 - 2.0 / std::f64::consts::E, false);
    let narrow = mixed_interval_probability(&d, b, probe);
    r.and_check("small_ball", narrow, CONCENTRATION_CONSTANT * probe, false);
    r.note("gaussian_mass", b);
    r.note("level", probe);
    Ok(r.with_deficit(0.0, CONCENTRATION_CONSTANT))
}
