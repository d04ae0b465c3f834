//! Instance-level checks of the moment inequalities.
//!
//! Every check produces a [`DeficitReport`]. `margin` is the slack in the
//! direction of the claim, so a report passes iff
//! `margin ≥ −tolerance · scale` with `scale = max(1, |lhs|, |rhs|)` taken
//! over all sub-checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dist::CoefficientVector;
use crate::error::{Error, Result};

mod asymptotic;
mod concentration;
mod stability;
mod steps;

pub use asymptotic::{binomial_half_moment, verify_binomial_moment, verify_doubling};
pub use concentration::{verify_concentration, CONCENTRATION_CONSTANT};
pub use stability::{
    diag_constant_for, n2_constant, n2_lhs, verify_crit_stability, verify_diag_stability,
    verify_gauss_stability, verify_n2_closed_form, verify_schur_monotonicity,
};
pub use steps::{
    diagonalize_with_bounds, verify_exchange_step, verify_procedure_composition, verify_t_step,
};

/// Default slack for pass/fail decisions.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Outcome of one instance check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitReport {
    pub claim_id: String,
    pub n: usize,
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub deficit_term: f64,
    pub margin: f64,
    pub constant_used: f64,
    pub passed: bool,
    pub scale: f64,
    pub tolerance: f64,
    pub detail: BTreeMap<String, f64>,
}

impl DeficitReport {
    /// Report for a claim `lhs ≤ rhs` (`upper = true`) or `lhs ≥ rhs`.
    pub(crate) fn new(claim_id: &str, n: usize, p: f64, lhs: f64, rhs: f64, upper: bool) -> Self {
        let margin = if upper { rhs - lhs } else { lhs - rhs };
        let mut report = Self {
            claim_id: claim_id.to_string(),
            n,
            p,
            lhs,
            rhs,
            deficit_term: 0.0,
            margin,
            constant_used: 0.0,
            passed: false,
            scale: 1f64.max(lhs.abs()).max(rhs.abs()),
            tolerance: DEFAULT_TOLERANCE,
            detail: BTreeMap::new(),
        };
        report.recheck(DEFAULT_TOLERANCE);
        report
    }

    pub(crate) fn with_deficit(mut self, deficit_term: f64, constant_used: f64) -> Self {
        self.deficit_term = deficit_term;
        self.constant_used = constant_used;
        self
    }

    pub(crate) fn note(&mut self, key: &str, value: f64) {
        self.detail.insert(key.to_string(), value);
    }

    /// Folds in a secondary claim `lhs ≤ rhs` (or `≥`); its slack is
    /// recorded under `name` and the report margin becomes the minimum.
    pub(crate) fn and_check(&mut self, name: &str, lhs: f64, rhs: f64, upper: bool) {
        let margin = if upper { rhs - lhs } else { lhs - rhs };
        self.note(&format!("{name}_lhs"), lhs);
        self.note(&format!("{name}_rhs"), rhs);
        self.note(&format!("{name}_margin"), margin);
        self.margin = self.margin.min(margin);
        self.scale = self.scale.max(lhs.abs()).max(rhs.abs());
        self.recheck(self.tolerance);
    }

    /// Re-evaluates `passed` under a different tolerance.
    pub fn recheck(&mut self, tolerance: f64) {
        self.tolerance = tolerance;
        self.passed = self.margin >= -tolerance * self.scale;
    }
}

/// One Gaussian exchange: coordinates before `i` are already Gaussian
/// (total mass `b`), coordinate `i` is being swapped, the rest stay signs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeSplit {
    pub a: CoefficientVector,
    pub i: usize,
    pub gaussian_mass: f64,
}

impl ExchangeSplit {
    /// `b² = Σ_{j<i} a_j²`.
    pub fn new(a: CoefficientVector, i: usize) -> Result<Self> {
        if i >= a.len() {
            return Err(Error::IndexOutOfRange { index: i, len: a.len() });
        }
        let b2: f64 = a.coeffs()[..i].iter().map(|c| c * c).sum();
        Ok(Self {
            a,
            i,
            gaussian_mass: b2.sqrt(),
        })
    }

    pub fn coefficient(&self) -> f64 {
        self.a.coeffs()[self.i]
    }

    /// Coefficients still carried by Rademacher signs after `i`.
    pub fn rademacher_tail(&self) -> &[f64] {
        &self.a.coeffs()[self.i + 1..]
    }
}

fn check_p(p: f64, min: f64, strict: bool) -> Result<()> {
    let ok = p.is_finite() && if strict { p > min } else { p >= min };
    if ok {
        Ok(())
    } else {
        let op = if strict { ">" } else { ">=" };
        Err(Error::domain(format!("exponent must be {op} {min}, got {p}")))
    }
}
