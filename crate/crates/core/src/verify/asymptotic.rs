//! Rate at which diagonal moments approach the Gaussian one.

use super::{check_p, DeficitReport};
use crate::constants::doubling_rate_constant;
use crate::dist::{compensated_sum, diagonal_moment, gaussian_abs_moment, ln_binomial, log_sum_exp};
use crate::error::{Error, Result};

/// Largest `n` accepted by the asymptotic checks.
pub const MAX_ASYMPTOTIC_N: usize = 4096;

fn check_n(n: usize) -> Result<()> {
    if n == 0 || n > MAX_ASYMPTOTIC_N {
        return Err(Error::domain(format!("n must lie in [1, {MAX_ASYMPTOTIC_N}], got {n}")));
    }
    Ok(())
}

/// `E X^{p/2}` for `X ~ Binomial(n, ½)`.
pub fn binomial_half_moment(n: usize, p: f64) -> f64 {
    let half = p / 2.0;
    let nf = n as f64;
    if n <= 50 {
        let norm = 0.5f64.powi(n as i32);
        let mut binom = 1.0f64;
        let mut terms = Vec::with_capacity(n);
        for k in 0..=n {
            if k > 0 {
                terms.push(binom * norm * (k as f64).powf(half));
            }
            binom = binom * (n - k) as f64 / (k + 1) as f64;
        }
        compensated_sum(terms)
    } else {
        let logs: Vec<f64> = (1..=n)
            .map(|k| ln_binomial(n, k) - nf * std::f64::consts::LN_2 + half * (k as f64).ln())
            .collect();
        log_sum_exp(&logs).exp()
    }
}

/// `E X^{p/2} ≤ (n/2)^{p/2} e^{p²/4n}` for `X ~ Binomial(n, ½)`.
pub fn verify_binomial_moment(n: usize, p: f64) -> Result<DeficitReport> {
    check_p(p, 3.0, false)?;
    check_n(n)?;
    let nf = n as f64;
    let lhs = binomial_half_moment(n, p);
    let rhs = (nf / 2.0).powf(p / 2.0) * (p * p / (4.0 * nf)).exp();
    Ok(DeficitReport::new("binom", n, p, lhs, rhs, true))
}

/// `E|S₂ₙ|^p ≤ e^{p²/4n} E|Sₙ|^p`, together with `E|G|^p ≤ e^{2p/n} E|Sₙ|^p`
/// and `E|G|^p − E|Sₙ|^p ≤ C(p)/n` with `C(p) = 2p E|G|^p`.
pub fn verify_doubling(n: usize, p: f64) -> Result<DeficitReport> {
    check_p(p, 3.0, false)?;
    check_n(n)?;
    let nf = n as f64;
    let current = diagonal_moment(n, p);
    let doubled = diagonal_moment(2 * n, p);
    let gauss = gaussian_abs_moment(p);
    let mut r = DeficitReport::new("doubling", n, p, doubled, (p * p / (4.0 * nf)).exp() * current, true);
    r.and_check("gauss_ratio", gauss, (2.0 * p / nf).exp() * current, true);
    let rate = doubling_rate_constant(p)?;
    r.and_check("rate", gauss - current, rate / nf, true);
    r.note("diagonal_moment", current);
    r.note("scaled_gap", (gauss - current) * nf);
    Ok(r)
}
