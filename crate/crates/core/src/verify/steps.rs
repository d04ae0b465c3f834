//! Step-level checks: one Gaussian exchange, one T-transformation, and the
//! composition of T-steps along the diagonalizing procedure.

use super::stability::moment_of;
use super::{check_p, DeficitReport, ExchangeSplit};
use crate::constants::{crit_constant, diag_cap, diag_constant, gauss_constant, khintchine_floor_factor};
use crate::dist::{diagonal_moment, mixed_abs_moment, CoefficientVector, SymmetricAtomicDistribution};
use crate::error::{Error, Result};
use crate::schur::{cap_largest, diagonalize, final_vector, SquaresVector, TTransformStep};

/// `E|S + aG|^p − E|S + aε|^p ≥ C_p a⁴`, where `S` already carries the
/// Gaussian mass `b` of the exchanged prefix.
pub fn verify_exchange_step(split: &ExchangeSplit, p: f64) -> Result<DeficitReport> {
    check_p(p, 3.0, false)?;
    let a = split.coefficient();
    if a * a > 0.5 + 1e-15 {
        return Err(Error::HypothesisViolated(format!(
            "exchanged coefficient needs a^2 <= 1/2, got {}",
            a * a
        )));
    }
    let b = split.gaussian_mass;
    let tail = SymmetricAtomicDistribution::from_coefficients(split.rademacher_tail())?;
    let with_gauss = mixed_abs_moment(&tail, (b * b + a * a).sqrt(), p)?;
    let with_sign = mixed_abs_moment(&tail.add_rademacher(a), b, p)?;
    let c = gauss_constant(p)?;
    let deficit = c * a.powi(4);
    let mut r = DeficitReport::new("lemma_exchange", split.a.len(), p, with_gauss - with_sign, deficit, false)
        .with_deficit(deficit, c);
    r.note("a", a);
    r.note("b", b);
    r.note("index", split.i as f64);
    Ok(r)
}

/// Constant and moment floor for one step merging `(x_j, x_k)`.
fn step_constant(p: f64, pair_mass: f64) -> Result<(f64, f64)> {
    if p > 4.0 {
        let floor = khintchine_floor_factor(p)? * (1.0 - pair_mass).max(0.0).powf((p - 4.0) / 2.0);
        // the pair carries all the mass, nothing is left to bound below
        if floor == 0.0 {
            return Ok((0.0, 0.0));
        }
        Ok((diag_constant(p, floor)?, floor))
    } else {
        Ok((diag_constant(p, 1.0)?, 1.0))
    }
}

/// Lower bound on the moment gain of replacing `(x, z)` by `(x + z − 1/n, 1/n)`,
/// with `X = (x − 1/n)(1/n − z)`.
fn step_bound(p: f64, n: usize, x: f64, z: f64) -> Result<f64> {
    let inv_n = 1.0 / n as f64;
    let prod = (x - inv_n).max(0.0) * (inv_n - z).max(0.0);
    if p == 3.0 {
        let a2 = x + z;
        let radicand = (inv_n * (a2 - inv_n)).max(0.0);
        Ok(crit_constant() * radicand.sqrt() / a2 * prod)
    } else {
        Ok(2.0 * step_constant(p, x + z)?.0 * prod)
    }
}

/// One T-step between the largest and smallest squares: the exact moment
/// gain against `2C X` (or the `p = 3` form with `√((1/n)(a² − 1/n))/a²`).
pub fn verify_t_step(a: &CoefficientVector, p: f64) -> Result<DeficitReport> {
    check_p(p, 3.0, false)?;
    let n = a.len();
    if n < 3 {
        return Err(Error::HypothesisViolated(format!("T-step needs n >= 3, got {n}")));
    }
    let sq = a.squares();
    let cap = diag_cap(n);
    if p > 4.0 && sq[0] > cap + 1e-12 {
        return Err(Error::HypothesisViolated(format!(
            "for p > 4 the largest square must be <= {cap}, got {}",
            sq[0]
        )));
    }
    let inv_n = 1.0 / n as f64;
    let (x, z) = (sq[0], sq[n - 1]);
    let mut moved = sq.clone();
    moved[0] = (x + z - inv_n).max(0.0);
    moved[n - 1] = inv_n;
    let after = CoefficientVector::from_squares(&moved)?;
    let gain = moment_of(&after, p)? - moment_of(a, p)?;
    let bound = step_bound(p, n, x, z)?;
    let a2 = x + z;
    let constant = if p == 3.0 { crit_constant() } else { step_constant(p, a2)?.0 };
    let mut r = DeficitReport::new("lemma_tstep", n, p, gain, bound, false).with_deficit(bound, constant);
    r.note("a2", a2);
    r.note("mu0", z / a2);
    r.note("mu", inv_n / a2);
    r.note("product", (x - inv_n) * (inv_n - z));
    if p > 4.0 {
        r.note("moment_floor", step_constant(p, a2)?.1);
    }
    Ok(r)
}

/// Capping steps (if `a₁²` exceeds `0.9 − 1/n` and `p > 4`) followed by the
/// diagonalizing steps, each with its lower bound in `deficit_bound`.
/// Capping steps carry bound 0; their gain is nonnegative by Schur concavity.
pub fn diagonalize_with_bounds(a: &CoefficientVector, p: f64) -> Result<Vec<TTransformStep>> {
    Ok(bounded_steps(a, p)?.1)
}

/// Number of leading capping steps, then all steps.
fn bounded_steps(a: &CoefficientVector, p: f64) -> Result<(usize, Vec<TTransformStep>)> {
    check_p(p, 3.0, false)?;
    let n = a.len();
    let x = SquaresVector::from_coefficients(a);
    let mut steps = if p > 4.0 && n >= 3 && x.largest() > diag_cap(n) {
        cap_largest(&x, diag_cap(n))?
    } else {
        Vec::new()
    };
    let capping = steps.len();
    let start = final_vector(&x, &steps);
    for mut step in diagonalize(&start) {
        let before = step.before.as_slice();
        step.deficit_bound = step_bound(p, n, before[step.j], before[step.k])?;
        steps.push(step);
    }
    Ok((capping, steps))
}

/// Sums the per-step bounds along [`diagonalize_with_bounds`] and checks
/// `Σ bounds ≤ E|Sₙ|^p − E|S|^p`, and that the per-step drops of `Σxᵢ²`,
/// via `2(x−y)(y−z) = x² + z² − y² − (x−y+z)²` with `y = 1/n`, telescope
/// to `Σaᵢ⁴ − 1/n`.
pub fn verify_procedure_composition(a: &CoefficientVector, p: f64) -> Result<DeficitReport> {
    let n = a.len();
    let inv_n = 1.0 / n as f64;
    let (capping, steps) = bounded_steps(a, p)?;
    let accumulated: f64 = steps.iter().map(|s| s.deficit_bound).sum();
    let gap = diagonal_moment(n, p) - moment_of(a, p)?;
    let drop: f64 = steps
        .iter()
        .enumerate()
        .map(|(idx, s)| {
            if idx < capping {
                s.before.sum_of_squares() - s.after.sum_of_squares()
            } else {
                let before = s.before.as_slice();
                2.0 * (before[s.j] - inv_n) * (inv_n - before[s.k])
            }
        })
        .sum();
    let mut r = DeficitReport::new("compose", n, p, accumulated, gap + 1e-9, true).with_deficit(accumulated, 0.0);
    r.note("steps", steps.len() as f64);
    r.note("capping_steps", capping as f64);
    r.note("exact_gap", gap);
    let target = a.fourth_power_sum() - inv_n;
    r.and_check("telescope", (drop - target).abs(), 1e-10, true);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cv(sq: &[f64]) -> CoefficientVector {
        CoefficientVector::from_squares(sq).unwrap()
    }

    #[test]
    fn exchange_trivial_coordinate() {
        let a = CoefficientVector::new(vec![1.0, 0.0]).unwrap();
        let r = verify_exchange_step(&ExchangeSplit::new(a, 1).unwrap(), 3.0).unwrap();
        assert_eq!(r.rhs, 0.0);
        assert!(r.lhs.abs() < 1e-12);
        assert!(r.passed);
    }

    #[test]
    fn exchange_pure_case_is_sharp_at_p4() {
        let r = verify_exchange_step(&ExchangeSplit::new(CoefficientVector::diagonal(2), 1).unwrap(), 4.0).unwrap();
        assert_relative_eq!(r.lhs, 0.5, epsilon = 1e-9);
        assert_relative_eq!(r.rhs, 0.5, epsilon = 1e-15);
        assert!(r.margin.abs() < 1e-9);
    }

    #[test]
    fn exchange_with_one_sign_left() {
        let a = cv(&[0.4, 0.35, 0.25]);
        let r = verify_exchange_step(&ExchangeSplit::new(a, 1).unwrap(), 3.0).unwrap();
        assert!(r.passed && r.margin > 0.0, "{r:?}");
    }

    #[test]
    fn exchange_rejects_large_coefficient() {
        let a = cv(&[0.7, 0.3]);
        let e = verify_exchange_step(&ExchangeSplit::new(a, 0).unwrap(), 3.0).unwrap_err();
        assert!(matches!(e, Error::HypothesisViolated(_)));
    }

    #[test]
    fn t_step_diagonal_is_zero() {
        let r = verify_t_step(&CoefficientVector::diagonal(5), 4.0).unwrap();
        assert!(r.lhs.abs() < 1e-12 && r.rhs == 0.0 && r.passed);
    }

    #[test]
    fn t_step_p4_against_identity() {
        // Σ⁴ drops by 2X, so the exact gain at p = 4 is 4X
        let r = verify_t_step(&cv(&[0.5, 0.3, 0.2]), 4.0).unwrap();
        let x = (0.5 - 1.0 / 3.0) * (1.0 / 3.0 - 0.2);
        assert_relative_eq!(r.lhs, 4.0 * x, epsilon = 1e-12);
        assert_relative_eq!(r.rhs, 2.0 * 0.32 * x, epsilon = 1e-15);
        assert!(r.passed);
    }

    #[test]
    fn t_step_p3_form() {
        let r = verify_t_step(&cv(&[0.5, 0.3, 0.2]), 3.0).unwrap();
        let x = (0.5 - 1.0 / 3.0) * (1.0 / 3.0 - 0.2);
        let expected = crit_constant() * ((1.0f64 / 3.0) * (0.7 - 1.0 / 3.0)).sqrt() / 0.7 * x;
        assert_relative_eq!(r.rhs, expected, epsilon = 1e-14);
        assert_relative_eq!(r.detail["mu"], 1.0 / 2.1, epsilon = 1e-14);
        assert!(r.passed);
    }

    #[test]
    fn t_step_hypotheses() {
        assert!(matches!(verify_t_step(&cv(&[0.5, 0.5]), 4.0), Err(Error::HypothesisViolated(_))));
        assert!(matches!(verify_t_step(&cv(&[0.9, 0.05, 0.05]), 5.0), Err(Error::HypothesisViolated(_))));
        assert!(verify_t_step(&cv(&[0.9, 0.05, 0.05]), 4.0).unwrap().passed);
    }

    #[test]
    fn composition_telescopes() {
        let r = verify_procedure_composition(&cv(&[0.5, 0.3, 0.2]), 4.0).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.detail["telescope_lhs"] < 1e-12);
        let r = verify_procedure_composition(&cv(&[0.7, 0.2, 0.1]), 3.5).unwrap();
        assert!(r.passed && r.lhs <= r.detail["exact_gap"]);
    }

    #[test]
    fn composition_diagonal_has_no_steps() {
        let r = verify_procedure_composition(&CoefficientVector::diagonal(6), 5.0).unwrap();
        assert_eq!(r.detail["steps"], 0.0);
        assert_eq!(r.lhs, 0.0);
    }

    #[test]
    fn composition_with_capping() {
        let a = cv(&[0.95, 0.02, 0.02, 0.01]);
        let steps = diagonalize_with_bounds(&a, 6.0).unwrap();
        assert!(steps[0].deficit_bound == 0.0);
        let r = verify_procedure_composition(&a, 6.0).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn identity_4_2() {
        for &(x, y, z) in &[(0.5, 0.25, 0.1), (3.0, -1.0, 2.0), (1e-3, 2e-3, 7.0)] {
            let lhs: f64 = 2.0 * (x - y) * (y - z);
            let rhs: f64 = x * x + z * z - y * y - (x - y + z) * (x - y + z);
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0f64).max(x * x + y * y + z * z));
        }
    }

    #[test]
    fn two_coordinates_above_four_bound_by_zero() {
        let a = cv(&[0.9, 0.1]);
        let steps = diagonalize_with_bounds(&a, 6.0).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].deficit_bound, 0.0);
        assert!(verify_procedure_composition(&a, 6.0).unwrap().passed);
    }
}
