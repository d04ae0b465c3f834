//! Theorem-level stability checks: against the Gaussian, against the
//! diagonal sum, and the `p = 3` positive-part form.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use super::{check_p, DeficitReport};
use crate::constants::{
    crit_constant, diag_cap, diag_constant, gauss_constant, khintchine_floor_factor,
    worst_case_moment_floor,
};
use crate::dist::{build_distribution, diagonal_moment, gaussian_abs_moment, moment, CoefficientVector};
use crate::error::{Error, Result};
use crate::schur::{cap_largest, diagonalize, final_vector, majorizes, SquaresVector};

pub(crate) fn moment_of(a: &CoefficientVector, p: f64) -> Result<f64> {
    Ok(moment(&build_distribution(a)?, p))
}

/// `E|G|^p − E|S|^p ≥ C Σaᵢ⁴`, with `C` quartered when `a₁² > ½`.
/// At `p = 4` the inequality is the identity `E|S|⁴ = 3 − 2Σaᵢ⁴`, so `C₄ = 2`
/// holds for every vector and is never quartered.
pub fn verify_gauss_stability(a: &CoefficientVector, p: f64) -> Result<DeficitReport> {
    check_p(p, 3.0, false)?;
    let lhs = moment_of(a, p)?;
    let big_first = a.largest().powi(2) > 0.5 && p != 4.0;
    let c = gauss_constant(p)? / if big_first { 4.0 } else { 1.0 };
    let fourth = a.fourth_power_sum();
    let deficit = c * fourth;
    let rhs = gaussian_abs_moment(p) - deficit;
    let mut r = DeficitReport::new("thm_gauss", a.len(), p, lhs, rhs, true).with_deficit(deficit, c);
    r.note("fourth_power_sum", fourth);
    r.note("quartered", if big_first { 1.0 } else { 0.0 });
    Ok(r)
}

/// `|√(½+x) + √(½−x)|^p + |√(½+x) − √(½−x)|^p`.
pub fn n2_lhs(x: f64, p: f64) -> f64 {
    let (u, v) = ((0.5 + x).sqrt(), (0.5 - x).max(0.0).sqrt());
    let sum = u + v;
    // difference of roots without cancellation
    let diff = 2.0 * x / sum;
    sum.powf(p) + diff.abs().powf(p)
}

const N2_GRID: usize = 10_000;

/// `0.9 · min_x (2^{p/2} − LHS(x))/x²` over `x = i/(2·10⁴)`, `i = 1..10⁴`.
/// A constant certified by sweep, cached per exponent.
pub fn n2_constant(p: f64) -> Result<f64> {
    check_p(p, 3.0, true)?;
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&c) = cache.lock().expect("cache lock").get(&p.to_bits()) {
        return Ok(c);
    }
    let top = 2f64.powf(p / 2.0);
    let min = (1..=N2_GRID)
        .map(|i| {
            let x = i as f64 / (2.0 * N2_GRID as f64);
            (top - n2_lhs(x, p)) / (x * x)
        })
        .fold(f64::INFINITY, f64::min);
    let c = 0.9 * min;
    cache.lock().expect("cache lock").insert(p.to_bits(), c);
    Ok(c)
}

/// `LHS(x) ≤ 2^{p/2} − C x²` with the swept constant, plus the
/// second-order Taylor coefficient `2^{p/2−1}p` checked within 5% at `x = 10⁻³`.
pub fn verify_n2_closed_form(x: f64, p: f64) -> Result<DeficitReport> {
    check_p(p, 3.0, true)?;
    if !(0.0..=0.5).contains(&x) {
        return Err(Error::domain(format!("x must lie in [0, 1/2], got {x}")));
    }
    let c = n2_constant(p)?;
    let top = 2f64.powf(p / 2.0);
    let lhs = n2_lhs(x, p);
    let deficit = c * x * x;
    let mut r = DeficitReport::new("n2", 2, p, lhs, top - deficit, true).with_deficit(deficit, c);
    r.note("x", x);
    let probe = 1e-3;
    let ratio = (top - n2_lhs(probe, p)) / (probe * probe);
    let predicted = 2f64.powf(p / 2.0 - 1.0) * p;
    r.note("taylor_ratio", ratio);
    r.note("taylor_predicted", predicted);
    r.and_check("taylor", (ratio - predicted).abs(), 0.05 * predicted, true);
    Ok(r)
}

/// Instance constant for the diagonal inequality, with the quantities it
/// was derived from.
pub fn diag_constant_for(a: &CoefficientVector, p: f64) -> Result<(f64, Vec<(&'static str, f64)>)> {
    check_p(p, 3.0, true)?;
    let n = a.len();
    let mut info = Vec::new();
    if n == 1 {
        let floor = if p > 4.0 { worst_case_moment_floor(p)? } else { 1.0 };
        return Ok((diag_constant(p, floor)?, info));
    }
    if n == 2 {
        let c2 = n2_constant(p)?;
        info.push(("n2_constant", c2));
        return Ok((c2 / 4.0, info));
    }
    let x = SquaresVector::from_coefficients(a);
    let cap = diag_cap(n);
    let start = if x.largest() > cap {
        let capped = final_vector(&x, &cap_largest(&x, cap)?);
        info.push(("capped", 1.0));
        capped
    } else {
        x
    };
    let floor = if p > 4.0 {
        let factor = khintchine_floor_factor(p)?;
        let worst_pair = diagonalize(&start)
            .iter()
            .map(|s| s.before.as_slice()[s.j] + s.before.as_slice()[s.k])
            .fold(0.0, f64::max);
        let floor = factor * (1.0 - worst_pair).powf((p - 4.0) / 2.0);
        info.push(("max_pair_mass", worst_pair));
        info.push(("moment_floor", floor));
        floor
    } else {
        1.0
    };
    Ok((diag_constant(p, floor)?, info))
}

/// `E|Sₙ|^p − E|S|^p ≥ C Σ(aᵢ² − 1/n)²`.
pub fn verify_diag_stability(a: &CoefficientVector, p: f64) -> Result<DeficitReport> {
    check_p(p, 3.0, true)?;
    let n = a.len();
    let lhs = moment_of(a, p)?;
    let (c, info) = diag_constant_for(a, p)?;
    let distance = a.diagonal_distance();
    let deficit = c * distance;
    let rhs = diagonal_moment(n, p) - deficit;
    let mut r = DeficitReport::new("thm_diag", n, p, lhs, rhs, true).with_deficit(deficit, c);
    r.note("diagonal_distance", distance);
    for (k, v) in info {
        r.note(k, v);
    }
    Ok(r)
}

/// `p = 3`: `E|Sₙ|³ − E|S|³ ≥ C₃/(a₁² + 1/n) · Σ √((1/n)(aᵢ² + aₙ² − 1/n)) (aᵢ² − 1/n)₊ (1/n − a²_{n+1−i})₊`.
pub fn verify_crit_stability(a: &CoefficientVector) -> Result<DeficitReport> {
    let n = a.len();
    let inv_n = 1.0 / n as f64;
    let sq = a.squares();
    let smallest = sq[n - 1];
    let mut sum = 0.0;
    for i in 0..n {
        let pos = (sq[i] - inv_n).max(0.0);
        let neg = (inv_n - sq[n - 1 - i]).max(0.0);
        if pos > 0.0 && neg > 0.0 {
            let mut radicand = inv_n * (sq[i] + smallest - inv_n);
            if radicand < 0.0 && radicand > -1e-14 {
                radicand = 0.0;
            }
            sum += radicand.sqrt() * pos * neg;
        }
    }
    let c = crit_constant();
    let deficit = c / (sq[0] + inv_n) * sum;
    let lhs = moment_of(a, 3.0)?;
    let rhs = diagonal_moment(n, 3.0) - deficit;
    let mut r = DeficitReport::new("thm_crit", n, 3.0, lhs, rhs, true).with_deficit(deficit, c);
    r.note("weighted_sum", sum);
    Ok(r)
}

/// Moment is Schur-concave in the squares: `x ≺ y` implies `E|S_y|^p ≤ E|S_x|^p`.
/// The pair is oriented automatically; `swapped = 1` if `y ≺ x` was used.
pub fn verify_schur_monotonicity(x: &SquaresVector, y: &SquaresVector, p: f64) -> Result<DeficitReport> {
    check_p(p, 3.0, false)?;
    let (lower, upper, swapped) = if majorizes(x, y) {
        (x, y, false)
    } else if majorizes(y, x) {
        (y, x, true)
    } else {
        return Err(Error::NotComparable);
    };
    let m_lower = moment_of(&lower.to_coefficients()?, p)?;
    let m_upper = moment_of(&upper.to_coefficients()?, p)?;
    let mut r = DeficitReport::new("prop_schur", lower.len().max(upper.len()), p, m_upper, m_lower, true);
    r.note("swapped", if swapped { 1.0 } else { 0.0 });
    r.note("deficit_gap", upper.sum_of_squares() - lower.sum_of_squares());
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
    fn gauss_examples() {
        let r = verify_gauss_stability(&CoefficientVector::unit(1), 4.0).unwrap();
        assert_eq!(r.lhs, 1.0);
        assert_eq!(r.rhs, 1.0);
        assert_eq!(r.margin, 0.0);
        assert!(r.passed);
        assert_eq!(r.constant_used, 2.0);
        let r = verify_gauss_stability(&CoefficientVector::unit(1), 5.0).unwrap();
        assert_eq!(r.detail["quartered"], 1.0);

        let r = verify_gauss_stability(&CoefficientVector::diagonal(4), 3.0).unwrap();
        assert_relative_eq!(r.lhs, 1.5, max_relative = 1e-14);
        assert_relative_eq!(r.rhs, 1.595_769_121_605_730_7 - gauss_constant(3.0).unwrap() * 0.25, max_relative = 1e-14);
        assert!(r.passed);

        let r = verify_gauss_stability(&CoefficientVector::unit(5), 5.0).unwrap();
        assert_eq!(r.lhs, 1.0);
        assert!(r.rhs >= 1.0 && r.passed);
    }

    #[test]
    fn gauss_p4_is_sharp() {
        let a = cv(&[0.4, 0.3, 0.2, 0.1]);
        let r = verify_gauss_stability(&a, 4.0).unwrap();
        assert!(r.margin.abs() <= 1e-12);
    }

    #[test]
    fn diag_examples() {
        for n in [1, 2, 3, 7] {
            for p in [3.5, 4.0, 6.0] {
                let r = verify_diag_stability(&CoefficientVector::diagonal(n), p).unwrap();
                assert!(r.deficit_term < 1e-30);
                assert!(r.margin.abs() <= 1e-12, "n={n} p={p}: {}", r.margin);
            }
        }
        let r = verify_diag_stability(&cv(&[0.75, 0.25]), 4.0).unwrap();
        assert_relative_eq!(r.lhs, 1.75, max_relative = 1e-14);
        assert!(r.passed);
        let r = verify_diag_stability(&cv(&[0.5, 0.3, 0.2]), 3.5).unwrap();
        assert!(r.passed && r.margin > 0.0);
        assert!(verify_diag_stability(&cv(&[0.5, 0.5]), 3.0).is_err());
    }

    #[test]
    fn diag_spec_example_with_the_generic_constant() {
        // n = 2, p = 4 with C = 0.32: rhs = 2.5 − 0.32·2·(1/4)² = 2.46
        let rhs = 2.5 - 0.32 * 2.0 * 0.0625;
        assert_relative_eq!(rhs, 2.46, max_relative = 1e-15);
        assert!(1.75 <= rhs);
    }

    #[test]
    fn diag_cap_branch_is_used() {
        let a = cv(&[0.95, 0.03, 0.02]);
        let (_, info) = diag_constant_for(&a, 5.0).unwrap();
        assert!(info.iter().any(|(k, _)| *k == "capped"));
        assert!(verify_diag_stability(&a, 5.0).unwrap().passed);
    }

    #[test]
    fn crit_examples() {
        let r = verify_crit_stability(&CoefficientVector::diagonal(5)).unwrap();
        assert_eq!(r.deficit_term, 0.0);
        assert!(r.margin.abs() <= 1e-12);

        let r = verify_crit_stability(&cv(&[0.75, 0.25])).unwrap();
        let expected = (0.5f64 * (0.75 + 0.25 - 0.5)).sqrt() * 0.25 * 0.25 * crit_constant() / (0.75 + 0.5);
        assert_relative_eq!(r.deficit_term, expected, max_relative = 1e-14);
        assert!(r.passed);

        let r = verify_crit_stability(&CoefficientVector::unit(4)).unwrap();
        assert!(r.passed && r.margin > 0.0);
    }

    #[test]
    fn schur_examples() {
        let y = SquaresVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        let r = verify_schur_monotonicity(&SquaresVector::diagonal(3), &y, 3.0).unwrap();
        assert!(r.passed && r.margin > 0.0);
        let r = verify_schur_monotonicity(&SquaresVector::diagonal(2), &SquaresVector::unit(2), 4.0).unwrap();
        assert_relative_eq!(r.lhs, 1.0);
        assert_relative_eq!(r.rhs, 2.0, max_relative = 1e-14);
        let r = verify_schur_monotonicity(&y, &y, 3.5).unwrap();
        assert_eq!(r.margin, 0.0);
        let r = verify_schur_monotonicity(&y, &SquaresVector::diagonal(3), 3.0).unwrap();
        assert_eq!(r.detail["swapped"], 1.0);
        let x = SquaresVector::new(vec![0.5, 0.25, 0.25, 0.0]).unwrap();
        let z = SquaresVector::new(vec![0.4, 0.4, 0.1, 0.1]).unwrap();
        assert_eq!(verify_schur_monotonicity(&x, &z, 3.0).unwrap_err(), Error::NotComparable);
    }

    #[test]
    fn n2_examples() {
        for p in [3.5, 4.0, 6.0] {
            let r = verify_n2_closed_form(0.0, p).unwrap();
            assert!(r.margin.abs() <= 1e-12 && r.passed);
        }
        let r = verify_n2_closed_form(0.5, 4.0).unwrap();
        assert_relative_eq!(r.lhs, 2.0, max_relative = 1e-14);
        assert!(r.passed);
        let r = verify_n2_closed_form(0.3, 4.0).unwrap();
        assert_relative_eq!(r.detail["taylor_ratio"], 8.0, max_relative = 1e-3);
        assert!(verify_n2_closed_form(0.6, 4.0).is_err());
    }

    #[test]
    fn n2_constant_at_p4_is_exact() {
        // LHS = (u+v)⁴ + (u−v)⁴ = 2(u²+v²)² + 8u²v² = 4 − 8x² at p = 4
        assert_relative_eq!(n2_constant(4.0).unwrap(), 0.9 * 8.0, max_relative = 1e-6);
        for x in [0.01, 0.2, 0.49] {
            assert_relative_eq!(n2_lhs(x, 4.0), 4.0 - 8.0 * x * x, max_relative = 1e-13);
        }
    }

    #[test]
    fn diag_at_n2_matches_closed_form() {
        // E|S|^p = LHS(x)/2 and E|S₂|^p = 2^{p/2}/2 for a² = (½+x, ½−x)
        for (x, p) in [(0.1, 3.5), (0.4, 5.0)] {
            let a = cv(&[0.5 + x, 0.5 - x]);
            assert_relative_eq!(moment_of(&a, p).unwrap(), n2_lhs(x, p) / 2.0, max_relative = 1e-13);
        }
    }
}
