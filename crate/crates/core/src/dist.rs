//! Exact laws of Rademacher sums and their moments.
//!
//! A sum `S = Σ aᵢεᵢ` is symmetric, so only the atoms with value ≥ 0 are
//! stored. A positive atom `(v, w)` stands for `P(S = v) = P(S = -v) = w`;
//! an atom at zero carries `P(S = 0)` in full.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, GaussHermite, QuadOptions};

/// Hard cap on the number of coefficients of a general vector.
pub const MAX_DIMENSION: usize = 30;

/// Relative/absolute hybrid tolerance for merging atoms.
pub const MERGE_TOL: f64 = 1e-12;

/// Largest exponent accepted by [`MomentQuery::standard`].
pub const MAX_STANDARD_EXPONENT: f64 = 64.0;

const NORMALIZATION_TOL: f64 = 1e-12;

/// Normalized, descending coefficients `a₁ ≥ … ≥ aₙ ≥ 0` with `Σ aᵢ² = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CoefficientVector {
    coeffs: Vec<f64>,
}

impl CoefficientVector {
    /// Takes absolute values, sorts descending and rescales to unit norm.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidCoefficients("empty coefficient vector".into()));
        }
        if let Some(bad) = raw.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidCoefficients(format!("non-finite coefficient {bad}")));
        }
        let mut coeffs: Vec<f64> = raw.into_iter().map(f64::abs).collect();
        let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidCoefficients(format!("cannot normalize vector of norm {norm}")));
        }
        coeffs.iter_mut().for_each(|c| *c /= norm);
        coeffs.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = coeffs.iter().map(|c| c * c).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidCoefficients(format!(
                "normalization failed: squared norm {total}"
            )));
        }
        Ok(Self { coeffs })
    }

    /// Builds the vector from squared coefficients (a point of the simplex).
    pub fn from_squares(squares: &[f64]) -> Result<Self> {
        if let Some(bad) = squares.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidCoefficients(format!("invalid squared coefficient {bad}")));
        }
        Self::new(squares.iter().map(|x| x.sqrt()).collect())
    }

    /// `a⁽ⁿ⁾ = (1/√n, …, 1/√n)`.
    pub fn diagonal(n: usize) -> Self {
        assert!(n >= 1, "diagonal vector needs n >= 1");
        Self {
            coeffs: vec![(n as f64).recip().sqrt(); n],
        }
    }

    /// `(1, 0, …, 0)` of length `n`.
    pub fn unit(n: usize) -> Self {
        assert!(n >= 1, "unit vector needs n >= 1");
        let mut coeffs = vec![0.0; n];
        coeffs[0] = 1.0;
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn largest(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn squares(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c * c).collect()
    }

    /// `Σ aᵢ⁴`.
    pub fn fourth_power_sum(&self) -> f64 {
        self.coeffs.iter().map(|c| c.powi(4)).sum()
    }

    /// `Σ (aᵢ² − 1/n)²`, the squared distance of the squares to `b⁽ⁿ⁾`.
    pub fn diagonal_distance(&self) -> f64 {
        let inv_n = 1.0 / self.len() as f64;
        self.coeffs.iter().map(|c| (c * c - inv_n).powi(2)).sum()
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        let inv_n = 1.0 / self.len() as f64;
        self.coeffs.iter().all(|c| (c * c - inv_n).abs() <= tol)
    }
}

impl TryFrom<Vec<f64>> for CoefficientVector {
    type Error = Error;
    fn try_from(raw: Vec<f64>) -> Result<Self> {
        Self::new(raw)
    }
}

impl From<CoefficientVector> for Vec<f64> {
    fn from(v: CoefficientVector) -> Self {
        v.coeffs
    }
}

/// One stored atom of a symmetric distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub value: f64,
    pub weight: f64,
}

/// Finite symmetric law stored by its non-negative half.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct SymmetricAtomicDistribution {
    atoms: Vec<Atom>,
}

fn merge_close(a: f64, b: f64) -> bool {
    (b - a).abs() <= MERGE_TOL * a.abs().max(1.0)
}

impl SymmetricAtomicDistribution {
    /// The law of `S ≡ 0`.
    pub fn point_mass_zero() -> Self {
        Self {
            atoms: vec![Atom {
                value: 0.0,
                weight: 1.0,
            }],
        }
    }

    /// Law of `Σ cᵢεᵢ` for arbitrary non-negative `cᵢ` (no normalization).
    /// An empty slice gives the point mass at zero.
    pub fn from_coefficients(coeffs: &[f64]) -> Result<Self> {
        if coeffs.len() > MAX_DIMENSION {
            return Err(Error::DimensionTooLarge {
                n: coeffs.len(),
                max: MAX_DIMENSION,
            });
        }
        if let Some(bad) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidCoefficients(format!("non-finite coefficient {bad}")));
        }
        let mut dist = Self::point_mass_zero();
        for &c in coeffs {
            dist = dist.add_rademacher(c.abs());
        }
        Ok(dist)
    }

    /// Law of `S + cε` for an independent Rademacher `ε`.
    pub fn add_rademacher(&self, c: f64) -> Self {
        if c == 0.0 {
            return self.clone();
        }
        // Entries (u, q) mean P(S' = u) = P(S' = -u) gets q from each side.
        let mut raw: Vec<(f64, f64)> = Vec::with_capacity(2 * self.atoms.len());
        for atom in &self.atoms {
            if atom.value == 0.0 {
                raw.push((c, 0.5 * atom.weight));
            } else {
                raw.push((atom.value + c, 0.5 * atom.weight));
                raw.push(((atom.value - c).abs(), 0.5 * atom.weight));
            }
        }
        raw.sort_by(|x, y| x.0.total_cmp(&y.0));

        let mut atoms: Vec<Atom> = Vec::with_capacity(raw.len());
        let mut zero_weight = 0.0;
        for (u, q) in raw {
            if u <= MERGE_TOL {
                // both signs collapse onto zero
                zero_weight += 2.0 * q;
                continue;
            }
            match atoms.last_mut() {
                Some(last) if merge_close(last.value, u) => last.weight += q,
                _ => atoms.push(Atom { value: u, weight: q }),
            }
        }
        if zero_weight > 0.0 {
            atoms.insert(
                0,
                Atom {
                    value: 0.0,
                    weight: zero_weight,
                },
            );
        }
        Self { atoms }
    }

    /// Law of `c·S`.
    pub fn scaled(&self, c: f64) -> Self {
        let c = c.abs();
        if c == 0.0 {
            return Self::point_mass_zero();
        }
        Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    value: a.value * c,
                    weight: a.weight,
                })
                .collect(),
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// `P(S = 0)`.
    pub fn zero_mass(&self) -> f64 {
        match self.atoms.first() {
            Some(a) if a.value == 0.0 => a.weight,
            _ => 0.0,
        }
    }

    /// Mass of the symmetric closure; 1 up to rounding.
    pub fn total_mass(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| if a.value == 0.0 { a.weight } else { 2.0 * a.weight })
            .sum()
    }

    pub fn max_value(&self) -> f64 {
        self.atoms.last().map_or(0.0, |a| a.value)
    }

    /// `(value, P(|S| = value))` for every stored atom.
    pub fn abs_law(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms.iter().map(|a| {
            let mass = if a.value == 0.0 { a.weight } else { 2.0 * a.weight };
            (a.value, mass)
        })
    }

    /// Sorted `[value, weight]` pairs of the non-negative half.
    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.atoms.iter().map(|a| [a.value, a.weight]).collect()
    }
}

impl TryFrom<Vec<[f64; 2]>> for SymmetricAtomicDistribution {
    type Error = Error;

    fn try_from(pairs: Vec<[f64; 2]>) -> Result<Self> {
        let atoms: Vec<Atom> = pairs
            .into_iter()
            .map(|[value, weight]| Atom { value, weight })
            .collect();
        if atoms.is_empty() {
            return Err(Error::InvalidCoefficients("distribution without atoms".into()));
        }
        for a in &atoms {
            if !(a.value.is_finite() && a.value >= 0.0 && a.weight.is_finite() && a.weight > 0.0) {
                return Err(Error::InvalidCoefficients(format!(
                    "invalid atom ({}, {})",
                    a.value, a.weight
                )));
            }
        }
        if atoms.windows(2).any(|w| w[1].value <= w[0].value || merge_close(w[0].value, w[1].value)) {
            return Err(Error::InvalidCoefficients(
                "atom values must be strictly increasing and separated".into(),
            ));
        }
        let dist = Self { atoms };
        let mass = dist.total_mass();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidCoefficients(format!("total mass {mass} differs from 1")));
        }
        Ok(dist)
    }
}

impl From<SymmetricAtomicDistribution> for Vec<[f64; 2]> {
    fn from(d: SymmetricAtomicDistribution) -> Self {
        d.to_pairs()
    }
}

/// The law of `S = Σ aᵢεᵢ`.
pub fn build_distribution(a: &CoefficientVector) -> Result<SymmetricAtomicDistribution> {
    SymmetricAtomicDistribution::from_coefficients(a.coeffs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    Standard,
    LogSpace,
}

/// Exponent and evaluation mode for [`absolute_moment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentQuery {
    p: f64,
    precision: Precision,
}

impl MomentQuery {
    pub fn standard(p: f64) -> Result<Self> {
        Self::new(p, Precision::Standard)
    }

    pub fn log_space(p: f64) -> Result<Self> {
        Self::new(p, Precision::LogSpace)
    }

    pub fn new(p: f64, precision: Precision) -> Result<Self> {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidQuery(format!("exponent must be finite and >= 0, got {p}")));
        }
        if precision == Precision::Standard && p > MAX_STANDARD_EXPONENT {
            return Err(Error::InvalidQuery(format!(
                "exponent {p} exceeds {MAX_STANDARD_EXPONENT} in standard mode; use log-space"
            )));
        }
        Ok(Self { p, precision })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `log Σ exp(xᵢ)` with max shift; `-inf` for an empty input.
pub(crate) fn log_sum_exp(logs: &[f64]) -> f64 {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + compensated_sum(logs.iter().map(|l| (l - max).exp())).ln()
}

/// `E|S|^p`. The atom at zero never contributes, so `p = 0` yields `P(S ≠ 0)`.
pub fn absolute_moment(d: &SymmetricAtomicDistribution, q: &MomentQuery) -> f64 {
    let p = q.p();
    let positive = d.atoms.iter().filter(|a| a.value > 0.0);
    match q.precision() {
        Precision::Standard => compensated_sum(positive.map(|a| 2.0 * a.weight * a.value.powf(p))),
        Precision::LogSpace => {
            let logs: Vec<f64> = positive
                .map(|a| (2.0 * a.weight).ln() + p * a.value.ln())
                .collect();
            log_sum_exp(&logs).exp()
        }
    }
}

/// Shorthand for a standard-precision moment of a validated distribution.
pub fn moment(d: &SymmetricAtomicDistribution, p: f64) -> f64 {
    let q = MomentQuery::new(p, if p > MAX_STANDARD_EXPONENT { Precision::LogSpace } else { Precision::Standard })
        .expect("moment exponent must be finite and non-negative");
    absolute_moment(d, &q)
}

/// Binomial coefficients are exact in `u64` up to this `n` (C(50,25) < 2^53).
const DIRECT_BINOMIAL_MAX: usize = 50;

/// `E|Sₙ|^p` for the diagonal sum `Sₙ = n^{-1/2} Σ εᵢ`.
pub fn diagonal_moment(n: usize, p: f64) -> f64 {
    assert!(n >= 1, "diagonal_moment needs n >= 1");
    assert!(p.is_finite() && p >= 0.0, "exponent must be finite and non-negative");
    let nf = n as f64;
    let scale = nf.sqrt();
    if n <= DIRECT_BINOMIAL_MAX {
        let mut binom: u64 = 1;
        let norm = 0.5f64.powi(n as i32);
        let mut terms = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let gap = (n as i64 - 2 * k as i64).unsigned_abs() as f64;
            if gap > 0.0 {
                terms.push(binom as f64 * norm * (gap / scale).powf(p));
            }
            if k < n {
                binom = binom * (n - k) as u64 / (k + 1) as u64;
            }
        }
        compensated_sum(terms)
    } else {
        let logs: Vec<f64> = (0..=n)
            .filter(|&k| 2 * k != n)
            .map(|k| {
                let gap = (n as i64 - 2 * k as i64).unsigned_abs() as f64;
                ln_binomial(n, k) - nf * std::f64::consts::LN_2 + p * (gap.ln() - scale.ln())
            })
            .collect();
        log_sum_exp(&logs).exp()
    }
}

pub(crate) fn ln_binomial(n: usize, k: usize) -> f64 {
    use libm::lgamma as ln_gamma;
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `E|G|^p = 2^{p/2} Γ((p+1)/2) / √π` for a standard Gaussian `G`.
pub fn gaussian_abs_moment(p: f64) -> f64 {
    assert!(p.is_finite() && p >= 0.0, "exponent must be finite and non-negative");
    if p.fract() == 0.0 && p <= 300.0 {
        // double factorial forms: (p-1)!! for even p, √(2/π)(p-1)!! for odd p
        let k = p as u64;
        let mut df = 1.0f64;
        let mut j = k as i64 - 1;
        while j > 1 {
            df *= j as f64;
            j -= 2;
        }
        return if k % 2 == 0 { df } else { df * (2.0 / PI).sqrt() };
    }
    let half = 0.5 * (p + 1.0);
    if half < 150.0 {
        2f64.powf(0.5 * p) * libm::tgamma(half) / PI.sqrt()
    } else {
        (0.5 * p * std::f64::consts::LN_2 + libm::lgamma(half) - 0.5 * PI.ln()).exp()
    }
}

const GH_SIZES: [usize; 4] = [64, 128, 256, 512];
const GH_REL_TOL: f64 = 1e-10;
/// Ratio |s|/b beyond which the kink of |s + bx|^p sits outside the
/// effective Gaussian support and plain Gauss–Hermite converges.
const GH_SMOOTH_RATIO: f64 = 8.0;
const GAUSS_CUTOFF: f64 = 40.0;

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `E|s + bG|^p` for a single atom.
pub fn shifted_gaussian_moment(s: f64, b: f64, p: f64) -> Result<f64> {
    let s = s.abs();
    let b = b.abs();
    if b == 0.0 {
        return Ok(if s == 0.0 { if p == 0.0 { 1.0 } else { 0.0 } } else { s.powf(p) });
    }
    if s == 0.0 {
        return Ok(b.powf(p) * gaussian_abs_moment(p));
    }
    let ratio = s / b;
    if ratio >= GH_SMOOTH_RATIO {
        if let Some(v) = hermite_doubling(s, b, p) {
            return Ok(v);
        }
    }
    kink_split_moment(ratio, p).map(|v| b.powf(p) * v)
}

fn hermite_doubling(s: f64, b: f64, p: f64) -> Option<f64> {
    let mut prev: Option<f64> = None;
    for n in GH_SIZES {
        let v = GaussHermite::cached(n).gaussian_expectation(|g| (s + b * g).abs().powf(p));
        if let Some(pv) = prev {
            if (v - pv).abs() <= GH_REL_TOL * v.abs() {
                return Some(v);
            }
        }
        prev = Some(v);
    }
    None
}

/// `E|r + G|^p` via the folded density: `∫₀^∞ z^p (φ(z−r) + φ(z+r)) dz`.
fn kink_split_moment(r: f64, p: f64) -> Result<f64> {
    let f = |z: f64| {
        if z <= 0.0 {
            if p == 0.0 {
                2.0 * std_normal_pdf(r)
            } else {
                0.0
            }
        } else {
            z.powf(p) * (std_normal_pdf(z - r) + std_normal_pdf(z + r))
        }
    };
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-13,
        max_intervals: 4000,
    };
    let upper = r + GAUSS_CUTOFF;
    let left = integrate(f, 0.0, r, opts)?;
    let right = integrate(f, r, upper, opts)?;
    Ok(left.value + right.value)
}

/// `E|S + bG|^p` with `G` standard Gaussian independent of `S`.
pub fn mixed_abs_moment(d: &SymmetricAtomicDistribution, b: f64, p: f64) -> Result<f64> {
    if !(b.is_finite() && b >= 0.0) {
        return Err(Error::domain(format!("gaussian mass must be finite and >= 0, got {b}")));
    }
    if !(p.is_finite() && p >= 0.0) {
        return Err(Error::domain(format!("exponent must be finite and >= 0, got {p}")));
    }
    if b == 0.0 {
        return Ok(moment(d, p));
    }
    let mut terms = Vec::with_capacity(d.atoms.len());
    for (value, mass) in d.abs_law() {
        terms.push(mass * shifted_gaussian_moment(value, b, p)?);
    }
    Ok(compensated_sum(terms))
}

/// `P(|S| ≤ level)`; atoms at `|value| = level` (up to merge tolerance) count.
pub fn interval_probability(d: &SymmetricAtomicDistribution, level: f64) -> f64 {
    let cutoff = level + MERGE_TOL * level.abs().max(1.0);
    compensated_sum(d.abs_law().filter(|(v, _)| *v <= cutoff).map(|(_, m)| m)).min(1.0)
}

/// `P(|S + bG| ≤ level)` by summing Gaussian CDF differences over atoms.
pub fn mixed_interval_probability(d: &SymmetricAtomicDistribution, b: f64, level: f64) -> f64 {
    if b == 0.0 {
        return interval_probability(d, level);
    }
    compensated_sum(d.abs_law().map(|(s, m)| {
        m * (std_normal_cdf((level - s) / b) - std_normal_cdf((-level - s) / b))
    }))
    .clamp(0.0, 1.0)
}
