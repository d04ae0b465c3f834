//! Majorization on the simplex of squared coefficients and the
//! T-transformations that move a vector down the Schur order.

use serde::{Deserialize, Serialize};

use crate::dist::CoefficientVector;
use crate::error::{Error, Result};

/// Per-prefix tolerance of [`majorizes`].
pub const PREFIX_TOL: f64 = 1e-12;
/// An entry within this distance of `1/n` counts as pinned.
pub const PIN_TOL: f64 = 1e-10;
const SUM_TOL: f64 = 1e-12;

/// Squared coefficients: descending, non-negative, summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SquaresVector {
    squares: Vec<f64>,
}

/// Stable descending sort; equal values keep their relative order.
fn sort_desc(v: &mut [f64]) {
    v.sort_by(|a, b| b.total_cmp(a));
}

impl SquaresVector {
    pub fn new(mut squares: Vec<f64>) -> Result<Self> {
        if squares.is_empty() {
            return Err(Error::InvalidCoefficients("empty squares vector".into()));
        }
        if let Some(bad) = squares.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidCoefficients(format!("invalid square {bad}")));
        }
        let total: f64 = squares.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidCoefficients(format!("squares sum to {total}, expected 1")));
        }
        sort_desc(&mut squares);
        Ok(Self { squares })
    }

    /// Rescales arbitrary non-negative weights onto the simplex.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidCoefficients(format!("cannot normalize weights of sum {total}")));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    /// `b⁽ⁿ⁾ = (1/n, …, 1/n)`.
    pub fn diagonal(n: usize) -> Self {
        assert!(n >= 1, "diagonal vector needs n >= 1");
        Self {
            squares: vec![1.0 / n as f64; n],
        }
    }

    /// `e₁ = (1, 0, …, 0)`.
    pub fn unit(n: usize) -> Self {
        assert!(n >= 1, "unit vector needs n >= 1");
        let mut squares = vec![0.0; n];
        squares[0] = 1.0;
        Self { squares }
    }

    pub fn from_coefficients(a: &CoefficientVector) -> Self {
        let mut squares = a.squares();
        sort_desc(&mut squares);
        Self { squares }
    }

    pub fn to_coefficients(&self) -> Result<CoefficientVector> {
        CoefficientVector::from_squares(&self.squares)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.squares
    }

    pub fn len(&self) -> usize {
        self.squares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.squares.is_empty()
    }

    pub fn largest(&self) -> f64 {
        self.squares[0]
    }

    pub fn sum(&self) -> f64 {
        self.squares.iter().sum()
    }

    /// `Σ xᵢ²`, i.e. `Σ aᵢ⁴` for the underlying coefficients.
    pub fn sum_of_squares(&self) -> f64 {
        self.squares.iter().map(|x| x * x).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        let target = 1.0 / self.len() as f64;
        self.squares.iter().all(|x| (x - target).abs() <= PIN_TOL)
    }

    fn pinned_count(&self) -> usize {
        let target = 1.0 / self.len() as f64;
        self.squares.iter().filter(|x| (*x - target).abs() <= PIN_TOL).count()
    }
}

impl TryFrom<Vec<f64>> for SquaresVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SquaresVector> for Vec<f64> {
    fn from(v: SquaresVector) -> Self {
        v.squares
    }
}

/// One T-transformation with its endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTransformStep {
    pub before: SquaresVector,
    pub after: SquaresVector,
    pub j: usize,
    pub k: usize,
    pub lambda: f64,
    /// Lower bound on the moment gain of this step; 0 until a verifier fills it.
    pub deficit_bound: f64,
}

/// True iff `x ≺ y`: every prefix sum of `x` is at most that of `y`.
/// The shorter vector is padded with zeros.
pub fn majorizes(x: &SquaresVector, y: &SquaresVector) -> bool {
    prefix_dominated(x.as_slice(), y.as_slice())
}

/// [`majorizes`] on raw descending slices.
pub fn prefix_dominated(x: &[f64], y: &[f64]) -> bool {
    let n = x.len().max(y.len());
    let (mut sx, mut sy) = (0.0, 0.0);
    for i in 0..n {
        sx += x.get(i).copied().unwrap_or(0.0);
        sy += y.get(i).copied().unwrap_or(0.0);
        if sx > sy + PREFIX_TOL {
            return false;
        }
    }
    true
}

/// `T_{j,k}`: `x_j ← (1−λ)x_j + λx_k`, `x_k ← λx_j + (1−λ)x_k`, then re-sorted.
pub fn t_transform(x: &SquaresVector, j: usize, k: usize, lambda: f64) -> Result<SquaresVector> {
    let n = x.len();
    for index in [j, k] {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, len: n });
        }
    }
    if j == k {
        return Err(Error::domain("T-transformation needs two distinct indices"));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::LambdaOutOfRange(lambda));
    }
    let mut v = x.squares.clone();
    let (xj, xk) = (v[j], v[k]);
    v[j] = (1.0 - lambda) * xj + lambda * xk;
    v[k] = lambda * xj + (1.0 - lambda) * xk;
    sort_desc(&mut v);
    Ok(SquaresVector { squares: v })
}

/// Applies a T-step whose two new entries are known exactly.
fn step_with_values(x: &SquaresVector, j: usize, k: usize, new_j: f64, new_k: f64) -> TTransformStep {
    let (xj, xk) = (x.squares[j], x.squares[k]);
    let lambda = if xj == xk { 0.0 } else { ((xj - new_j) / (xj - xk)).clamp(0.0, 1.0) };
    let mut v = x.squares.clone();
    v[j] = new_j;
    v[k] = new_k;
    sort_desc(&mut v);
    TTransformStep {
        before: x.clone(),
        after: SquaresVector { squares: v },
        j,
        k,
        lambda,
        deficit_bound: 0.0,
    }
}

/// Moves `x` to `b⁽ⁿ⁾` by repeatedly replacing the largest and smallest
/// entries `(x₁, xₙ)` with `(x₁ + xₙ − 1/n, 1/n)`. Each step pins at least
/// one more entry at `1/n`, so there are at most `n − 1` steps.
pub fn diagonalize(x: &SquaresVector) -> Vec<TTransformStep> {
    let n = x.len();
    let target = 1.0 / n as f64;
    let mut steps = Vec::new();
    let mut current = x.clone();
    while !current.is_diagonal() && steps.len() < n {
        let pinned = current.pinned_count();
        let (j, k) = (0, n - 1);
        let (xj, xk) = (current.squares[j], current.squares[k]);
        let step = step_with_values(&current, j, k, xj + xk - target, target);
        debug_assert!(step.after.pinned_count() > pinned);
        current = step.after.clone();
        steps.push(step);
    }
    steps
}

/// Lowers the largest entry to `cap` by moving mass into the smallest
/// entries first, one T-transformation per receiving entry.
pub fn cap_largest(x: &SquaresVector, cap: f64) -> Result<Vec<TTransformStep>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::domain("capping needs at least two entries"));
    }
    if !(cap > 0.0 && cap < 1.0) {
        return Err(Error::domain(format!("cap must lie in (0, 1), got {cap}")));
    }
    if cap < 1.0 / n as f64 {
        return Err(Error::CapInfeasible { cap, n });
    }
    let mut steps = Vec::new();
    let mut current = x.clone();
    while current.largest() > cap + PREFIX_TOL && steps.len() < n {
        let k = n - 1;
        let (top, low) = (current.squares[0], current.squares[k]);
        let delta = (top - cap).min(cap - low);
        let step = step_with_values(&current, 0, k, top - delta, low + delta);
        current = step.after.clone();
        steps.push(step);
    }
    Ok(steps)
}

/// The vector reached after applying `steps` to `start`.
pub fn final_vector(start: &SquaresVector, steps: &[TTransformStep]) -> SquaresVector {
    steps.last().map_or_else(|| start.clone(), |s| s.after.clone())
}
