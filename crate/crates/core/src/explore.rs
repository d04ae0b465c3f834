//! Seeded sampling of coefficient vectors and searches for violations of
//! the conjectured sharp constants.
//!
//! Every sample is a pure function of `(strategy, n, seed, index)`, and
//! results are reduced in index order, so outcomes do not depend on the
//! number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{
    absolute_moment, build_distribution, diagonal_moment, gaussian_abs_moment, moment, CoefficientVector,
    MomentQuery, MAX_DIMENSION,
};
use crate::error::{Error, Result};

/// Largest dimension the explorer samples.
pub const MAX_SEARCH_N: usize = 20;
/// Largest number of samples per search.
pub const MAX_SAMPLES: usize = 10_000_000;
/// Samples whose deficit falls below this are left out of ratio infima. The
/// moment gap carries an absolute rounding error near `4e-16`, so the ratio
/// is accurate to about `4e-6` at the cutoff.
pub const RATIO_EXCLUSION: f64 = 1e-10;
/// First-pass violation tolerance, relative to `max(1, |terms|)`.
pub const SEARCH_TOLERANCE: f64 = 1e-10;
/// Tolerance of the confirming pass.
pub const CONFIRM_TOLERANCE: f64 = 1e-12;
/// `a₁²` levels of the spiky family: both sides of ½ and the cap `0.9`.
pub const SPIKE_LEVELS: [f64; 3] = [0.49, 0.51, 0.9];

/// How coefficient vectors are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Strategy {
    /// Squares uniform on the simplex (normalized exponential spacings).
    Simplex,
    /// Squares `1/n` plus a centred perturbation of random magnitude.
    NearDiagonal,
    /// `a₁²` from [`SPIKE_LEVELS`], the rest split evenly or at random.
    Spiky,
    /// Points of the simplex grid with the given step, enumerated by index.
    Grid { step: f64 },
    /// Cycles simplex, near-diagonal and spiky by index.
    Mixed,
}

impl Strategy {
    /// Parses `simplex | near_diagonal | spiky | grid | mixed`.
    pub fn parse(name: &str, grid_step: Option<f64>) -> Result<Self> {
        Ok(match name {
            "simplex" => Strategy::Simplex,
            "near_diagonal" => Strategy::NearDiagonal,
            "spiky" => Strategy::Spiky,
            "mixed" => Strategy::Mixed,
            "grid" => Strategy::Grid {
                step: grid_step.ok_or_else(|| Error::InvalidQuery("grid strategy needs a grid step".into()))?,
            },
            other => return Err(Error::InvalidQuery(format!("unknown strategy {other:?}"))),
        })
    }
}

fn rng_for(seed: u64, n: usize, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

fn exponential_spacings(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect()
}

/// Squares `1/n + εᵢ − mean(ε)`, shrunk towards `1/n` if any would be negative.
pub fn perturbed_diagonal(n: usize, eps: &[f64]) -> Result<CoefficientVector> {
    if eps.len() != n || n == 0 {
        return Err(Error::InvalidQuery(format!("need {n} perturbations, got {}", eps.len())));
    }
    let inv_n = 1.0 / n as f64;
    let mean = eps.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = eps.iter().map(|e| e - mean).collect();
    if centred.iter().all(|&c| c == 0.0) {
        return Ok(CoefficientVector::diagonal(n));
    }
    let lowest = centred.iter().copied().fold(0.0, f64::min);
    let shrink = if lowest < -inv_n { inv_n / -lowest } else { 1.0 };
    let squares: Vec<f64> = centred.iter().map(|c| (inv_n + shrink * c).max(0.0)).collect();
    CoefficientVector::from_squares(&squares)
}

/// `a₁² = spike`, the remaining mass split evenly (`even`) or uniformly at random.
fn spiky(n: usize, spike: f64, even: bool, rng: &mut ChaCha8Rng) -> Result<CoefficientVector> {
    if n == 1 {
        return Ok(CoefficientVector::unit(1));
    }
    let rest = 1.0 - spike;
    let mut squares = vec![spike];
    if even {
        squares.extend(std::iter::repeat(rest / (n - 1) as f64).take(n - 1));
    } else {
        let w = exponential_spacings(rng, n - 1);
        let total: f64 = w.iter().sum();
        // keep the spike the largest entry
        squares.extend(w.iter().map(|x| (rest * x / total).min(spike)));
    }
    CoefficientVector::from_squares(&squares)
}

/// Descending integer partitions of `m` into at most `n` parts, padded with zeros.
pub fn grid_points(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, max_part: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            let mut point = prefix.clone();
            point.resize(prefix.len() + slots, 0);
            out.push(point);
            return;
        }
        if slots == 0 {
            return;
        }
        for part in (1..=max_part.min(left)).rev() {
            prefix.push(part);
            rec(left - part, part, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, m, n, &mut Vec::new(), &mut out);
    out
}

fn grid_divisions(step: f64) -> Result<usize> {
    if !(step.is_finite() && step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidQuery(format!("grid step must lie in (0, 1], got {step}")));
    }
    let m = (1.0 / step).round();
    if (m * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidQuery(format!("grid step must divide 1, got {step}")));
    }
    Ok(m as usize)
}

/// Deterministic sample number `index` of `strategy` in dimension `n`.
pub fn sample_vector(strategy: Strategy, n: usize, seed: u64, index: u64) -> Result<CoefficientVector> {
    if n == 0 || n > MAX_DIMENSION {
        return Err(Error::DimensionTooLarge { n, max: MAX_DIMENSION });
    }
    let mut rng = rng_for(seed, n, index);
    match strategy {
        Strategy::Simplex => CoefficientVector::from_squares(&exponential_spacings(&mut rng, n)),
        Strategy::NearDiagonal => {
            // magnitudes from 1/n down to 1e-6/n, log-uniform
            let scale = 10f64.powf(-6.0 * rng.gen::<f64>()) / n as f64;
            let eps: Vec<f64> = (0..n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
            perturbed_diagonal(n, &eps)
        }
        Strategy::Spiky => {
            let spike = SPIKE_LEVELS[(index % 3) as usize];
            spiky(n, spike, (index / 3) % 2 == 0, &mut rng)
        }
        Strategy::Grid { step } => {
            let points = grid_points(n, grid_divisions(step)?);
            let point = &points[(index % points.len() as u64) as usize];
            CoefficientVector::from_squares(&point.iter().map(|&k| k as f64).collect::<Vec<_>>())
        }
        Strategy::Mixed => {
            let family = [Strategy::Simplex, Strategy::NearDiagonal, Strategy::Spiky][(index % 3) as usize];
            sample_vector(family, n, seed, index / 3)
        }
    }
}

/// Parameters of one search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub p: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub samples: usize,
    pub seed: u64,
    pub strategy: Strategy,
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p >= 3.0) {
            return Err(Error::domain(format!("search exponent must be >= 3, got {}", self.p)));
        }
        if self.n_min == 0 || self.n_min > self.n_max || self.n_max > MAX_SEARCH_N {
            return Err(Error::InvalidQuery(format!(
                "need 1 <= n_min <= n_max <= {MAX_SEARCH_N}, got [{}, {}]",
                self.n_min, self.n_max
            )));
        }
        if self.samples == 0 || self.samples > MAX_SAMPLES {
            return Err(Error::InvalidQuery(format!("samples must lie in [1, {MAX_SAMPLES}], got {}", self.samples)));
        }
        if let Strategy::Grid { step } = self.strategy {
            grid_divisions(step)?;
        }
        Ok(())
    }

    /// Dimension and per-dimension index of global sample `k`. Random
    /// strategies visit dimensions round-robin; a grid is walked one
    /// dimension after another.
    fn slot(&self, k: usize) -> (usize, u64) {
        if let Strategy::Grid { step } = self.strategy {
            let m = grid_divisions(step).unwrap_or(1);
            let mut rest = k;
            for n in self.n_min..=self.n_max {
                let count = grid_points(n, m).len();
                if rest < count {
                    return (n, rest as u64);
                }
                rest -= count;
            }
        }
        let width = self.n_max - self.n_min + 1;
        (self.n_min + k % width, (k / width) as u64)
    }

    /// Number of samples actually run: a grid is visited once per point.
    fn sample_count(&self) -> usize {
        match self.strategy {
            Strategy::Grid { step } => {
                let m = grid_divisions(step).unwrap_or(1);
                let total: usize = (self.n_min..=self.n_max).map(|n| grid_points(n, m).len()).sum();
                total.min(self.samples)
            }
            _ => self.samples,
        }
    }
}

/// Which conjecture a search targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conjecture {
    /// `E|S|^p ≤ E|G|^p − (E|G|^p − 1) Σaᵢ⁴`.
    Gauss,
    /// `E|S|³ ≤ E|Sₙ|³ − C Σ(aᵢ² − 1/n)²` for some `C > 0`.
    Crit,
}

/// Result for one sampled vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub n: usize,
    pub margin: f64,
    /// Moment gap over deficit; `None` when the deficit is excluded.
    pub ratio: Option<f64>,
    pub violation: bool,
    pub vector: CoefficientVector,
}

/// Infima over the samples of one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionOutcome {
    pub n: usize,
    pub samples: usize,
    pub best_constant_estimate: Option<f64>,
    pub worst_margin: f64,
    pub violations: usize,
}

/// Summary of a search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub conjecture: Conjecture,
    pub p: f64,
    /// Infimum of gap/deficit: the largest constant consistent with the samples.
    pub best_constant_estimate: Option<f64>,
    pub worst_vector: CoefficientVector,
    pub worst_margin: f64,
    pub samples_run: usize,
    pub violations: usize,
    pub per_n: Vec<DimensionOutcome>,
}

struct Terms {
    margin: f64,
    gap: f64,
    deficit: f64,
    scale: f64,
}

fn gauss_terms(a: &CoefficientVector, p: f64, log_space: bool) -> Result<Terms> {
    let d = build_distribution(a)?;
    let m = if log_space { absolute_moment(&d, &MomentQuery::log_space(p)?) } else { moment(&d, p) };
    let g = gaussian_abs_moment(p);
    let deficit = a.fourth_power_sum();
    let gap = g - m;
    Ok(Terms {
        margin: gap - (g - 1.0) * deficit,
        gap,
        deficit,
        scale: g.max(1.0),
    })
}

fn crit_terms(a: &CoefficientVector, log_space: bool) -> Result<Terms> {
    let d = build_distribution(a)?;
    let m = if log_space { absolute_moment(&d, &MomentQuery::log_space(3.0)?) } else { moment(&d, 3.0) };
    let top = diagonal_moment(a.len(), 3.0);
    let gap = top - m;
    Ok(Terms {
        margin: gap,
        gap,
        deficit: a.diagonal_distance(),
        scale: top.max(1.0),
    })
}

fn evaluate(conj: Conjecture, a: &CoefficientVector, p: f64, log_space: bool) -> Result<Terms> {
    match conj {
        Conjecture::Gauss => gauss_terms(a, p, log_space),
        Conjecture::Crit => crit_terms(a, log_space),
    }
}

fn record(conj: Conjecture, cfg: &SearchConfig, k: usize) -> Result<SampleRecord> {
    let (n, index) = cfg.slot(k);
    let vector = sample_vector(cfg.strategy, n, cfg.seed, index)?;
    let t = evaluate(conj, &vector, cfg.p, false)?;
    let mut violation = t.margin < -SEARCH_TOLERANCE * t.scale;
    if violation {
        // confirm with log-space summation under the tighter tolerance
        let again = evaluate(conj, &vector, cfg.p, true)?;
        violation = again.margin < -CONFIRM_TOLERANCE * again.scale;
    }
    let ratio = (t.deficit >= RATIO_EXCLUSION).then(|| t.gap / t.deficit);
    Ok(SampleRecord {
        index: k,
        n,
        margin: t.margin,
        ratio,
        violation,
        vector,
    })
}

/// Evaluates every sample of the search, in index order.
pub fn evaluate_samples(conj: Conjecture, cfg: &SearchConfig) -> Result<Vec<SampleRecord>> {
    cfg.validate()?;
    if conj == Conjecture::Crit && cfg.p != 3.0 {
        return Err(Error::domain(format!("the p = 3 conjecture needs p = 3, got {}", cfg.p)));
    }
    (0..cfg.sample_count()).into_par_iter().map(|k| record(conj, cfg, k)).collect()
}

fn min_option(acc: Option<f64>, x: Option<f64>) -> Option<f64> {
    match (acc, x) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// Reduces records in index order; ties keep the earliest sample.
pub fn summarize(conj: Conjecture, cfg: &SearchConfig, records: &[SampleRecord]) -> Result<SearchOutcome> {
    let first = records.first().ok_or_else(|| Error::InvalidQuery("no samples to summarize".into()))?;
    let mut worst = first;
    let mut best = None;
    let mut per_n: Vec<DimensionOutcome> = (cfg.n_min..=cfg.n_max)
        .map(|n| DimensionOutcome {
            n,
            samples: 0,
            best_constant_estimate: None,
            worst_margin: f64::INFINITY,
            violations: 0,
        })
        .collect();
    for r in records {
        if r.margin < worst.margin {
            worst = r;
        }
        best = min_option(best, r.ratio);
        let slot = &mut per_n[r.n - cfg.n_min];
        slot.samples += 1;
        slot.best_constant_estimate = min_option(slot.best_constant_estimate, r.ratio);
        slot.worst_margin = slot.worst_margin.min(r.margin);
        slot.violations += usize::from(r.violation);
    }
    per_n.retain(|d| d.samples > 0);
    Ok(SearchOutcome {
        conjecture: conj,
        p: cfg.p,
        best_constant_estimate: best,
        worst_vector: worst.vector.clone(),
        worst_margin: worst.margin,
        samples_run: records.len(),
        violations: records.iter().filter(|r| r.violation).count(),
        per_n,
    })
}

/// Probes `E|S|^p ≤ E|G|^p − (E|G|^p − 1) Σaᵢ⁴`.
pub fn search_conjecture_gauss(cfg: &SearchConfig) -> Result<SearchOutcome> {
    let records = evaluate_samples(Conjecture::Gauss, cfg)?;
    summarize(Conjecture::Gauss, cfg, &records)
}

/// Estimates the largest `C` with `E|S|³ ≤ E|Sₙ|³ − C Σ(aᵢ² − 1/n)²` on the sample.
pub fn search_conjecture_crit(cfg: &SearchConfig) -> Result<SearchOutcome> {
    let records = evaluate_samples(Conjecture::Crit, cfg)?;
    summarize(Conjecture::Crit, cfg, &records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(p: f64, n_min: usize, n_max: usize, samples: usize, strategy: Strategy) -> SearchConfig {
        SearchConfig {
            p,
            n_min,
            n_max,
            samples,
            seed: 11,
            strategy,
        }
    }

    #[test]
    fn zero_perturbation_is_diagonal() {
        let a = perturbed_diagonal(5, &[0.0; 5]).unwrap();
        assert_eq!(a, CoefficientVector::diagonal(5));
        let a = perturbed_diagonal(3, &[0.3, 0.3, 0.3]).unwrap();
        assert!(a.is_diagonal(1e-15));
    }

    #[test]
    fn perturbation_stays_on_simplex() {
        let a = perturbed_diagonal(3, &[5.0, -5.0, 0.0]).unwrap();
        let sq = a.squares();
        assert!(sq.iter().all(|&x| x >= 0.0));
        assert_relative_eq!(sq.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn spiky_even_family() {
        let a = sample_vector(Strategy::Spiky, 3, 0, 2).unwrap();
        let sq = a.squares();
        assert_relative_eq!(sq[0], 0.9, epsilon = 1e-15);
        assert_relative_eq!(sq[1], 0.05, epsilon = 1e-15);
        assert_relative_eq!(sq[2], 0.05, epsilon = 1e-15);
        for index in 0..30 {
            let a = sample_vector(Strategy::Spiky, 6, 3, index).unwrap();
            assert_relative_eq!(a.squares()[0], SPIKE_LEVELS[(index % 3) as usize], epsilon = 1e-14);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        for strategy in [Strategy::Simplex, Strategy::NearDiagonal, Strategy::Spiky, Strategy::Mixed] {
            let a = sample_vector(strategy, 7, 42, 1234).unwrap();
            let b = sample_vector(strategy, 7, 42, 1234).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, sample_vector(strategy, 7, 42, 1235).unwrap());
        }
    }

    #[test]
    fn grid_enumeration() {
        // partitions of 4 into at most 3 parts: 4, 31, 22, 211
        assert_eq!(grid_points(3, 4).len(), 4);
        assert_eq!(grid_points(2, 4), vec![vec![4, 0], vec![3, 1], vec![2, 2]]);
        let a = sample_vector(Strategy::Grid { step: 0.25 }, 2, 0, 1).unwrap();
        assert_relative_eq!(a.squares()[0], 0.75, epsilon = 1e-15);
        assert!(Strategy::parse("grid", Some(0.3)).is_ok());
        assert!(cfg(3.0, 2, 2, 10, Strategy::Grid { step: 0.3 }).validate().is_err());
        // n = 2 has 3 points at step ¼, n = 3 has 4
        let c = cfg(3.0, 2, 3, 100, Strategy::Grid { step: 0.25 });
        assert_eq!(c.sample_count(), 7);
        assert_eq!(c.slot(2), (2, 2));
        assert_eq!(c.slot(3), (3, 0));
    }

    #[test]
    fn gauss_conjecture_is_tight_at_n1() {
        for p in [3.0, 5.0, 7.5] {
            let out = search_conjecture_gauss(&cfg(p, 1, 1, 4, Strategy::Simplex)).unwrap();
            assert!(out.worst_margin.abs() < 1e-12);
            assert_relative_eq!(out.best_constant_estimate.unwrap(), gaussian_abs_moment(p) - 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gauss_conjecture_is_identity_at_p4() {
        let out = search_conjecture_gauss(&cfg(4.0, 1, 10, 600, Strategy::Mixed)).unwrap();
        assert_eq!(out.violations, 0);
        assert!(out.worst_margin.abs() < 1e-13);
        for r in evaluate_samples(Conjecture::Gauss, &cfg(4.0, 2, 6, 100, Strategy::Simplex)).unwrap() {
            assert!(r.margin.abs() < 1e-13);
        }
    }

    #[test]
    fn crit_example_ratio() {
        let a = CoefficientVector::unit(4);
        let t = crit_terms(&a, false).unwrap();
        assert_relative_eq!(t.gap / t.deficit, 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn crit_excludes_diagonal() {
        let out = search_conjecture_crit(&cfg(3.0, 1, 1, 3, Strategy::Simplex)).unwrap();
        assert_eq!(out.best_constant_estimate, None);
        assert!(search_conjecture_crit(&cfg(3.5, 2, 3, 3, Strategy::Simplex)).is_err());
    }

    #[test]
    fn outcome_independent_of_thread_count() {
        let c = cfg(5.0, 2, 8, 300, Strategy::Mixed);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| search_conjecture_gauss(&c)).unwrap();
        let b = four.install(|| search_conjecture_gauss(&c)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn per_n_reporting() {
        let out = search_conjecture_crit(&cfg(3.0, 2, 4, 90, Strategy::Mixed)).unwrap();
        assert_eq!(out.per_n.len(), 3);
        assert!(out.per_n.iter().all(|d| d.samples == 30));
        assert!(out.per_n.iter().all(|d| d.best_constant_estimate.unwrap() > 0.0));
    }
}
