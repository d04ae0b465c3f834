//! Seeded instance families for `verify --sweep`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use khl_core::constants::diag_cap;
use khl_core::dist::CoefficientVector;
use khl_core::error::{Error, Result};
use khl_core::explore::{sample_vector, Strategy};
use khl_core::schur::{cap_largest, final_vector, t_transform, SquaresVector};
use khl_core::verify::{
    verify_binomial_moment, verify_concentration, verify_crit_stability, verify_diag_stability, verify_doubling,
    verify_exchange_step, verify_gauss_stability, verify_n2_closed_form, verify_procedure_composition,
    verify_schur_monotonicity, verify_t_step, DeficitReport, ExchangeSplit,
};

use crate::Claim;

/// Largest `n` reached by the doubling and binomial sweeps.
const MAX_LADDER_N: usize = 4096;

pub struct SweepSpec {
    pub claim: Claim,
    pub p: f64,
    pub count: usize,
    pub seed: u64,
    pub n_min: usize,
    pub n_max: usize,
    pub gaussian_mass: f64,
}

impl SweepSpec {
    fn vector(&self, k: usize, n_floor: usize) -> Result<CoefficientVector> {
        let lo = self.n_min.max(n_floor);
        if lo > self.n_max {
            return Err(Error::InvalidQuery(format!(
                "claim needs n >= {n_floor}, but --n-max is {}",
                self.n_max
            )));
        }
        let width = self.n_max - lo + 1;
        sample_vector(Strategy::Mixed, lo + k % width, self.seed, (k / width) as u64)
    }

    fn rng(&self, k: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k as u64);
        rng
    }

    fn instance(&self, k: usize) -> Result<DeficitReport> {
        let p = self.p;
        match self.claim {
            Claim::Gauss => verify_gauss_stability(&self.vector(k, 1)?, p),
            Claim::Diag => verify_diag_stability(&self.vector(k, 1)?, p),
            Claim::Crit => verify_crit_stability(&self.vector(k, 1)?),
            Claim::Compose => verify_procedure_composition(&self.vector(k, 1)?, p),
            Claim::Tstep => {
                let a = self.vector(k, 3)?;
                let cap = diag_cap(a.len());
                let x = SquaresVector::from_coefficients(&a);
                let a = if p > 4.0 && x.largest() > cap {
                    final_vector(&x, &cap_largest(&x, cap)?).to_coefficients()?
                } else {
                    a
                };
                verify_t_step(&a, p)
            }
            Claim::Exchange => {
                let a = self.vector(k, 1)?;
                let admissible: Vec<usize> = (0..a.len()).filter(|&j| a.coeffs()[j].powi(2) <= 0.5).collect();
                let split = if admissible.is_empty() {
                    ExchangeSplit::new(CoefficientVector::diagonal(2), 1)?
                } else {
                    let pick = admissible[self.rng(k).gen_range(0..admissible.len())];
                    ExchangeSplit::new(a, pick)?
                };
                verify_exchange_step(&split, p)
            }
            Claim::Conc => verify_concentration(&self.vector(k, 1)?, self.gaussian_mass, None),
            Claim::Schur => {
                let y = SquaresVector::from_coefficients(&self.vector(k, 2)?);
                let lambda = self.rng(k).gen_range(0.0..=1.0);
                let x = t_transform(&y, 0, y.len() - 1, lambda)?;
                verify_schur_monotonicity(&x, &y, p)
            }
            Claim::Doubling => verify_doubling(1 + k % MAX_LADDER_N, p),
            Claim::Binom => verify_binomial_moment(1 + k % MAX_LADDER_N, p),
            Claim::N2 => verify_n2_closed_form((k + 1) as f64 / (2 * self.count) as f64, p),
        }
    }

    /// Reports in instance order.
    pub fn run(&self) -> Result<Vec<DeficitReport>> {
        (0..self.count).into_par_iter().map(|k| self.instance(k)).collect()
    }
}
