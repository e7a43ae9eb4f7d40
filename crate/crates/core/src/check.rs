//! Randomized comparison of the closed-form prox against the brute-force oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::prox::{objective, prox, prox_oracle, Grid, WeightedAbsSum};

pub const ARGMIN_TOL: f64 = 1e-4;
pub const OBJECTIVE_TOL: f64 = 1e-8;
pub const SOFT_THRESHOLD_TOL: f64 = 1e-15;
const ORACLE_CELLS: usize = 4000;
/// Every tenth case is the single-term soft threshold `c|x|`.
const DEGENERATE_EVERY: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxCheckReport {
    pub cases: usize,
    pub seed: u64,
    pub max_deviation: f64,
    pub max_objective_excess: f64,
    pub soft_threshold_cases: usize,
    pub max_soft_threshold_error: f64,
}

impl ProxCheckReport {
    pub fn passed(&self) -> bool {
        self.max_deviation <= ARGMIN_TOL
            && self.max_objective_excess <= OBJECTIVE_TOL
            && self.max_soft_threshold_error <= SOFT_THRESHOLD_TOL
    }
}

/// `sign(v)·max(|v| − λc, 0)`.
pub fn soft_threshold(v: f64, threshold: f64) -> f64 {
    v.signum() * (v.abs() - threshold).max(0.0)
}

/// Relative error scaled by `max(1, |expected|)`.
pub fn relative_error(got: f64, expected: f64) -> f64 {
    (got - expected).abs() / expected.abs().max(1.0)
}

pub fn check_prox(n_cases: usize, seed: u64) -> Result<ProxCheckReport> {
    if n_cases == 0 {
        return Err(Error::InvalidInput("need at least one case".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ProxCheckReport {
        cases: n_cases,
        seed,
        max_deviation: 0.0,
        max_objective_excess: 0.0,
        soft_threshold_cases: 0,
        max_soft_threshold_error: 0.0,
    };
    for case in 0..n_cases {
        let lambda = rng.random_range(0.01..3.0);
        let v = rng.random_range(-10.0..10.0);
        let h = if case % DEGENERATE_EVERY == 0 {
            let c = rng.random_range(0.01..2.0);
            let h = WeightedAbsSum::new([(0.0, c)])?;
            let got = prox(&h, lambda, v)?.value;
            let err = relative_error(got, soft_threshold(v, lambda * c));
            report.soft_threshold_cases += 1;
            report.max_soft_threshold_error = report.max_soft_threshold_error.max(err);
            h
        } else {
            let j = rng.random_range(1..=6);
            WeightedAbsSum::new(
                (0..j).map(|_| (rng.random_range(-5.0..5.0), rng.random_range(0.0..2.0))),
            )?
        };
        let got = prox(&h, lambda, v)?.value;
        let oracle = prox_oracle(&h, lambda, v, Grid::covering(&h, lambda, v, ORACLE_CELLS))?;
        report.max_deviation = report.max_deviation.max((got - oracle).abs());
        let excess = objective(&h, lambda, v, got) - objective(&h, lambda, v, oracle);
        report.max_objective_excess = report.max_objective_excess.max(excess);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let r = check_prox(500, 1).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.soft_threshold_cases, 50);
    }

    #[test]
    fn single_case_is_soft_threshold() {
        let r = check_prox(1, 42).unwrap();
        assert_eq!(r.soft_threshold_cases, 1);
        assert_eq!(r.max_soft_threshold_error, 0.0);
    }

    #[test]
    fn zero_cases_rejected() {
        assert!(check_prox(0, 1).is_err());
    }
}
