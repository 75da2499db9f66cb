//! Asymptotic Bayes free-energy penalties and architecture ranking.
//!
//! In singular models the complexity term of the free energy is
//! λ·log n − (θ−1)·log log n (replacing BIC's d/2·log n); architectures are
//! compared by that penalty at a common sample count, and ties go to the
//! smaller λ, then the larger θ. The O(1) term is unknown and omitted, so
//! penalties are comparable only across candidates evaluated at the same n.

use crate::lct::Lct;
use crate::linear::{lambda_architecture, LinearArchitecture, LinearError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectError {
    #[error("sample count must be at least 3 so that log log n > 0, got {0}")]
    SampleCountTooSmall(u64),
}

/// λ·log n − (θ−1)·log log n for an exact (λ, θ) pair.
pub fn free_energy_penalty(lct: &Lct, n: u64) -> Result<f64, SelectError> {
    if n < 3 {
        return Err(SelectError::SampleCountTooSmall(n));
    }
    let log_n = (n as f64).ln();
    Ok(lct.lambda().to_f64() * log_n - (lct.theta() as f64 - 1.0) * log_n.ln())
}

/// A proposed linear architecture with the rank of the truth it must realize.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub widths: Vec<u32>,
    #[serde(default)]
    pub bias: bool,
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedCandidate {
    #[serde(flatten)]
    pub candidate: Candidate,
    pub lambda: crate::rational::Rational,
    pub theta: u32,
    pub penalty: f64,
}

/// A candidate that failed validation, kept with its input position.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFailure {
    pub index: usize,
    pub candidate: Candidate,
    pub error: LinearError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    /// Valid candidates, best (smallest penalty) first.
    pub ranked: Vec<RankedCandidate>,
    /// Invalid candidates with their errors; never aborts the batch.
    pub failures: Vec<CandidateFailure>,
}

/// Evaluates every candidate exactly and sorts by free-energy penalty
/// ascending; ties break by λ ascending (exact rational comparison), then
/// θ descending, then input order. The sort is stable, so equal keys keep
/// their input order.
pub fn rank_architectures(candidates: &[Candidate], n: u64) -> Result<Ranking, SelectError> {
    if n < 3 {
        return Err(SelectError::SampleCountTooSmall(n));
    }
    let mut ranked = Vec::new();
    let mut failures = Vec::new();
    for (index, c) in candidates.iter().enumerate() {
        let evaluated = LinearArchitecture::new(c.widths.clone(), c.bias)
            .and_then(|arch| lambda_architecture(&arch, c.rank));
        match evaluated {
            Ok(lct) => {
                let penalty = free_energy_penalty(&lct, n).expect("n validated above");
                ranked.push((
                    index,
                    RankedCandidate {
                        candidate: c.clone(),
                        lambda: lct.lambda(),
                        theta: lct.theta(),
                        penalty,
                    },
                ));
            }
            Err(error) => failures.push(CandidateFailure {
                index,
                candidate: c.clone(),
                error,
            }),
        }
    }
    ranked.sort_by(|(ia, a), (ib, b)| {
        a.penalty
            .partial_cmp(&b.penalty)
            .expect("penalties are finite")
            .then_with(|| a.lambda.cmp(&b.lambda))
            .then_with(|| b.theta.cmp(&a.theta))
            .then_with(|| ia.cmp(ib))
    });
    Ok(Ranking {
        ranked: ranked.into_iter().map(|(_, r)| r).collect(),
        failures,
    })
}
