//! The learning coefficient λ and its order θ.
//!
//! For a singular statistical model the Bayes free energy expands as
//! `F(n) = n S_n + λ log n − (θ − 1) log log n + O(1)`, where λ is the real
//! log canonical threshold of the averaged error function at the true
//! parameter and θ is its multiplicity. This module carries the pair (λ, θ)
//! and the rule for combining independent coordinate blocks.

use crate::rational::Rational;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LctError {
    #[error("learning coefficient must be non-negative, got {0}")]
    NegativeLambda(Rational),
    #[error("order must be at least 1, got {0}")]
    InvalidTheta(u32),
}

/// An exact learning coefficient: λ as a rational plus the integer order θ ≥ 1.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lct {
    lambda: Rational,
    theta: u32,
}

impl Lct {
    /// The neutral pair (0, 1): the value for a model with no error at all,
    /// and the identity of [`combine_independent`].
    pub const TRIVIAL: Lct = Lct {
        lambda: Rational::ZERO,
        theta: 1,
    };

    pub fn new(lambda: Rational, theta: u32) -> Result<Lct, LctError> {
        if lambda.is_negative() {
            return Err(LctError::NegativeLambda(lambda));
        }
        if theta == 0 {
            return Err(LctError::InvalidTheta(theta));
        }
        Ok(Lct { lambda, theta })
    }

    pub fn lambda(&self) -> Rational {
        self.lambda
    }

    pub fn theta(&self) -> u32 {
        self.theta
    }
}

impl fmt::Display for Lct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(λ = {}, θ = {})", self.lambda, self.theta)
    }
}

impl fmt::Debug for Lct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Lct(λ = {}, θ = {})", self.lambda, self.theta)
    }
}

/// Combines the thresholds of independent blocks.
///
/// When the error function splits as `K(w) = Σ_α K_α(w_α)` over disjoint
/// coordinate blocks, the zeta functions multiply and the pole data combine as
/// `λ = Σ λ_α` and `θ = Σ (θ_α − 1) + 1`. An empty combination yields the
/// neutral pair (0, 1).
pub fn combine_independent<I>(parts: I) -> Lct
where
    I: IntoIterator<Item = Lct>,
{
    let mut lambda = Rational::ZERO;
    let mut theta: u32 = 1;
    for part in parts {
        lambda = lambda + part.lambda;
        theta += part.theta - 1;
    }
    Lct { lambda, theta }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lct(num: i64, den: i64, theta: u32) -> Lct {
        Lct::new(Rational::new(num, den).unwrap(), theta).unwrap()
    }

    #[test]
    fn rejects_invalid_pairs() {
        assert!(matches!(
            Lct::new(Rational::new(-1, 2).unwrap(), 1),
            Err(LctError::NegativeLambda(_))
        ));
        assert!(matches!(
            Lct::new(Rational::ZERO, 0),
            Err(LctError::InvalidTheta(0))
        ));
    }

    #[test]
    fn combine_adds_lambdas_and_merges_orders() {
        let combined = combine_independent([lct(1, 2, 2), lct(1, 2, 3)]);
        assert_eq!(combined, lct(1, 1, 4));
    }

    #[test]
    fn combine_of_nothing_is_trivial() {
        assert_eq!(combine_independent([]), Lct::TRIVIAL);
    }

    #[test]
    fn trivial_is_the_identity() {
        let x = lct(7, 4, 3);
        assert_eq!(combine_independent([x, Lct::TRIVIAL]), x);
        assert_eq!(combine_independent([Lct::TRIVIAL, x]), x);
    }

    #[test]
    fn display_shows_both_components() {
        assert_eq!(lct(3, 2, 1).to_string(), "(λ = 3/2, θ = 1)");
    }
}
