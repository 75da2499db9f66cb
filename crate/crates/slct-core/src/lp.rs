//! Strict feasibility of sign patterns over a box via linear programming.
//!
//! A sign pattern asks for a point x in the box with `a_i·x + b_i > 0` for
//! the active rows and `< 0` for the inactive ones. Strictness is decided by
//! maximizing a shared margin variable t and accepting patterns whose optimal
//! margin clears a small slack; boundary-only patterns (measure zero) are
//! rejected. The margin is capped so the LP is always bounded.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

/// Patterns whose best interior margin falls below this are treated as
/// volume-free (boundary slivers at floating-point scale).
pub const INTERIOR_SLACK: f64 = 1e-9;
/// Upper bound on the margin variable; keeps the LP bounded and the witness
/// well inside the region when the region is fat.
const MARGIN_CAP: f64 = 1.0;

/// Maximizes the margin t subject to
///   `a_i·x + b_i ≥ t`  for rows with `mask[i]` true,
///   `a_i·x + b_i ≤ −t` for rows with `mask[i]` false,
///   `lower ≤ x ≤ upper`, `t ≤ MARGIN_CAP`.
/// Returns the witness x* and optimal margin when the margin reaches the
/// interior slack; `None` when infeasible or boundary-thin.
pub(crate) fn sign_pattern_interior(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    mask: &[bool],
    lower: &[f64],
    upper: &[f64],
) -> Option<(Vec<f64>, f64)> {
    debug_assert_eq!(a.nrows(), mask.len());
    debug_assert_eq!(a.nrows(), b.len());
    debug_assert_eq!(a.ncols(), lower.len());

    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let xs: Vec<_> = lower
        .iter()
        .zip(upper)
        .map(|(&lo, &hi)| problem.add_var(0.0, (lo, hi)))
        .collect();
    let t = problem.add_var(1.0, (f64::NEG_INFINITY, MARGIN_CAP));

    for (i, &active) in mask.iter().enumerate() {
        let mut terms: Vec<_> = xs
            .iter()
            .enumerate()
            .map(|(j, &x)| (x, a[(i, j)]))
            .collect();
        if active {
            terms.push((t, -1.0));
            problem.add_constraint(&terms[..], ComparisonOp::Ge, -b[i]);
        } else {
            terms.push((t, 1.0));
            problem.add_constraint(&terms[..], ComparisonOp::Le, -b[i]);
        }
    }

    let solution = problem.solve().ok()?;
    let margin = solution.objective();
    if margin < INTERIOR_SLACK {
        return None;
    }
    let witness = xs.iter().map(|&x| solution[x]).collect();
    Some((witness, margin))
}
