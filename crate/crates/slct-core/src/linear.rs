//! Closed-form learning coefficients for multi-layer linear networks.
//!
//! A depth-L linear network computes `x ↦ A^(1)A^(2)···A^(L)x` (plus biases
//! when enabled), with `A^(s)` of shape `H^(s) × H^(s+1)`. Width lists are
//! output-first: `widths[0] = H^(1)` is the output dimension and the last
//! entry is the input dimension. Given the rank `r` of the true product
//! matrix, the learning coefficient is a closed-form combinatorial expression
//! in the surpluses `M^(s) = H^(s) − r`: an index set of relatively small
//! surpluses is selected, and λ and θ are read off from its sum, its ceiling
//! mean `M` and the remainder `a`.

use crate::lct::Lct;
use crate::rank::product_rank;
use crate::rational::{Rational, RationalError};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinearError {
    #[error("widths list must contain at least two entries (output and input dimension)")]
    TooFewWidths,
    #[error("widths must all be at least 1")]
    ZeroWidth,
    #[error("rank {rank} exceeds the smallest width {min_width}")]
    RankOutOfRange { rank: u32, min_width: u32 },
    #[error("selection conditions did not identify a unique index set for surpluses {0:?} (implementation bug or invalid input)")]
    NoAdmissibleSelection(Vec<u64>),
    #[error("layer {layer}: weight matrix is {got_rows}x{got_cols}, architecture requires {want_rows}x{want_cols}")]
    LayerShapeMismatch {
        layer: usize,
        got_rows: usize,
        got_cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("layer {layer}: bias vector has length {got}, architecture requires {want}")]
    BiasShapeMismatch {
        layer: usize,
        got: usize,
        want: usize,
    },
    #[error("network {} bias vectors but the architecture says bias = {expected}", if *.expected { "lacks" } else { "carries" })]
    BiasPresenceMismatch { expected: bool },
    #[error("layer count {got} does not match architecture depth {want}")]
    DepthMismatch { got: usize, want: usize },
    #[error("threshold formula overflowed the representable range: {0}")]
    Arithmetic(#[from] RationalError),
    #[error("order formula overflowed the representable range")]
    OrderOverflow,
}

fn validate_widths(widths: &[u32]) -> Result<(), LinearError> {
    if widths.len() < 2 {
        return Err(LinearError::TooFewWidths);
    }
    if widths.contains(&0) {
        return Err(LinearError::ZeroWidth);
    }
    Ok(())
}

fn validate_rank(widths: &[u32], rank: u32) -> Result<(), LinearError> {
    let min_width = *widths.iter().min().expect("widths non-empty");
    if rank > min_width {
        return Err(LinearError::RankOutOfRange { rank, min_width });
    }
    Ok(())
}

/// Architecture of a multi-layer linear network: output-first widths plus a
/// bias flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearArchitecture {
    widths: Vec<u32>,
    bias: bool,
}

impl LinearArchitecture {
    pub fn new(widths: Vec<u32>, bias: bool) -> Result<LinearArchitecture, LinearError> {
        validate_widths(&widths)?;
        Ok(LinearArchitecture { widths, bias })
    }

    pub fn widths(&self) -> &[u32] {
        &self.widths
    }

    pub fn bias(&self) -> bool {
        self.bias
    }

    /// Number of weight layers L (one less than the number of width entries).
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn output_dim(&self) -> u32 {
        self.widths[0]
    }

    pub fn input_dim(&self) -> u32 {
        *self.widths.last().expect("widths non-empty")
    }

    /// Total number of real parameters (weights plus bias entries if enabled).
    pub fn param_count(&self) -> u64 {
        let weights: u64 = (0..self.depth())
            .map(|s| self.widths[s] as u64 * self.widths[s + 1] as u64)
            .sum();
        let biases: u64 = if self.bias {
            (0..self.depth()).map(|s| self.widths[s] as u64).sum()
        } else {
            0
        };
        weights + biases
    }
}

/// A concrete multi-layer linear network: an architecture plus weight
/// matrices `A^(s)` (and bias vectors `B^(s)` when the architecture has bias).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearNetwork {
    arch: LinearArchitecture,
    weights: Vec<DMatrix<f64>>,
    biases: Option<Vec<DVector<f64>>>,
}

impl LinearNetwork {
    pub fn new(
        arch: LinearArchitecture,
        weights: Vec<DMatrix<f64>>,
        biases: Option<Vec<DVector<f64>>>,
    ) -> Result<LinearNetwork, LinearError> {
        let depth = arch.depth();
        if weights.len() != depth {
            return Err(LinearError::DepthMismatch {
                got: weights.len(),
                want: depth,
            });
        }
        for (s, w) in weights.iter().enumerate() {
            let (want_rows, want_cols) = (arch.widths[s] as usize, arch.widths[s + 1] as usize);
            if w.nrows() != want_rows || w.ncols() != want_cols {
                return Err(LinearError::LayerShapeMismatch {
                    layer: s + 1,
                    got_rows: w.nrows(),
                    got_cols: w.ncols(),
                    want_rows,
                    want_cols,
                });
            }
        }
        match (&biases, arch.bias) {
            (Some(bs), true) => {
                if bs.len() != depth {
                    return Err(LinearError::DepthMismatch {
                        got: bs.len(),
                        want: depth,
                    });
                }
                for (s, b) in bs.iter().enumerate() {
                    if b.len() != arch.widths[s] as usize {
                        return Err(LinearError::BiasShapeMismatch {
                            layer: s + 1,
                            got: b.len(),
                            want: arch.widths[s] as usize,
                        });
                    }
                }
            }
            (None, false) => {}
            (_, expected) => return Err(LinearError::BiasPresenceMismatch { expected }),
        }
        Ok(LinearNetwork {
            arch,
            weights,
            biases,
        })
    }

    pub fn architecture(&self) -> &LinearArchitecture {
        &self.arch
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> Option<&[DVector<f64>]> {
        self.biases.as_deref()
    }

    /// The end-to-end weight product `A^(1)A^(2)···A^(L)`.
    pub fn product(&self) -> DMatrix<f64> {
        let mut acc = self.weights[0].clone();
        for w in &self.weights[1..] {
            acc *= w;
        }
        acc
    }

    /// The absorbed output bias: the network function is
    /// `x ↦ (∏ A^(s)) x + b'` with `b' = Σ_S (A^(1)···A^(S−1)) B^(S)`.
    pub fn absorbed_bias(&self) -> Option<DVector<f64>> {
        let biases = self.biases.as_ref()?;
        let mut total = biases[0].clone();
        let mut prefix = self.weights[0].clone();
        for (b, w) in biases.iter().zip(&self.weights).skip(1) {
            total += &prefix * b;
            prefix *= w;
        }
        Some(total)
    }

    /// Applies the network function to an input vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        let mut y = self.product() * x;
        if let Some(b) = self.absorbed_bias() {
            y += b;
        }
        y.as_slice().to_vec()
    }

    /// Flattens all parameters into one vector, layer by layer: the row-major
    /// entries of `A^(s)` followed by `B^(s)` (when bias is enabled).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.arch.param_count() as usize);
        for s in 0..self.weights.len() {
            let w = &self.weights[s];
            for i in 0..w.nrows() {
                for j in 0..w.ncols() {
                    out.push(w[(i, j)]);
                }
            }
            if let Some(bs) = &self.biases {
                out.extend_from_slice(bs[s].as_slice());
            }
        }
        out
    }

    /// Rank of the end-to-end weight product (exact for integer entries,
    /// SVD with relative tolerance 1e-9 otherwise). Bias vectors never enter.
    pub fn true_rank(&self) -> u32 {
        product_rank(&self.weights) as u32
    }
}

/// The index-selection data behind the closed-form threshold: surpluses
/// `M^(s) = H^(s) − r`, the selected index set, and the derived quantities
/// ℓ, M (ceiling mean) and a (remainder).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurplusSelection {
    pub rank: u32,
    /// `M^(s) = H^(s) − r` for every layer interface, output-first.
    pub surpluses: Vec<u64>,
    /// 0-based positions of the selected (relatively small) surpluses, ascending.
    pub selected: Vec<usize>,
    /// One less than the number of selected indices.
    pub ell: u64,
    /// Ceiling mean: the unique integer with `M − 1 < (Σ surpluses)/ℓ ≤ M`.
    pub ceil_mean: u64,
    /// Remainder `a = Σ − (M − 1)·ℓ`, always in `1..=ℓ`.
    pub remainder: u64,
}

impl SurplusSelection {
    pub fn selected_sum(&self) -> u64 {
        self.selected.iter().map(|&i| self.surpluses[i]).sum()
    }
}

/// Checks the three defining conditions for a candidate index set, given the
/// surpluses. `selected` must be a strict-by-value prefix for condition (i)
/// to hold; the caller enumerates such prefixes.
fn selection_is_admissible(surpluses: &[u64], selected: &[bool]) -> bool {
    let count = selected.iter().filter(|&&s| s).count();
    if count < 2 {
        // ℓ = |selection| − 1 must be ≥ 1 for the remainder to exist.
        return false;
    }
    let ell = (count - 1) as u64;
    let sum: u64 = surpluses
        .iter()
        .zip(selected)
        .filter_map(|(&m, &inside)| inside.then_some(m))
        .sum();
    let max_inside = surpluses
        .iter()
        .zip(selected)
        .filter_map(|(&m, &inside)| inside.then_some(m))
        .max()
        .expect("at least two selected");
    for (&m, &inside) in surpluses.iter().zip(selected) {
        if inside {
            // Σ over the selection must weakly dominate ℓ·M^(s) inside.
            if sum < ell * m {
                return false;
            }
        } else {
            // Strictly smaller values inside, and Σ strictly below ℓ·M^(s) outside.
            if max_inside >= m || sum >= ell * m {
                return false;
            }
        }
    }
    true
}

/// Selects the set of relatively small surpluses for `widths` and `rank`, and
/// derives ℓ, the ceiling mean M and the remainder a.
///
/// The defining conditions determine the set uniquely; the search sorts the
/// surpluses ascending and tests every prefix that keeps tied values together.
pub fn surplus_selection(widths: &[u32], rank: u32) -> Result<SurplusSelection, LinearError> {
    validate_widths(widths)?;
    validate_rank(widths, rank)?;
    let surpluses: Vec<u64> = widths.iter().map(|&h| (h - rank) as u64).collect();

    let mut order: Vec<usize> = (0..surpluses.len()).collect();
    order.sort_by_key(|&i| (surpluses[i], i));

    let mut found: Option<Vec<usize>> = None;
    let mut mask = vec![false; surpluses.len()];
    let mut taken = 0;
    while taken < order.len() {
        // Extend the prefix by one full tie-class of equal surplus values.
        let value = surpluses[order[taken]];
        while taken < order.len() && surpluses[order[taken]] == value {
            mask[order[taken]] = true;
            taken += 1;
        }
        if selection_is_admissible(&surpluses, &mask) {
            let mut selected: Vec<usize> = order[..taken].to_vec();
            selected.sort_unstable();
            if found.replace(selected).is_some() {
                return Err(LinearError::NoAdmissibleSelection(surpluses));
            }
        }
    }
    let selected = found.ok_or_else(|| LinearError::NoAdmissibleSelection(surpluses.clone()))?;

    let ell = (selected.len() - 1) as u64;
    let sum: u64 = selected.iter().map(|&i| surpluses[i]).sum();
    let ceil_mean = sum.div_ceil(ell);
    // a = Σ − (M−1)ℓ computed signed because M may be zero.
    let remainder = (sum as i128 - (ceil_mean as i128 - 1) * ell as i128) as u64;
    debug_assert!(remainder >= 1 && remainder <= ell);

    Ok(SurplusSelection {
        rank,
        surpluses,
        selected,
        ell,
        ceil_mean,
        remainder,
    })
}

fn base_term(widths: &[u32], rank: u32) -> Result<Rational, RationalError> {
    // (−r² + r(H^(1) + H^(L+1))) / 2
    let r = rank as i128;
    let ends = widths[0] as i128 + *widths.last().expect("validated") as i128;
    Rational::from_i128(-r * r + r * ends, 2)
}

/// The learning coefficient and order of a multi-layer linear network with
/// the given output-first widths, at a true parameter whose weight product
/// has rank `rank`.
pub fn lambda_linear(widths: &[u32], rank: u32) -> Result<Lct, LinearError> {
    validate_widths(widths)?;
    validate_rank(widths, rank)?;
    let base = base_term(widths, rank)?;

    if widths.contains(&rank) {
        // Some surplus vanishes: the threshold collapses to the base term
        // with order 1 (shortcut path; the general formula agrees wherever
        // both are defined, which the tests assert).
        return Ok(Lct::new(base, 1).expect("base term is non-negative"));
    }

    let sel = surplus_selection(widths, rank)?;
    let ell = sel.ell as i128;
    let a = sel.remainder as i128;
    let sum = sel.selected_sum() as i128;
    let sq_sum: i128 = sel
        .selected
        .iter()
        .map(|&i| {
            let m = sel.surpluses[i] as i128;
            m * m
        })
        .sum();

    // λ = base + a(ℓ−a)/(4ℓ) + Σ²/(4ℓ) − (Σ M_k²)/4
    let lambda = base.checked_add(Rational::from_i128(
        a * (ell - a) + sum * sum - ell * sq_sum,
        4 * ell,
    )?)?;
    let theta_minus_1 = (a * (ell - a)) as u128;
    let theta: u32 = u32::try_from(theta_minus_1 + 1).map_err(|_| LinearError::OrderOverflow)?;
    Ok(Lct::new(lambda, theta).expect("formula yields λ ≥ 0, θ ≥ 1"))
}

/// Learning coefficient with bias parameters: the order is unchanged and λ
/// gains `H^(1)/2` on top of the bias-free value. The rank argument is still
/// the rank of the weight product alone.
pub fn lambda_linear_with_bias(widths: &[u32], rank: u32) -> Result<Lct, LinearError> {
    let bare = lambda_linear(widths, rank)?;
    let bias_term = Rational::new(widths[0] as i64, 2)?;
    let lambda = bare.lambda().checked_add(bias_term)?;
    Ok(Lct::new(lambda, bare.theta()).expect("λ stays non-negative"))
}

/// Convenience: the learning coefficient of an architecture honoring its own
/// bias flag.
pub fn lambda_architecture(arch: &LinearArchitecture, rank: u32) -> Result<Lct, LinearError> {
    if arch.bias() {
        lambda_linear_with_bias(arch.widths(), rank)
    } else {
        lambda_linear(arch.widths(), rank)
    }
}
