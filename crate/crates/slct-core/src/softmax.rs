//! Softmax-output models with linear pre-activation.
//!
//! For `z = softmax(y)` with `y = h(x, w)` the error ideal is generated not
//! by the output differences themselves but by the pivot-differenced
//! pre-activations `y_j(w) − y_1(w) − (y_j(w*) − y_1(w*))`, `j = 2..H^(1)`.
//! Left-multiplying a linear pre-activation by the differencing matrix (rows
//! `e_j − e_pivot`) therefore turns the softmax problem into an ordinary
//! linear-network problem with output dimension `H^(1) − 1`, whose threshold
//! is closed-form.

use crate::lct::Lct;
use crate::linear::{
    lambda_linear, lambda_linear_with_bias, LinearArchitecture, LinearError, LinearNetwork,
};
use crate::rank::product_rank;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SoftmaxError {
    #[error("truth output dimension {got} does not match the model output dimension {want}")]
    OutputMismatch { got: usize, want: usize },
    #[error("truth input dimension {got} does not match the model input dimension {want}")]
    InputMismatch { got: usize, want: usize },
    #[error("pivot index {pivot} out of range for output dimension {dim}")]
    PivotOutOfRange { pivot: usize, dim: usize },
    #[error("truth of rank {rank} is not realizable by the reduced architecture (smallest width {min_width})")]
    TruthNotRealizable { rank: u32, min_width: u32 },
    #[error(transparent)]
    Linear(#[from] LinearError),
}

/// A model whose output is the softmax of a linear network's output.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel {
    base: LinearNetwork,
}

/// Numerically stable softmax.
pub fn softmax(y: &[f64]) -> Vec<f64> {
    let max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = y.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / total).collect()
}

impl SoftmaxModel {
    pub fn new(base: LinearNetwork) -> SoftmaxModel {
        SoftmaxModel { base }
    }

    pub fn base(&self) -> &LinearNetwork {
        &self.base
    }

    pub fn output_dim(&self) -> usize {
        self.base.architecture().output_dim() as usize
    }

    /// Softmax of the pre-activation at an input point.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.base.apply(x))
    }
}

/// Description of the output-differencing applied during reduction: the
/// pivot index (0-based) and the `(H^(1)−1) × H^(1)` matrix with rows
/// `e_j − e_pivot` for `j ≠ pivot` in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferencingMap {
    pub pivot: usize,
    pub matrix: DMatrix<f64>,
}

/// Result of reducing a softmax problem to a linear one.
#[derive(Debug, Clone, PartialEq)]
pub enum DifferenceReduction {
    /// A single-output softmax is the constant 1: the difference ideal is
    /// empty and the threshold is the neutral (0, 1).
    Trivial,
    /// The differenced pair, boxed so the enum stays pointer-sized.
    Reduced(Box<ReducedPair>),
}

/// A differenced model/truth pair together with the map that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedPair {
    pub model: LinearNetwork,
    pub truth: LinearNetwork,
    pub map: DifferencingMap,
}

fn differencing_matrix(dim: usize, pivot: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(dim - 1, dim);
    let mut row = 0;
    for j in 0..dim {
        if j == pivot {
            continue;
        }
        d[(row, j)] = 1.0;
        d[(row, pivot)] = -1.0;
        row += 1;
    }
    d
}

/// Left-multiplies a network's output by the differencing matrix: the first
/// weight layer (and first bias when present) shrink to H^(1) − 1 rows.
fn difference_network(net: &LinearNetwork, pivot: usize) -> Result<LinearNetwork, SoftmaxError> {
    let widths = net.architecture().widths();
    let h1 = widths[0] as usize;
    debug_assert!(h1 >= 2 && pivot < h1);
    let d = differencing_matrix(h1, pivot);

    let mut new_widths = widths.to_vec();
    new_widths[0] -= 1;
    let arch = LinearArchitecture::new(new_widths, net.architecture().bias())?;

    let mut weights: Vec<DMatrix<f64>> = net.weights().to_vec();
    weights[0] = &d * &weights[0];
    let biases = net.biases().map(|bs| {
        let mut bs: Vec<DVector<f64>> = bs.to_vec();
        bs[0] = &d * &bs[0];
        bs
    });
    Ok(LinearNetwork::new(arch, weights, biases)?)
}

fn check_compatible(model: &LinearArchitecture, truth: &LinearNetwork) -> Result<(), SoftmaxError> {
    let t = truth.architecture();
    if t.output_dim() != model.output_dim() {
        return Err(SoftmaxError::OutputMismatch {
            got: t.output_dim() as usize,
            want: model.output_dim() as usize,
        });
    }
    if t.input_dim() != model.input_dim() {
        return Err(SoftmaxError::InputMismatch {
            got: t.input_dim() as usize,
            want: model.input_dim() as usize,
        });
    }
    Ok(())
}

/// Reduces a softmax model/truth pair to the equivalent linear pair by
/// differencing both against the given pivot output.
pub fn softmax_difference_reduction_with_pivot(
    model: &SoftmaxModel,
    truth: &LinearNetwork,
    pivot: usize,
) -> Result<DifferenceReduction, SoftmaxError> {
    check_compatible(model.base.architecture(), truth)?;
    let h1 = model.output_dim();
    if pivot >= h1 {
        return Err(SoftmaxError::PivotOutOfRange { pivot, dim: h1 });
    }
    if h1 == 1 {
        return Ok(DifferenceReduction::Trivial);
    }
    Ok(DifferenceReduction::Reduced(Box::new(ReducedPair {
        model: difference_network(&model.base, pivot)?,
        truth: difference_network(truth, pivot)?,
        map: DifferencingMap {
            pivot,
            matrix: differencing_matrix(h1, pivot),
        },
    })))
}

/// Reduction against the first output, the conventional pivot. The resulting
/// threshold does not depend on the pivot (asserted by tests).
pub fn softmax_difference_reduction(
    model: &SoftmaxModel,
    truth: &LinearNetwork,
) -> Result<DifferenceReduction, SoftmaxError> {
    softmax_difference_reduction_with_pivot(model, truth, 0)
}

pub fn lambda_softmax_linear_with_pivot(
    arch: &LinearArchitecture,
    truth: &LinearNetwork,
    pivot: usize,
) -> Result<Lct, SoftmaxError> {
    check_compatible(arch, truth)?;
    let h1 = arch.output_dim() as usize;
    if pivot >= h1 {
        return Err(SoftmaxError::PivotOutOfRange { pivot, dim: h1 });
    }
    if h1 == 1 {
        return Ok(Lct::TRIVIAL);
    }

    let mut reduced_widths = arch.widths().to_vec();
    reduced_widths[0] -= 1;

    // Rank of the differenced truth product D·∏A*, computed through the
    // exact integer path when the truth entries are integral.
    let mut factors = Vec::with_capacity(truth.weights().len() + 1);
    factors.push(differencing_matrix(h1, pivot));
    factors.extend(truth.weights().iter().cloned());
    let rank = product_rank(&factors) as u32;

    let min_width = *reduced_widths.iter().min().expect("non-empty widths");
    if rank > min_width {
        return Err(SoftmaxError::TruthNotRealizable { rank, min_width });
    }

    let lct = if arch.bias() {
        lambda_linear_with_bias(&reduced_widths, rank)?
    } else {
        lambda_linear(&reduced_widths, rank)?
    };
    Ok(lct)
}

/// Learning coefficient of a softmax-output model whose pre-activation is the
/// given linear architecture, at the given truth: reduce by differencing and
/// evaluate the closed-form linear value on the reduced widths with the rank
/// of the differenced truth product (bias contributes `(H^(1)−1)/2`).
pub fn lambda_softmax_linear(
    arch: &LinearArchitecture,
    truth: &LinearNetwork,
) -> Result<Lct, SoftmaxError> {
    lambda_softmax_linear_with_pivot(arch, truth, 0)
}

/// Same threshold under every admissible pivot; exposed for verification.
pub fn lambda_softmax_linear_all_pivots(
    arch: &LinearArchitecture,
    truth: &LinearNetwork,
) -> Result<Vec<Lct>, SoftmaxError> {
    let h1 = arch.output_dim() as usize;
    (0..h1.max(1))
        .map(|p| lambda_softmax_linear_with_pivot(arch, truth, p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::Rational;

    fn zero_net(widths: &[u32]) -> LinearNetwork {
        let arch = LinearArchitecture::new(widths.to_vec(), false).unwrap();
        let weights = (0..arch.depth())
            .map(|s| DMatrix::zeros(widths[s] as usize, widths[s + 1] as usize))
            .collect();
        LinearNetwork::new(arch, weights, None).unwrap()
    }

    fn lct(num: i64, den: i64, theta: u32) -> Lct {
        Lct::new(Rational::new(num, den).unwrap(), theta).unwrap()
    }

    #[test]
    fn two_class_one_input_reduces_to_scalar_problem() {
        let truth = zero_net(&[2, 1]);
        let model = SoftmaxModel::new(zero_net(&[2, 1]));
        match softmax_difference_reduction(&model, &truth).unwrap() {
            DifferenceReduction::Reduced(pair) => {
                assert_eq!(pair.model.architecture().widths(), &[1, 1]);
                assert_eq!(pair.truth.architecture().widths(), &[1, 1]);
                assert_eq!(pair.map.pivot, 0);
                assert_eq!(pair.map.matrix, DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]));
            }
            other => panic!("expected a reduction, got {other:?}"),
        }
        let arch = LinearArchitecture::new(vec![2, 1], false).unwrap();
        assert_eq!(lambda_softmax_linear(&arch, &truth).unwrap(), lct(1, 2, 1));
    }

    #[test]
    fn two_class_depth_two_gets_the_deep_linear_order() {
        let truth = zero_net(&[2, 1, 1]);
        let arch = LinearArchitecture::new(vec![2, 1, 1], false).unwrap();
        assert_eq!(lambda_softmax_linear(&arch, &truth).unwrap(), lct(1, 2, 2));
    }

    #[test]
    fn single_class_softmax_is_trivial() {
        for widths in [vec![1u32, 3], vec![1, 2, 4]] {
            let truth = zero_net(&widths);
            let model = SoftmaxModel::new(zero_net(&widths));
            assert_eq!(
                softmax_difference_reduction(&model, &truth).unwrap(),
                DifferenceReduction::Trivial
            );
            let arch = LinearArchitecture::new(widths, false).unwrap();
            assert_eq!(lambda_softmax_linear(&arch, &truth).unwrap(), Lct::TRIVIAL);
        }
    }

    #[test]
    fn three_outputs_difference_rows_explicitly() {
        // Identity pre-activation: reduced truth rows are (e2−e1)·W* and
        // (e3−e1)·W*.
        let arch = LinearArchitecture::new(vec![3, 3], false).unwrap();
        let w = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let truth = LinearNetwork::new(arch, vec![w], None).unwrap();
        let model = SoftmaxModel::new(truth.clone());
        match softmax_difference_reduction(&model, &truth).unwrap() {
            DifferenceReduction::Reduced(pair) => {
                let expected = DMatrix::from_row_slice(2, 3, &[-1.0, 1.0, 0.0, -1.0, 0.0, 1.0]);
                assert_eq!(pair.truth.weights()[0], expected);
            }
            other => panic!("expected a reduction, got {other:?}"),
        }
    }

    #[test]
    fn pivot_choice_never_changes_the_threshold() {
        // A fixed "random-looking" truth with three outputs and depth 2.
        let arch = LinearArchitecture::new(vec![3, 2, 2], false).unwrap();
        let a1 = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.0, 3.0, 2.0, 1.0]);
        let a2 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 2.0]);
        let truth = LinearNetwork::new(arch.clone(), vec![a1, a2], None).unwrap();
        let all = lambda_softmax_linear_all_pivots(&arch, &truth).unwrap();
        assert_eq!(all.len(), 3);
        assert!(
            all.windows(2).all(|w| w[0] == w[1]),
            "pivots disagree: {all:?}"
        );
    }

    #[test]
    fn output_shift_leaves_the_reduction_unchanged() {
        // Adding a constant to every output only moves the first-layer bias
        // along the all-ones direction, which the differencing matrix kills.
        let arch = LinearArchitecture::new(vec![2, 2], true).unwrap();
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DVector::from_column_slice(&[0.5, -0.5]);
        let truth =
            LinearNetwork::new(arch.clone(), vec![w.clone()], Some(vec![b.clone()])).unwrap();
        let shifted = LinearNetwork::new(
            arch.clone(),
            vec![w],
            Some(vec![b + DVector::from_column_slice(&[7.25, 7.25])]),
        )
        .unwrap();
        let model = SoftmaxModel::new(truth.clone());
        let red_a = softmax_difference_reduction(&model, &truth).unwrap();
        let red_b = softmax_difference_reduction(&model, &shifted).unwrap();
        match (red_a, red_b) {
            (DifferenceReduction::Reduced(pa), DifferenceReduction::Reduced(pb)) => {
                assert_eq!(pa.truth, pb.truth)
            }
            other => panic!("expected reductions, got {other:?}"),
        }
        assert_eq!(
            lambda_softmax_linear(&arch, &truth).unwrap(),
            lambda_softmax_linear(&arch, &shifted).unwrap()
        );
    }

    #[test]
    fn softmax_of_differenced_rank_sets_the_linear_rank() {
        // Truth y = ((x), (−x)): D·W* = (−2) has rank 1, so the reduced
        // problem is the regular (1,1) model with r = 1: λ = 1/2.
        let arch = LinearArchitecture::new(vec![2, 1], false).unwrap();
        let truth = LinearNetwork::new(
            arch.clone(),
            vec![DMatrix::from_row_slice(2, 1, &[1.0, -1.0])],
            None,
        )
        .unwrap();
        assert_eq!(lambda_softmax_linear(&arch, &truth).unwrap(), lct(1, 2, 1));
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let arch = LinearArchitecture::new(vec![2, 1], false).unwrap();
        assert!(matches!(
            lambda_softmax_linear(&arch, &zero_net(&[3, 1])),
            Err(SoftmaxError::OutputMismatch { .. })
        ));
        assert!(matches!(
            lambda_softmax_linear(&arch, &zero_net(&[2, 2])),
            Err(SoftmaxError::InputMismatch { .. })
        ));
    }

    #[test]
    fn unrealizable_truth_is_rejected() {
        // Architecture (3,1,2) can only realize rank ≤ 1 products; a rank-2
        // truth (differenced rank 2) cannot be a zero of the error.
        let arch = LinearArchitecture::new(vec![3, 1, 2], false).unwrap();
        let truth_arch = LinearArchitecture::new(vec![3, 2], false).unwrap();
        let truth = LinearNetwork::new(
            truth_arch,
            vec![DMatrix::from_row_slice(
                3,
                2,
                &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            )],
            None,
        )
        .unwrap();
        assert!(matches!(
            lambda_softmax_linear(&arch, &truth),
            Err(SoftmaxError::TruthNotRealizable { .. })
        ));
    }

    #[test]
    fn softmax_function_is_stable_and_normalized() {
        let z = softmax(&[1000.0, 1000.0]);
        assert!((z[0] - 0.5).abs() < 1e-12 && (z[1] - 0.5).abs() < 1e-12);
        let z = softmax(&[-3.0, 0.0, 5.0]);
        assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(z[2] > z[1] && z[1] > z[0]);
    }
}
