//! Least-squares fits for the scaling regressions.
//!
//! Both oracle methods reduce to regressing a log-measure on the log of the
//! grid value, optionally with a log-log regressor that carries the order
//! θ − 1. The fits are ordinary least squares with an intercept.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff below which a design matrix counts as
/// rank-deficient (the two regressors are collinear at desk scale).
const DESIGN_RANK_TOL: f64 = 1e-10;

pub(crate) struct LineFit {
    pub slope: f64,
    pub r2: f64,
}

pub(crate) struct PlaneFit {
    pub slope_x: f64,
    pub slope_g: f64,
    pub r2: f64,
}

fn r_squared(residual_ss: f64, y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let total_ss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if total_ss <= 0.0 {
        return if residual_ss <= 0.0 { 1.0 } else { 0.0 };
    }
    (1.0 - residual_ss / total_ss).clamp(0.0, 1.0)
}

fn least_squares(design: DMatrix<f64>, y: &[f64]) -> Option<(DVector<f64>, f64)> {
    let rhs = DVector::from_column_slice(y);
    let svd = design.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    if max_sv <= 0.0
        || svd
            .singular_values
            .iter()
            .any(|&s| s < DESIGN_RANK_TOL * max_sv)
    {
        return None;
    }
    let beta = svd.solve(&rhs, 0.0).ok()?;
    let residual = &design * &beta - &rhs;
    Some((beta, residual.norm_squared()))
}

/// `y ≈ slope·x + c`. Requires ≥ 2 points; returns `None` when x is constant.
pub(crate) fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let design = DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { x[i] } else { 1.0 });
    let (beta, rss) = least_squares(design, y)?;
    Some(LineFit {
        slope: beta[0],
        r2: r_squared(rss, y),
    })
}

/// `y ≈ slope_x·x + slope_g·g + c`. Requires ≥ 3 points; returns `None` when
/// the design is rank-deficient.
pub(crate) fn fit_plane(x: &[f64], g: &[f64], y: &[f64]) -> Option<PlaneFit> {
    if x.len() < 3 || x.len() != y.len() || x.len() != g.len() {
        return None;
    }
    let design = DMatrix::from_fn(x.len(), 3, |i, j| match j {
        0 => x[i],
        1 => g[i],
        _ => 1.0,
    });
    let (beta, rss) = least_squares(design, y)?;
    Some(PlaneFit {
        slope_x: beta[0],
        slope_g: beta[1],
        r2: r_squared(rss, y),
    })
}

/// Adjusted R² for `m` observations and `p` regressors (plus intercept).
pub(crate) fn adjusted_r2(r2: f64, m: usize, p: usize) -> f64 {
    if m <= p + 1 {
        return f64::NEG_INFINITY;
    }
    1.0 - (1.0 - r2) * (m as f64 - 1.0) / (m - p - 1) as f64
}
