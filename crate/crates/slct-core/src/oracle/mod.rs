//! Monte-Carlo estimation of the log canonical threshold of a [`KEvaluator`].
//!
//! Two independent routes to the same exponent:
//!
//! * **Volume:** the sublevel-set volume obeys
//!   V(ε) ≈ c·ε^λ·(log 1/ε)^{θ−1}, so hit counts on a geometric ε grid give
//!   λ as the slope of log V against log ε.
//! * **Laplace:** the partition function obeys
//!   Z(n) ≈ c·n^{−λ}·(log n)^{θ−1}, so Boltzmann means over a grid of inverse
//!   temperatures give λ as minus the slope of log Z against log n.
//!
//! Both estimators share the dropout rule (grid points with too little mass
//! are excluded), the model-selection rule for the optional log-log
//! regressor carrying θ, and a Poisson bootstrap for the stderr.

mod fit;
mod sampler;

use crate::kfn::KEvaluator;
use fit::{adjusted_r2, fit_line, fit_plane};
use serde::Serialize;
use thiserror::Error;

pub use sampler::BOOTSTRAP_RESAMPLES;

/// Default half-width of the sampling box around the center.
pub const DEFAULT_RADIUS: f64 = 0.5;
/// Default Monte-Carlo sample budget.
pub const DEFAULT_SAMPLES: u64 = 1_000_000;
/// Minimum hit count (volume) or effective sample size (Laplace) for a grid
/// point to enter the fit.
pub const MIN_POINT_MASS: f64 = 100.0;
/// Minimum usable grid points; below this the estimate is refused.
pub const MIN_USABLE_POINTS: usize = 4;
/// Usable points required before the log-log regressor is even attempted.
pub const THETA_MIN_USABLE: usize = 6;
/// R² threshold below which the estimate carries the poor-fit flag.
pub const POOR_FIT_R2: f64 = 0.95;

const MIN_VOLUME_SAMPLES: u64 = 100_000;
const MIN_VOLUME_GRID_POINTS: usize = 8;
const MIN_VOLUME_DECADES: f64 = 4.0;
const MIN_LAPLACE_GRID_POINTS: usize = 4;
const MIN_LAPLACE_DECADES: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("sampling radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("{method} needs at least {min} samples, got {got}")]
    TooFewSamples {
        method: &'static str,
        got: u64,
        min: u64,
    },
    #[error("grid must be finite, positive, and strictly increasing with ≥ 2 points")]
    BadGrid,
    #[error(
        "{method} needs a grid of ≥ {min_points} points spanning ≥ {min_decades} decades, \
         got {points} points over {decades:.2} decades"
    )]
    GridTooNarrow {
        method: &'static str,
        points: usize,
        decades: f64,
        min_points: usize,
        min_decades: f64,
    },
    #[error(
        "insufficient hits: only {usable} grid points carry enough mass (need {needed}); \
         increase the sample budget, widen the grid, or shrink the radius"
    )]
    InsufficientHits { usable: usize, needed: usize },
}

/// Strictly increasing, strictly positive grid with logarithmically equal
/// spacing between its endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricGrid {
    values: Vec<f64>,
}

impl GeometricGrid {
    pub fn new(min: f64, max: f64, points: usize) -> Result<GeometricGrid, OracleError> {
        if !(min.is_finite() && max.is_finite()) || min <= 0.0 || max <= min || points < 2 {
            return Err(OracleError::BadGrid);
        }
        let (lo, hi) = (min.ln(), max.ln());
        let mut values: Vec<f64> = (0..points)
            .map(|i| (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp())
            .collect();
        values[0] = min;
        *values.last_mut().expect("points ≥ 2") = max;
        Ok(GeometricGrid { values })
    }

    /// Grid from explicit values (finite, positive, strictly increasing).
    pub fn from_values(values: Vec<f64>) -> Result<GeometricGrid, OracleError> {
        let ok = values.len() >= 2
            && values.iter().all(|v| v.is_finite() && *v > 0.0)
            && values.windows(2).all(|p| p[0] < p[1]);
        if !ok {
            return Err(OracleError::BadGrid);
        }
        Ok(GeometricGrid { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// log10 span between the endpoints.
    pub fn decades(&self) -> f64 {
        (self.values[self.values.len() - 1] / self.values[0]).log10()
    }
}

/// Default ε grid: 13 points over [10⁻⁸, 10⁻²].
pub fn default_eps_grid() -> GeometricGrid {
    GeometricGrid::new(1e-8, 1e-2, 13).expect("static grid is valid")
}

/// Default inverse-temperature grid: 13 points over [10², 10⁶].
pub fn default_n_grid() -> GeometricGrid {
    GeometricGrid::new(1e2, 1e6, 13).expect("static grid is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMethod {
    Volume,
    Laplace,
}

impl std::fmt::Display for OracleMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OracleMethod::Volume => write!(f, "volume"),
            OracleMethod::Laplace => write!(f, "laplace"),
        }
    }
}

/// Per-grid-point measurement: the raw mass (hit count for volume, effective
/// sample size for Laplace), the log of the estimated measure, and whether
/// the point entered the fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridDiagnostic {
    pub grid_value: f64,
    pub hits: f64,
    pub log_measure: Option<f64>,
    pub used: bool,
}

/// A Monte-Carlo estimate of (λ, θ) with fit quality and per-point data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LctEstimate {
    pub method: OracleMethod,
    pub lambda_hat: f64,
    /// Present only when the log-log regressor survived model selection.
    pub theta_hat: Option<f64>,
    pub stderr_lambda: f64,
    pub fit_r2: f64,
    /// Set when the selected fit has R² below [`POOR_FIT_R2`].
    pub poor_fit: bool,
    pub samples_used: u64,
    pub diagnostics: Vec<GridDiagnostic>,
}

impl LctEstimate {
    /// Per-grid-point diagnostics as CSV (columns: eps_or_n, hits,
    /// logV_or_logZ) for external plotting.
    pub fn diagnostics_csv(&self) -> String {
        let mut out = String::from("eps_or_n,hits,logV_or_logZ\n");
        for d in &self.diagnostics {
            let log = match d.log_measure {
                Some(v) => v.to_string(),
                None => "nan".to_string(),
            };
            out.push_str(&format!("{},{},{}\n", d.grid_value, d.hits, log));
        }
        out
    }
}

fn validate_radius(radius: f64) -> Result<(), OracleError> {
    if !radius.is_finite() || radius <= 0.0 {
        return Err(OracleError::BadRadius(radius));
    }
    Ok(())
}

fn validate_grid(
    grid: &GeometricGrid,
    method: &'static str,
    min_points: usize,
    min_decades: f64,
) -> Result<(), OracleError> {
    if grid.len() < min_points || grid.decades() < min_decades {
        return Err(OracleError::GridTooNarrow {
            method,
            points: grid.len(),
            decades: grid.decades(),
            min_points,
            min_decades,
        });
    }
    Ok(())
}

/// Values shared by the two estimators once the per-point measurements are
/// in: selects the fit, maps the slope to λ, bootstraps the stderr.
struct ScalingFit {
    lambda: f64,
    theta: Option<f64>,
    r2: f64,
    used_plane: bool,
}

/// `sign` is +1 when the slope on log-grid IS λ (volume) and −1 when it is −λ
/// (Laplace).
fn select_scaling_fit(xs: &[f64], gs: &[f64], ys: &[f64], sign: f64) -> ScalingFit {
    let line = fit_line(xs, ys).expect("≥ 4 distinct grid points");
    let mut chosen = ScalingFit {
        lambda: (sign * line.slope).max(0.0),
        theta: None,
        r2: line.r2,
        used_plane: false,
    };
    if xs.len() >= THETA_MIN_USABLE {
        if let Some(plane) = fit_plane(xs, gs, ys) {
            let m = xs.len();
            if adjusted_r2(plane.r2, m, 2) > adjusted_r2(line.r2, m, 1) {
                chosen = ScalingFit {
                    lambda: (sign * plane.slope_x).max(0.0),
                    theta: Some(plane.slope_g + 1.0),
                    r2: plane.r2,
                    used_plane: true,
                };
            }
        }
    }
    chosen
}

/// Refits bootstrap replicates with the same model shape as the main fit and
/// returns the standard deviation of the λ replicates.
fn bootstrap_stderr(
    xs: &[f64],
    gs: &[f64],
    replicate_ys: impl Iterator<Item = Vec<Option<f64>>>,
    used_plane: bool,
    sign: f64,
) -> f64 {
    let mut lambdas = Vec::new();
    for ys in replicate_ys {
        let mut bx = Vec::new();
        let mut bg = Vec::new();
        let mut by = Vec::new();
        for (i, y) in ys.iter().enumerate() {
            if let Some(v) = y {
                bx.push(xs[i]);
                bg.push(gs[i]);
                by.push(*v);
            }
        }
        let slope = if used_plane {
            fit_plane(&bx, &bg, &by).map(|p| p.slope_x)
        } else {
            fit_line(&bx, &by).map(|l| l.slope)
        };
        if let Some(s) = slope {
            lambdas.push(sign * s);
        }
    }
    if lambdas.len() < 2 {
        return f64::INFINITY;
    }
    let mean = lambdas.iter().sum::<f64>() / lambdas.len() as f64;
    let var =
        lambdas.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (lambdas.len() - 1) as f64;
    var.sqrt()
}

/// Estimates (λ, θ) from the scaling of the sublevel-set volume
/// V(ε) = Vol{w ∈ box : K(w) ≤ ε} over a geometric ε grid.
pub fn estimate_lct_volume(
    k: &KEvaluator,
    radius: f64,
    eps_grid: &GeometricGrid,
    samples: u64,
    seed: u64,
) -> Result<LctEstimate, OracleError> {
    validate_radius(radius)?;
    if samples < MIN_VOLUME_SAMPLES {
        return Err(OracleError::TooFewSamples {
            method: "the volume method",
            got: samples,
            min: MIN_VOLUME_SAMPLES,
        });
    }
    validate_grid(
        eps_grid,
        "the volume method",
        MIN_VOLUME_GRID_POINTS,
        MIN_VOLUME_DECADES,
    )?;

    let grid = eps_grid.values();
    let tally = sampler::volume_tally(k, radius, grid, samples, seed);
    let hits = tally.hits();
    let log_box = k.dimension() as f64 * (2.0 * radius).ln();
    let log_n = (samples as f64).ln();

    let mut diagnostics = Vec::with_capacity(grid.len());
    for (&eps, &h) in grid.iter().zip(&hits) {
        let log_measure = (h > 0).then(|| (h as f64).ln() - log_n + log_box);
        // The θ regressor log log(1/ε) exists only for ε < 1.
        let used = h as f64 >= MIN_POINT_MASS && eps < 1.0;
        diagnostics.push(GridDiagnostic {
            grid_value: eps,
            hits: h as f64,
            log_measure,
            used,
        });
    }

    let used_idx: Vec<usize> = (0..grid.len()).filter(|&j| diagnostics[j].used).collect();
    if used_idx.len() < MIN_USABLE_POINTS {
        return Err(OracleError::InsufficientHits {
            usable: used_idx.len(),
            needed: MIN_USABLE_POINTS,
        });
    }

    let xs: Vec<f64> = used_idx.iter().map(|&j| grid[j].ln()).collect();
    let gs: Vec<f64> = used_idx.iter().map(|&j| (-grid[j].ln()).ln()).collect();
    let ys: Vec<f64> = used_idx
        .iter()
        .map(|&j| diagnostics[j].log_measure.expect("hits ≥ 100"))
        .collect();

    let chosen = select_scaling_fit(&xs, &gs, &ys, 1.0);
    let replicates = (0..BOOTSTRAP_RESAMPLES).map(|b| {
        let bh = tally.boot_hits(b);
        used_idx
            .iter()
            .map(|&j| (bh[j] > 0).then(|| (bh[j] as f64).ln() - log_n + log_box))
            .collect()
    });
    let stderr = bootstrap_stderr(&xs, &gs, replicates, chosen.used_plane, 1.0);

    Ok(LctEstimate {
        method: OracleMethod::Volume,
        lambda_hat: chosen.lambda,
        theta_hat: chosen.theta,
        stderr_lambda: stderr,
        fit_r2: chosen.r2,
        poor_fit: chosen.r2 < POOR_FIT_R2,
        samples_used: samples,
        diagnostics,
    })
}

/// Estimates (λ, θ) from the scaling of the partition function
/// Z(n) = box-mean of exp(−n·K) over a geometric grid of inverse
/// temperatures.
pub fn estimate_lct_laplace(
    k: &KEvaluator,
    radius: f64,
    n_grid: &GeometricGrid,
    samples: u64,
    seed: u64,
) -> Result<LctEstimate, OracleError> {
    validate_radius(radius)?;
    if samples == 0 {
        return Err(OracleError::TooFewSamples {
            method: "the Laplace method",
            got: samples,
            min: 1,
        });
    }
    validate_grid(
        n_grid,
        "the Laplace method",
        MIN_LAPLACE_GRID_POINTS,
        MIN_LAPLACE_DECADES,
    )?;

    let grid = n_grid.values();
    let tally = sampler::laplace_tally(k, radius, grid, samples, seed);
    let log_box = k.dimension() as f64 * (2.0 * radius).ln();
    let log_n = (samples as f64).ln();

    let mut diagnostics = Vec::with_capacity(grid.len());
    for (j, &n) in grid.iter().enumerate() {
        let (sum, sum_sq) = (tally.sum[j], tally.sum_sq[j]);
        // Effective sample size of the Boltzmann weights; the analog of the
        // hit count for the soft indicator e^{−nK}.
        let ess = if sum_sq > 0.0 {
            sum * sum / sum_sq
        } else {
            0.0
        };
        let log_measure = (sum > 0.0).then(|| sum.ln() - log_n + log_box);
        // The θ regressor log log n exists only for n > 1.
        let used = ess >= MIN_POINT_MASS && n > 1.0 && log_measure.is_some();
        diagnostics.push(GridDiagnostic {
            grid_value: n,
            hits: ess,
            log_measure,
            used,
        });
    }

    let used_idx: Vec<usize> = (0..grid.len()).filter(|&j| diagnostics[j].used).collect();
    if used_idx.len() < MIN_USABLE_POINTS {
        return Err(OracleError::InsufficientHits {
            usable: used_idx.len(),
            needed: MIN_USABLE_POINTS,
        });
    }

    let xs: Vec<f64> = used_idx.iter().map(|&j| grid[j].ln()).collect();
    let gs: Vec<f64> = used_idx.iter().map(|&j| grid[j].ln().ln()).collect();
    let ys: Vec<f64> = used_idx
        .iter()
        .map(|&j| diagnostics[j].log_measure.expect("used ⇒ finite"))
        .collect();

    let chosen = select_scaling_fit(&xs, &gs, &ys, -1.0);
    let replicates = (0..BOOTSTRAP_RESAMPLES).map(|b| {
        used_idx
            .iter()
            .map(|&j| {
                let s = tally.boot_sum[b][j];
                (s > 0.0).then(|| s.ln() - log_n + log_box)
            })
            .collect()
    });
    let stderr = bootstrap_stderr(&xs, &gs, replicates, chosen.used_plane, -1.0);

    Ok(LctEstimate {
        method: OracleMethod::Laplace,
        lambda_hat: chosen.lambda,
        theta_hat: chosen.theta,
        stderr_lambda: stderr,
        fit_r2: chosen.r2,
        poor_fit: chosen.r2 < POOR_FIT_R2,
        samples_used: samples,
        diagnostics,
    })
}
