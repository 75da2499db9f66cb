//! Behavioral checks of the Monte-Carlo threshold estimators: determinism,
//! scale equivariance, quadrature stability, and error reporting.

use nalgebra::{DMatrix, DVector};
use slct_core::{
    estimate_lct_laplace, estimate_lct_volume, k_relu, GeometricGrid, InputDomain, KEvaluator,
    OracleError, ReluNetwork,
};

fn eps_grid() -> GeometricGrid {
    GeometricGrid::new(1e-8, 1e-2, 13).expect("valid grid")
}

fn product_k() -> KEvaluator {
    KEvaluator::new(vec![0.0; 2], |w| (w[0] * w[1]).powi(2))
}

/// Identical inputs give identical estimates regardless of the rayon pool
/// executing the sampling.
#[test]
fn estimates_do_not_depend_on_worker_count() {
    let narrow = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("pool");
    let wide = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .expect("pool");
    let k = product_k();
    let one =
        narrow.install(|| estimate_lct_volume(&k, 0.5, &eps_grid(), 200_000, 9).expect("estimate"));
    let three =
        wide.install(|| estimate_lct_volume(&k, 0.5, &eps_grid(), 200_000, 9).expect("estimate"));
    assert_eq!(one, three);

    let n_grid = GeometricGrid::new(1e2, 1e6, 9).expect("valid grid");
    let lap_one =
        narrow.install(|| estimate_lct_laplace(&k, 0.5, &n_grid, 200_000, 9).expect("estimate"));
    let lap_three =
        wide.install(|| estimate_lct_laplace(&k, 0.5, &n_grid, 200_000, 9).expect("estimate"));
    assert_eq!(lap_one, lap_three);
}

/// Rescaling K by a positive constant shifts log-volumes but must not move
/// the fitted slope beyond joint noise.
#[test]
fn positive_rescaling_preserves_the_slope() {
    let k = product_k();
    let scaled = KEvaluator::new(vec![0.0; 2], |w| 3.0 * (w[0] * w[1]).powi(2));
    let base = estimate_lct_volume(&k, 0.5, &eps_grid(), 400_000, 5).expect("estimate");
    let triple = estimate_lct_volume(&scaled, 0.5, &eps_grid(), 400_000, 5).expect("estimate");
    assert!(base.stderr_lambda.is_finite() && base.stderr_lambda > 0.0);
    let gap = (base.lambda_hat - triple.lambda_hat).abs();
    let band = 2.0 * (base.stderr_lambda.powi(2) + triple.stderr_lambda.powi(2)).sqrt();
    assert!(
        gap <= band,
        "|{} - {}| = {gap} > {band}",
        base.lambda_hat,
        triple.lambda_hat
    );
}

/// A K bounded away from zero leaves every sublevel bin empty and must
/// surface the dedicated insufficient-hits error.
#[test]
fn bounded_below_k_reports_insufficient_hits() {
    let k = KEvaluator::new(vec![0.0; 2], |_| 1.0);
    let err = estimate_lct_volume(&k, 0.5, &eps_grid(), 150_000, 1).expect_err("no hits");
    assert!(
        matches!(err, OracleError::InsufficientHits { usable: 0, .. }),
        "got {err:?}"
    );
    assert!(
        err.to_string().starts_with("insufficient hits"),
        "message: {err}"
    );
}

/// Doubling the output-discrepancy quadrature changes the sampled ReLU K
/// only slightly away from the truth and not at all at the truth.
#[test]
fn relu_quadrature_refinement_is_stable() {
    let net = ReluNetwork::new(
        DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
        DVector::from_column_slice(&[-1.0, -1.0]),
    )
    .expect("consistent shapes");
    let domain = InputDomain::new(vec![-3.0], vec![3.0]).expect("valid box");
    let coarse = k_relu(&net, &domain, 2048, 3).expect("evaluator");
    let fine = k_relu(&net, &domain, 4096, 3).expect("evaluator");

    assert_eq!(coarse.evaluate(coarse.center()), 0.0);
    assert_eq!(fine.evaluate(fine.center()), 0.0);

    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    for _ in 0..50 {
        let w: Vec<f64> = coarse
            .center()
            .iter()
            .map(|c| c + 0.35 * (rng.gen::<f64>() * 2.0 - 1.0))
            .collect();
        let (a, b) = (coarse.evaluate(&w), fine.evaluate(&w));
        if a > 1e-3 {
            checked += 1;
            let rel = (a - b).abs() / a;
            assert!(
                rel < 0.1,
                "quadrature-sensitive K: {a} vs {b} (rel {rel:.3})"
            );
        }
    }
    assert!(checked >= 10, "only {checked} informative points");
}

/// The two estimators read their grids in opposite directions (volumes grow
/// with epsilon, partition functions shrink with n); both must recover a
/// plain quadratic within noise.
#[test]
fn quadratic_k_recovers_half_per_direction() {
    let k = KEvaluator::new(vec![0.0], |w| w[0] * w[0]);
    let vol = estimate_lct_volume(&k, 0.5, &eps_grid(), 300_000, 2).expect("estimate");
    let lap = estimate_lct_laplace(
        &k,
        0.5,
        &GeometricGrid::new(1e2, 1e6, 13).expect("valid grid"),
        300_000,
        2,
    )
    .expect("estimate");
    assert!((vol.lambda_hat - 0.5).abs() <= 3.0 * vol.stderr_lambda.max(0.01));
    assert!((lap.lambda_hat - 0.5).abs() <= 3.0 * lap.stderr_lambda.max(0.01));
    assert!(!vol.poor_fit && !lap.poor_fit);
}
