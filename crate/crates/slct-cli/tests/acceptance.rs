//! End-to-end acceptance battery for the slct workspace.
//!
//! Each numbered check prints exactly one line
//! (`criterion NN [PASS|FAIL] <name> -- <detail>`) and the process exits
//! nonzero when any check fails.  A subset can be selected by number:
//!
//! ```text
//! cargo test -p slct-cli --test acceptance -- 3 7
//! ```

use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use slct_core::{
    coeff_sos_linear, default_eps_grid, estimate_lct_laplace, estimate_lct_volume, k_relu,
    k_softmax, lambda_linear, lambda_relu, lambda_softmax_linear, lambda_softmax_linear_with_pivot,
    GeometricGrid, InputDomain, KEvaluator, Lct, LctEstimate, LinearArchitecture, LinearNetwork,
    Rational, ReluNetwork,
};

/// Fails the enclosing check with a formatted message unless the condition
/// holds.
macro_rules! expect {
    ($cond:expr, $($arg:tt)+) => {
        match $cond {
            true => {}
            false => return Err(format!($($arg)+)),
        }
    };
}

fn rat(num: i64, den: i64) -> Rational {
    Rational::new(num, den).expect("valid test rational")
}

fn lin(widths: &[u32], rank: u32) -> Result<Lct, String> {
    lambda_linear(widths, rank).map_err(|e| format!("lambda_linear({widths:?}, {rank}): {e}"))
}

fn zero_net(widths: &[u32]) -> LinearNetwork {
    let arch = LinearArchitecture::new(widths.to_vec(), false).expect("valid widths");
    let weights = (0..arch.depth())
        .map(|s| DMatrix::zeros(widths[s] as usize, widths[s + 1] as usize))
        .collect();
    LinearNetwork::new(arch, weights, None).expect("consistent shapes")
}

fn grid(min: f64, max: f64) -> Result<GeometricGrid, String> {
    GeometricGrid::new(min, max, 13).map_err(|e| format!("grid [{min:e}, {max:e}]: {e}"))
}

/// |bias| and combined two-sigma band of an estimate against an exact value.
fn bias_band(est: &LctEstimate, lambda: f64) -> (f64, f64) {
    ((est.lambda_hat - lambda).abs(), 2.0 * est.stderr_lambda)
}

// ---------------------------------------------------------------------------
// 1. Closed-form thresholds match hand-derived values.
// ---------------------------------------------------------------------------

fn c01_exact_golden() -> Result<String, String> {
    let cases: &[(&[u32], u32, Rational, u32)] = &[
        (&[1, 1, 1], 0, rat(1, 2), 2),
        (&[2, 2, 2], 0, rat(3, 2), 1),
        (&[2, 2, 2], 1, rat(2, 1), 2),
        (&[2, 1, 2], 1, rat(3, 2), 1),
    ];
    for &(widths, rank, lambda, theta) in cases {
        let got = lin(widths, rank)?;
        expect!(
            got.lambda() == lambda && got.theta() == theta,
            "widths {widths:?} rank {rank}: got {got}, want (lambda = {lambda}, theta = {theta})"
        );
    }
    // The minimal-width shortcut case above must also report order one.
    let depths = 2..=6usize;
    for depth in depths {
        let widths = vec![1u32; depth + 1];
        let got = lin(&widths, 0)?;
        expect!(
            got.lambda() == rat(1, 2) && got.theta() == depth as u32,
            "all-ones depth {depth}: got {got}, want (lambda = 1/2, theta = {depth})"
        );
    }
    Ok("4 fixed cases + all-ones depths 2..=6".into())
}

// ---------------------------------------------------------------------------
// 2. Full-rank two-layer models are regular: lambda = H1*H2/2, theta = 1.
// ---------------------------------------------------------------------------

fn c02_regular_two_layer() -> Result<String, String> {
    for h1 in 1..=6u32 {
        for h2 in 1..=6u32 {
            let got = lin(&[h1, h2], h1.min(h2))?;
            let want = rat((h1 * h2) as i64, 2);
            expect!(
                got.lambda() == want && got.theta() == 1,
                "({h1}, {h2}) at full rank: got {got}, want (lambda = {want}, theta = 1)"
            );
        }
    }
    Ok("36 width pairs".into())
}

// ---------------------------------------------------------------------------
// 3. Volume estimator on K = (ab)^2: accurate and fast on a single thread.
// ---------------------------------------------------------------------------

fn c03_volume_single_thread() -> Result<String, String> {
    let arch = LinearArchitecture::new(vec![1, 1, 1], false).expect("valid widths");
    let truth = zero_net(&[1, 1, 1]);
    let k = coeff_sos_linear(&arch, &truth).map_err(|e| e.to_string())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| format!("thread pool: {e}"))?;
    let start = Instant::now();
    let est = pool
        .install(|| estimate_lct_volume(&k, 1.0, &default_eps_grid(), 1_000_000, 42))
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    expect!(
        (0.43..=0.57).contains(&est.lambda_hat),
        "lambda_hat = {:.4} outside [0.43, 0.57]",
        est.lambda_hat
    );
    expect!(est.fit_r2 >= 0.97, "fit R2 = {:.4} below 0.97", est.fit_r2);
    expect!(
        secs < 10.0,
        "single-threaded run took {secs:.1} s (budget 10 s)"
    );
    Ok(format!(
        "lambda_hat = {:.4}, R2 = {:.4}, {:.1} s",
        est.lambda_hat, est.fit_r2, secs
    ))
}

// ---------------------------------------------------------------------------
// 4. Volume and Laplace estimates agree with each other and with the exact
//    threshold on a six-member battery.
// ---------------------------------------------------------------------------

fn c04_cross_method_battery() -> Result<String, String> {
    struct Member {
        name: &'static str,
        lambda: f64,
        k: KEvaluator,
        vol: (f64, f64, u64),
        lap: (f64, f64, u64),
    }
    let rrr = {
        let arch = LinearArchitecture::new(vec![2, 2, 2], false).expect("valid widths");
        let a1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let a2 = DMatrix::identity(2, 2);
        let truth = LinearNetwork::new(arch.clone(), vec![a1, a2], None).expect("shapes");
        coeff_sos_linear(&arch, &truth).map_err(|e| e.to_string())?
    };
    let members = vec![
        Member {
            name: "a^2",
            lambda: 0.5,
            k: KEvaluator::new(vec![0.0], |w| w[0] * w[0]),
            vol: (1e-8, 1e-2, 1_000_000),
            lap: (1e3, 1e8, 1_000_000),
        },
        Member {
            name: "(ab)^2",
            lambda: 0.5,
            k: KEvaluator::new(vec![0.0; 2], |w| (w[0] * w[1]).powi(2)),
            vol: (1e-10, 1e-4, 1_000_000),
            lap: (1e4, 1e9, 2_000_000),
        },
        Member {
            name: "a^2 b^4",
            lambda: 0.25,
            k: KEvaluator::new(vec![0.0; 2], |w| w[0].powi(2) * w[1].powi(4)),
            vol: (1e-16, 1e-8, 2_000_000),
            lap: (1e8, 1e14, 2_000_000),
        },
        Member {
            name: "a^2 + b^2",
            lambda: 1.0,
            k: KEvaluator::new(vec![0.0; 2], |w| w[0] * w[0] + w[1] * w[1]),
            vol: (1e-6, 1e-1, 1_000_000),
            lap: (1e2, 1e6, 1_000_000),
        },
        Member {
            name: "(abc)^2",
            lambda: 0.5,
            k: KEvaluator::new(vec![0.0; 3], |w| (w[0] * w[1] * w[2]).powi(2)),
            vol: (1e-14, 1e-6, 4_000_000),
            lap: (1e8, 1e14, 4_000_000),
        },
        Member {
            name: "rank-1 (2,2,2)",
            lambda: 2.0,
            k: rrr,
            vol: (1e-5, 1e-1, 2_000_000),
            lap: (1e2, 1e5, 4_000_000),
        },
    ];

    let start = Instant::now();
    let mut worst: (f64, &'static str) = (0.0, "");
    for m in &members {
        let (vlo, vhi, vn) = m.vol;
        let vol = estimate_lct_volume(&m.k, 0.5, &grid(vlo, vhi)?, vn, 42)
            .map_err(|e| format!("{} volume: {e}", m.name))?;
        let (llo, lhi, ln) = m.lap;
        let lap = estimate_lct_laplace(&m.k, 0.5, &grid(llo, lhi)?, ln, 42)
            .map_err(|e| format!("{} laplace: {e}", m.name))?;

        let gap = (vol.lambda_hat - lap.lambda_hat).abs();
        let band = 2.0 * (vol.stderr_lambda.powi(2) + lap.stderr_lambda.powi(2)).sqrt();
        expect!(
            gap <= band,
            "{}: methods apart, |{:.4} - {:.4}| = {gap:.4} > {band:.4}",
            m.name,
            vol.lambda_hat,
            lap.lambda_hat
        );
        for (tag, est) in [("volume", &vol), ("laplace", &lap)] {
            let (bias, sigma2) = bias_band(est, m.lambda);
            expect!(
                bias <= sigma2,
                "{} {tag}: lambda_hat = {:.4} is {bias:.4} from exact {} (band {sigma2:.4})",
                m.name,
                est.lambda_hat,
                m.lambda
            );
            let ratio = if sigma2 > 0.0 {
                bias / sigma2
            } else {
                f64::INFINITY
            };
            if ratio > worst.0 {
                worst = (ratio, m.name);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    expect!(secs < 300.0, "battery took {secs:.0} s (budget 300 s)");
    Ok(format!(
        "6 members x 2 methods, worst bias {:.0}% of band ({}), {secs:.0} s",
        100.0 * worst.0,
        worst.1
    ))
}

// ---------------------------------------------------------------------------
// 5. Additive two-fiber K: lambda near 1 and a positive log-log correction.
// ---------------------------------------------------------------------------

fn c05_two_fiber_loglog() -> Result<String, String> {
    let k = KEvaluator::new(vec![0.0; 5], |w| {
        (w[0] * w[1]).powi(2) + (w[2] * w[3] * w[4]).powi(2)
    });
    let est = estimate_lct_volume(&k, 0.5, &grid(1e-8, 1e-2)?, 2_000_000, 42)
        .map_err(|e| e.to_string())?;
    expect!(
        (0.85..=1.15).contains(&est.lambda_hat),
        "lambda_hat = {:.4} outside [0.85, 1.15]",
        est.lambda_hat
    );
    let theta = est
        .theta_hat
        .ok_or_else(|| "log-log regressor was not selected".to_string())?;
    expect!(
        theta > 1.0,
        "theta_hat = {theta:.3} implies non-positive log-log coefficient"
    );
    Ok(format!(
        "lambda_hat = {:.4}, theta_hat = {theta:.3}",
        est.lambda_hat
    ))
}

// ---------------------------------------------------------------------------
// 6. ReLU analysis removes the dead unit and matches the reduced network.
// ---------------------------------------------------------------------------

fn c06_relu_dead_unit() -> Result<String, String> {
    let net = ReluNetwork::new(
        DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, -1.0]),
        DVector::from_column_slice(&[-2.0, -1.0]),
    )
    .map_err(|e| e.to_string())?;
    let domain = InputDomain::new(vec![0.0, 0.0], vec![3.0, 3.0]).map_err(|e| e.to_string())?;
    let full = lambda_relu(&net, &domain, None).map_err(|e| e.to_string())?;
    expect!(
        full.removed == vec![1],
        "removed units {:?}, want [1] (unit 2)",
        full.removed
    );

    let reduced = ReluNetwork::new(
        DMatrix::from_row_slice(1, 1, &[1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        DVector::from_column_slice(&[-2.0]),
    )
    .map_err(|e| e.to_string())?;
    let red = lambda_relu(&reduced, &domain, None).map_err(|e| e.to_string())?;
    expect!(
        red.removed.is_empty(),
        "reduced net still drops units {:?}",
        red.removed
    );
    expect!(
        full.lct == red.lct,
        "full net {} differs from reduced net {}",
        full.lct,
        red.lct
    );
    expect!(
        full.lct.lambda() == rat(3, 2) && full.lct.theta() == 1,
        "got {}, want (lambda = 3/2, theta = 1)",
        full.lct
    );
    Ok(format!("unit 2 dropped, both nets give {}", full.lct))
}

// ---------------------------------------------------------------------------
// 7. ReLU net active on two disjoint input intervals: exact and sampled.
// ---------------------------------------------------------------------------

fn c07_disjoint_supports() -> Result<String, String> {
    let net = ReluNetwork::new(
        DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
        DVector::from_column_slice(&[-1.0, -1.0]),
    )
    .map_err(|e| e.to_string())?;
    let domain = InputDomain::new(vec![-3.0], vec![3.0]).map_err(|e| e.to_string())?;
    let exact = lambda_relu(&net, &domain, None).map_err(|e| e.to_string())?;
    expect!(
        exact.lct.lambda() == rat(2, 1) && exact.lct.theta() == 1,
        "exact analysis gave {}, want (lambda = 2, theta = 1)",
        exact.lct
    );
    let mut groups = exact.groups.groups.clone();
    groups.sort();
    expect!(
        groups == vec![vec![0], vec![1]],
        "units co-activate: groups {groups:?}, want two singletons"
    );

    let k = k_relu(&net, &domain, 1024, 42).map_err(|e| e.to_string())?;
    let est = estimate_lct_volume(&k, 0.35, &grid(1e-6, 1e-2)?, 1_000_000, 42)
        .map_err(|e| e.to_string())?;
    expect!(
        (1.7..=2.3).contains(&est.lambda_hat),
        "lambda_hat = {:.4} outside [1.7, 2.3]",
        est.lambda_hat
    );
    Ok(format!(
        "exact {}, lambda_hat = {:.4}",
        exact.lct, est.lambda_hat
    ))
}

// ---------------------------------------------------------------------------
// 8. Softmax reduction: exact value, sampled value, and pivot invariance.
// ---------------------------------------------------------------------------

fn c08_softmax_reduction() -> Result<String, String> {
    let arch = LinearArchitecture::new(vec![2, 1], false).expect("valid widths");
    let truth = zero_net(&[2, 1]);
    let exact = lambda_softmax_linear(&arch, &truth).map_err(|e| e.to_string())?;
    expect!(
        exact.lambda() == rat(1, 2) && exact.theta() == 1,
        "two-class model gave {exact}, want (lambda = 1/2, theta = 1)"
    );

    let domain = InputDomain::new(vec![-1.0], vec![1.0]).map_err(|e| e.to_string())?;
    let k = k_softmax(&arch, &truth, &domain, 2000, 42).map_err(|e| e.to_string())?;
    let est = estimate_lct_volume(&k, 0.5, &default_eps_grid(), 200_000, 42)
        .map_err(|e| e.to_string())?;
    expect!(
        (0.4..=0.6).contains(&est.lambda_hat),
        "lambda_hat = {:.4} outside [0.4, 0.6]",
        est.lambda_hat
    );

    // Pivot invariance on a random realizable three-class, two-input truth.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let arch3 = LinearArchitecture::new(vec![3, 2], false).expect("valid widths");
    let w = DMatrix::from_fn(3, 2, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    let truth3 = LinearNetwork::new(arch3.clone(), vec![w], None).expect("shapes");
    let base = lambda_softmax_linear_with_pivot(&arch3, &truth3, 0).map_err(|e| e.to_string())?;
    for pivot in 1..3usize {
        let got =
            lambda_softmax_linear_with_pivot(&arch3, &truth3, pivot).map_err(|e| e.to_string())?;
        expect!(
            got == base,
            "pivot {} gives {got}, pivot 1 gives {base}",
            pivot + 1
        );
    }
    Ok(format!(
        "exact {exact}, lambda_hat = {:.4}, 3 pivots agree",
        est.lambda_hat
    ))
}

// ---------------------------------------------------------------------------
// 9. The estimate is a function of K, not of how K is written.
// ---------------------------------------------------------------------------

fn c09_presentation_invariance() -> Result<String, String> {
    let ka = KEvaluator::new(vec![0.0; 2], |w| {
        let (f1, f2) = (w[0] * w[1], w[0] * w[0]);
        f1 * f1 + f2 * f2
    });
    let kb = KEvaluator::new(vec![0.0; 2], |w| {
        let (f1, f2) = (w[0] * w[1], w[0] * w[0]);
        (f1 + f2).powi(2) + (f1 - f2).powi(2)
    });
    let g = grid(1e-10, 1e-4)?;
    let ea = estimate_lct_volume(&ka, 0.5, &g, 1_000_000, 42).map_err(|e| e.to_string())?;
    let eb = estimate_lct_volume(&kb, 0.5, &g, 1_000_000, 4242).map_err(|e| e.to_string())?;
    let gap = (ea.lambda_hat - eb.lambda_hat).abs();
    let band = 2.0 * (ea.stderr_lambda.powi(2) + eb.stderr_lambda.powi(2)).sqrt();
    expect!(
        gap <= band,
        "presentations apart: |{:.4} - {:.4}| = {gap:.4} > {band:.4}",
        ea.lambda_hat,
        eb.lambda_hat
    );
    Ok(format!(
        "|{:.4} - {:.4}| = {gap:.4} <= {band:.4}",
        ea.lambda_hat, eb.lambda_hat
    ))
}

// ---------------------------------------------------------------------------
// 10. Constant-width stacks: thresholds are nonincreasing in depth and match
//     the closed form.
// ---------------------------------------------------------------------------

/// One frozen row: width, rank, and the (num, den) threshold per depth 1..=5.
type DepthRow = (u32, u32, [(i64, i64); 5]);

fn c10_depth_tables() -> Result<String, String> {
    let table: &[DepthRow] = &[
        (2, 0, [(2, 1), (3, 2), (3, 2), (3, 2), (3, 2)]),
        (2, 1, [(2, 1), (2, 1), (2, 1), (2, 1), (2, 1)]),
        (3, 0, [(9, 2), (7, 2), (3, 1), (3, 1), (3, 1)]),
        (3, 1, [(9, 2), (4, 1), (4, 1), (4, 1), (4, 1)]),
        (4, 0, [(8, 1), (6, 1), (11, 2), (5, 1), (5, 1)]),
        (4, 1, [(8, 1), (7, 1), (13, 2), (13, 2), (13, 2)]),
    ];
    for &(h, r, lambdas) in table {
        let mut prev: Option<Rational> = None;
        for (i, &(num, den)) in lambdas.iter().enumerate() {
            let depth = i + 1;
            let widths = vec![h; depth + 1];
            let got = lin(&widths, r)?;
            let want = rat(num, den);
            expect!(
                got.lambda() == want,
                "width {h} rank {r} depth {depth}: lambda = {}, want {want}",
                got.lambda()
            );
            if let Some(p) = prev {
                expect!(
                    got.lambda() <= p,
                    "width {h} rank {r}: lambda rose from {p} to {} at depth {depth}",
                    got.lambda()
                );
            }
            prev = Some(got.lambda());
        }
    }
    Ok("30 stacks, nonincreasing in depth".into())
}

// ---------------------------------------------------------------------------
// 11. The verify pipeline is bit-reproducible across runs and thread counts.
// ---------------------------------------------------------------------------

fn c11_thread_determinism() -> Result<String, String> {
    let dir = std::env::temp_dir().join(format!("slct-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| format!("mkdir {}: {e}", dir.display()))?;
    let net = dir.join("net.json");
    std::fs::write(
        &net,
        concat!(
            "{\"format\": \"slct-net-v1\", \"widths\": [1, 1, 1],\n",
            " \"layers\": [{\"A\": [[0.0]]}, {\"A\": [[0.0]]}]}\n"
        ),
    )
    .map_err(|e| format!("write {}: {e}", net.display()))?;

    let run = |threads: &str| -> Result<Vec<u8>, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_slct"))
            .args([
                "verify",
                "--truth",
                net.to_str().expect("utf-8 temp path"),
                "--kind",
                "linear",
                "--method",
                "volume",
                "--samples",
                "1000000",
                "--seed",
                "42",
                "--radius",
                "1.0",
                "--json",
            ])
            .env("SLCT_THREADS", threads)
            .output()
            .map_err(|e| format!("spawn slct: {e}"))?;
        expect!(
            out.status.success(),
            "verify failed under SLCT_THREADS={threads}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        Ok(out.stdout)
    };
    let first = run("1")?;
    let again = run("1")?;
    let wide = run("4")?;
    std::fs::remove_dir_all(&dir).ok();
    expect!(first == again, "two identical runs differ");
    expect!(first == wide, "outputs differ between 1 and 4 threads");
    Ok(format!("3 runs byte-identical ({} bytes)", first.len()))
}

// ---------------------------------------------------------------------------

fn panic_text(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = payload.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic: <non-string payload>".into()
    }
}

/// A single acceptance check: returns a detail string or a failure message.
type Check = fn() -> Result<String, String>;

fn main() {
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let checks: Vec<(u32, &str, Check)> = vec![
        (
            1,
            "closed-form thresholds match hand-derived values",
            c01_exact_golden,
        ),
        (
            2,
            "full-rank two-layer models are regular",
            c02_regular_two_layer,
        ),
        (
            3,
            "volume estimator is accurate and fast single-threaded",
            c03_volume_single_thread,
        ),
        (
            4,
            "volume and Laplace agree on a six-member battery",
            c04_cross_method_battery,
        ),
        (
            5,
            "two-fiber K has lambda near 1 and positive log-log term",
            c05_two_fiber_loglog,
        ),
        (
            6,
            "dead ReLU unit is removed without changing the threshold",
            c06_relu_dead_unit,
        ),
        (
            7,
            "disjoint-support ReLU units contribute additively",
            c07_disjoint_supports,
        ),
        (
            8,
            "softmax reduction is exact, sampled, and pivot-invariant",
            c08_softmax_reduction,
        ),
        (
            9,
            "estimates depend on K, not its presentation",
            c09_presentation_invariance,
        ),
        (
            10,
            "constant-width stacks match tables, nonincreasing",
            c10_depth_tables,
        ),
        (
            11,
            "verify output is byte-identical across thread counts",
            c11_thread_determinism,
        ),
    ];

    let mut failed = 0u32;
    for (num, name, check) in checks {
        if !filter.is_empty() && !filter.contains(&num) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check);
        let secs = start.elapsed().as_secs_f64();
        let (ok, detail) = match outcome {
            Ok(Ok(detail)) => (true, detail),
            Ok(Err(detail)) => (false, detail),
            Err(payload) => (false, panic_text(payload)),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {num:02} [{}] {name} -- {detail} ({secs:.1} s)",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
