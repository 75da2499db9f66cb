//! slct: exact learning coefficients for singular network models, with a
//! Monte-Carlo verifier and architecture ranking.
//!
//! Exit codes: 0 success, 1 usage error, 2 input validation failure,
//! 3 numerical failure (poor fit, insufficient hits, or disagreement with
//! the exact value).

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use slct_core::{
    coeff_sos_linear, estimate_lct_laplace, estimate_lct_volume, k_relu, k_softmax,
    lambda_architecture, lambda_relu, lambda_softmax_linear_with_pivot,
    softmax_difference_reduction_with_pivot, BoxFile, CandidatesFile, DifferenceReduction,
    GeometricGrid, GroupsFile, KError, LctEstimate, LinearArchitecture, LinearError, NetworkFile,
    OracleError, ReluError, SchemaError, SelectError, SoftmaxError, SoftmaxModel,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "slct",
    version,
    about = "Exact learning coefficients (lambda, theta) for linear, ReLU, and softmax networks",
    long_about = "Computes the learning coefficient lambda (the real log canonical threshold of \
                  the average error function) and its order theta, exactly, for multi-layer \
                  linear networks, three-layer ReLU networks, and softmax-output models; checks \
                  the closed forms against a seeded Monte-Carlo estimator; ranks architectures \
                  by asymptotic free-energy penalty.\n\nWidth lists are output-first: the first \
                  entry is the output dimension, the last is the input dimension."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact (lambda, theta) for a multi-layer linear network
    Linear(LinearArgs),
    /// Exact (lambda, theta) for a three-layer ReLU network on a box domain
    Relu(ReluArgs),
    /// Exact (lambda, theta) for a softmax-output model with linear pre-activation
    Softmax(SoftmaxArgs),
    /// Cross-check a closed-form value with the Monte-Carlo estimator
    Verify(VerifyArgs),
    /// Rank candidate architectures by free-energy penalty at a sample count
    Select(SelectArgs),
}

#[derive(Args)]
struct LinearArgs {
    /// Output-first widths, comma separated (e.g. 1,2,1)
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "truth",
        required_unless_present = "truth"
    )]
    widths: Option<Vec<u32>>,
    /// Rank of the truth the architecture must realize
    #[arg(long, conflicts_with = "truth", required_unless_present = "truth")]
    rank: Option<u32>,
    /// Truth network file (slct-net-v1); rank is computed from its weights
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Architecture carries per-layer bias parameters
    #[arg(long)]
    bias: bool,
    /// Emit JSON instead of human-readable text
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReluArgs {
    /// Truth network file (slct-net-v1, 2 layers, hidden bias, zero output bias)
    #[arg(long)]
    truth: PathBuf,
    /// Input box file (slct-box-v1)
    #[arg(long)]
    domain: PathBuf,
    /// Replace the co-activation grouping (1-based unit indices)
    #[arg(long)]
    groups: Option<PathBuf>,
    /// Emit JSON instead of human-readable text
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SoftmaxArgs {
    /// Truth network file (slct-net-v1) for the pre-activation
    #[arg(long)]
    truth: PathBuf,
    /// Output class used as the differencing pivot (1-based)
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pivot: u32,
    /// Emit JSON instead of human-readable text
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Linear,
    Relu,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Volume,
    Laplace,
}

#[derive(Args)]
struct VerifyArgs {
    /// Truth network file (slct-net-v1)
    #[arg(long)]
    truth: PathBuf,
    /// Model family of the truth file
    #[arg(long, value_enum)]
    kind: Kind,
    /// Estimator: sublevel-set volume scaling or Laplace (partition-function) scaling
    #[arg(long, value_enum)]
    method: Method,
    /// Monte-Carlo sample budget
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    /// Master seed; fixed seed gives byte-identical output for any SLCT_THREADS
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Half-width of the sampling box around the truth parameters
    #[arg(long, default_value_t = 0.5)]
    radius: f64,
    /// Smallest sublevel threshold of the volume grid
    #[arg(long, default_value_t = 1e-8)]
    eps_min: f64,
    /// Largest sublevel threshold of the volume grid
    #[arg(long, default_value_t = 1e-2)]
    eps_max: f64,
    /// Number of points in the volume grid
    #[arg(long, default_value_t = 13)]
    eps_points: usize,
    /// Smallest inverse temperature of the Laplace grid
    #[arg(long, default_value_t = 1e2)]
    n_min: f64,
    /// Largest inverse temperature of the Laplace grid
    #[arg(long, default_value_t = 1e6)]
    n_max: f64,
    /// Number of points in the Laplace grid
    #[arg(long, default_value_t = 13)]
    n_points: usize,
    /// Input box file, required for relu and softmax kinds
    #[arg(
        long,
        required_if_eq_any([("kind", "relu"), ("kind", "softmax")])
    )]
    domain: Option<PathBuf>,
    /// Quadrature points for the integral error functions (relu, softmax)
    #[arg(long, default_value_t = 4096)]
    quadrature: usize,
    /// Write per-gridpoint diagnostics as CSV to this path
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Base tolerance of the agreement check |lambda_hat - lambda| <= tol + 2*stderr
    #[arg(long, default_value_t = 0.1)]
    tol: f64,
    /// Emit JSON instead of human-readable text
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SelectArgs {
    /// Candidates file: {"candidates":[{"widths":[...],"bias":bool,"rank":int}]}
    #[arg(long)]
    candidates: PathBuf,
    /// Sample count at which penalties are evaluated (>= 3)
    #[arg(long)]
    n: u64,
    /// Emit JSON instead of human-readable text
    #[arg(long)]
    json: bool,
}

/// A fatal error with its exit code; the message must stay on one line.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Failure {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

macro_rules! validation_failure {
    ($($ty:ty),+) => {$(
        impl From<$ty> for Failure {
            fn from(e: $ty) -> Failure {
                Failure::input(e.to_string())
            }
        }
    )+};
}

validation_failure!(
    SchemaError,
    LinearError,
    ReluError,
    SoftmaxError,
    KError,
    SelectError
);

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Failure {
        let code = match e {
            OracleError::InsufficientHits { .. } => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            // Flatten the message onto one line, dropping the usage block.
            let text = e.to_string();
            let reason: Vec<&str> = text
                .lines()
                .take_while(|l| !l.trim().is_empty())
                .map(str::trim)
                .collect();
            eprintln!("{} (run with --help for usage)", reason.join(" "));
            return ExitCode::from(1);
        }
    };
    if let Err(f) = configure_threads() {
        eprintln!("error: {}", f.message);
        return ExitCode::from(f.code);
    }
    let result = match cli.command {
        Command::Linear(args) => run_linear(&args),
        Command::Relu(args) => run_relu(&args),
        Command::Softmax(args) => run_softmax(&args),
        Command::Verify(args) => run_verify(&args),
        Command::Select(args) => run_select(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Honors SLCT_THREADS by sizing the global worker pool before any parallel
/// work starts; estimates themselves are identical for any thread count.
fn configure_threads() -> Result<(), Failure> {
    match std::env::var("SLCT_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => {
            let threads: usize =
                raw.trim()
                    .parse()
                    .ok()
                    .filter(|&n| n >= 1)
                    .ok_or_else(|| Failure {
                        code: 1,
                        message: format!("SLCT_THREADS must be a positive integer, got {raw:?}"),
                    })?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| Failure {
                    code: 1,
                    message: format!("cannot size worker pool: {e}"),
                })
        }
    }
}

/// Standard JSON envelope: every document carries tool, version, command.
fn envelope(command: &str, body: serde_json::Value) -> String {
    let mut map = serde_json::Map::new();
    map.insert("tool".to_string(), json!("slct"));
    map.insert("version".to_string(), json!(env!("CARGO_PKG_VERSION")));
    map.insert("command".to_string(), json!(command));
    if let serde_json::Value::Object(obj) = body {
        for (k, v) in obj {
            map.insert(k, v);
        }
    }
    serde_json::Value::Object(map).to_string()
}

fn lct_text(lct: &slct_core::Lct, remark: bool) -> String {
    let tag = if remark { " [Remark path]" } else { "" };
    format!(
        "lambda = {} ({}), theta = {}{}",
        lct.lambda(),
        lct.lambda().to_f64(),
        lct.theta(),
        tag
    )
}

fn lct_json(lct: &slct_core::Lct) -> serde_json::Value {
    json!({ "lambda": lct.lambda(), "theta": lct.theta() })
}

fn comma_list<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn run_linear(args: &LinearArgs) -> Result<u8, Failure> {
    let (arch, rank) = match &args.truth {
        Some(path) => {
            let net = NetworkFile::load(path)?.to_linear_network()?;
            let bias = net.architecture().bias() || args.bias;
            let arch = LinearArchitecture::new(net.architecture().widths().to_vec(), bias)?;
            (arch, net.true_rank())
        }
        None => {
            let widths = args
                .widths
                .clone()
                .expect("clap enforces widths without truth");
            let rank = args.rank.expect("clap enforces rank without truth");
            (LinearArchitecture::new(widths, args.bias)?, rank)
        }
    };
    let lct = lambda_architecture(&arch, rank)?;
    // A width equal to the rank zeroes a surplus and short-circuits the
    // selection formula; the output tags that path.
    let remark = arch.widths().contains(&rank);
    if args.json {
        let mut body = lct_json(&lct);
        let obj = body.as_object_mut().expect("object");
        obj.insert("widths".to_string(), json!(arch.widths()));
        obj.insert("bias".to_string(), json!(arch.bias()));
        obj.insert("rank".to_string(), json!(rank));
        obj.insert("remark_path".to_string(), json!(remark));
        println!("{}", envelope("linear", body));
    } else {
        println!("{}", lct_text(&lct, remark));
    }
    Ok(0)
}

fn run_relu(args: &ReluArgs) -> Result<u8, Failure> {
    let net = NetworkFile::load(&args.truth)?.to_relu_network()?;
    let domain = BoxFile::load(&args.domain)?.to_domain()?;
    let overrides = match &args.groups {
        Some(path) => Some(GroupsFile::load(path)?.to_overrides()?),
        None => None,
    };
    let analysis = lambda_relu(&net, &domain, overrides.as_ref())?;

    if args.json {
        let groups: Vec<serde_json::Value> = analysis
            .groups
            .groups
            .iter()
            .zip(&analysis.groups.per_group)
            .map(|(units, stats)| {
                json!({
                    "units": units.iter().map(|u| u + 1).collect::<Vec<_>>(),
                    "size": stats.size,
                    "h1": stats.effective_outputs,
                    "rank": stats.rank,
                })
            })
            .collect();
        let mut body = lct_json(&analysis.lct);
        let obj = body.as_object_mut().expect("object");
        obj.insert(
            "removed_units".to_string(),
            json!(analysis.removed.iter().map(|u| u + 1).collect::<Vec<_>>()),
        );
        obj.insert("degenerate".to_string(), json!(analysis.degenerate));
        obj.insert("groups".to_string(), json!(groups));
        println!("{}", envelope("relu", body));
    } else {
        println!("{}", lct_text(&analysis.lct, false));
        if analysis.removed.is_empty() {
            println!("removed units: none");
        } else {
            println!(
                "removed units: {}",
                comma_list(analysis.removed.iter().map(|u| u + 1))
            );
        }
        if analysis.degenerate {
            println!("all hidden units are dead on the domain; the model is constant");
        }
        for (units, stats) in analysis
            .groups
            .groups
            .iter()
            .zip(&analysis.groups.per_group)
        {
            println!(
                "group {{{}}}: size = {}, h1 = {}, rank = {}",
                comma_list(units.iter().map(|u| u + 1)),
                stats.size,
                stats.effective_outputs,
                stats.rank
            );
        }
    }
    Ok(0)
}

fn run_softmax(args: &SoftmaxArgs) -> Result<u8, Failure> {
    let net = NetworkFile::load(&args.truth)?.to_linear_network()?;
    let arch = net.architecture().clone();
    // The argument parser guarantees pivot >= 1; bound it by the class count
    // here so the error speaks the caller's 1-based convention.
    let classes = arch.output_dim();
    if args.pivot > classes {
        return Err(Failure::input(format!(
            "pivot class {} out of range 1..={classes}",
            args.pivot
        )));
    }
    let pivot = (args.pivot - 1) as usize;
    let lct = lambda_softmax_linear_with_pivot(&arch, &net, pivot)?;
    let model = SoftmaxModel::new(net.clone());
    let reduction = softmax_difference_reduction_with_pivot(&model, &net, pivot)?;
    let reduced_widths: Option<Vec<u32>> = match &reduction {
        DifferenceReduction::Trivial => None,
        DifferenceReduction::Reduced(pair) => Some(pair.model.architecture().widths().to_vec()),
    };
    if args.json {
        let mut body = lct_json(&lct);
        let obj = body.as_object_mut().expect("object");
        obj.insert("widths".to_string(), json!(arch.widths()));
        obj.insert("bias".to_string(), json!(arch.bias()));
        obj.insert("pivot".to_string(), json!(args.pivot));
        obj.insert("reduced_widths".to_string(), json!(reduced_widths));
        println!("{}", envelope("softmax", body));
    } else {
        println!("{}", lct_text(&lct, false));
        match reduced_widths {
            None => println!("single output class: the softmax is constant"),
            Some(w) => println!(
                "pivot class {}; differenced widths: {}",
                args.pivot,
                comma_list(w)
            ),
        }
    }
    Ok(0)
}

fn run_verify(args: &VerifyArgs) -> Result<u8, Failure> {
    let file = NetworkFile::load(&args.truth)?;
    let load_domain = || -> Result<slct_core::InputDomain, Failure> {
        let path = args
            .domain
            .as_ref()
            .expect("clap requires --domain for this kind");
        Ok(BoxFile::load(path)?.to_domain()?)
    };

    let (exact, k) = match args.kind {
        Kind::Linear => {
            let net = file.to_linear_network()?;
            let arch = net.architecture().clone();
            let lct = lambda_architecture(&arch, net.true_rank())?;
            let k = coeff_sos_linear(&arch, &net)?;
            (lct, k)
        }
        Kind::Relu => {
            let net = file.to_relu_network()?;
            let domain = load_domain()?;
            let lct = lambda_relu(&net, &domain, None)?.lct;
            let k = k_relu(&net, &domain, args.quadrature, args.seed)?;
            (lct, k)
        }
        Kind::Softmax => {
            let net = file.to_linear_network()?;
            let domain = load_domain()?;
            let arch = net.architecture().clone();
            let lct = lambda_softmax_linear_with_pivot(&arch, &net, 0)?;
            let k = k_softmax(&arch, &net, &domain, args.quadrature, args.seed)?;
            (lct, k)
        }
    };

    let estimate: LctEstimate = match args.method {
        Method::Volume => {
            let grid = GeometricGrid::new(args.eps_min, args.eps_max, args.eps_points)?;
            estimate_lct_volume(&k, args.radius, &grid, args.samples, args.seed)?
        }
        Method::Laplace => {
            let grid = GeometricGrid::new(args.n_min, args.n_max, args.n_points)?;
            estimate_lct_laplace(&k, args.radius, &grid, args.samples, args.seed)?
        }
    };

    if let Some(path) = &args.csv {
        std::fs::write(path, estimate.diagnostics_csv())
            .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))?;
    }

    let lambda_exact = exact.lambda().to_f64();
    let delta = (estimate.lambda_hat - lambda_exact).abs();
    let bound = args.tol + 2.0 * estimate.stderr_lambda;
    let agrees = delta <= bound;

    if args.json {
        let body = json!({
            "kind": format!("{:?}", args.kind).to_lowercase(),
            "exact": { "lambda": exact.lambda(), "theta": exact.theta() },
            "estimate": estimate,
            "seed": args.seed,
            "radius": args.radius,
            "tolerance": args.tol,
            "agreement_bound": bound,
            "agrees": agrees,
        });
        println!("{}", envelope("verify", body));
    } else {
        println!("exact: {}", lct_text(&exact, false));
        let theta_hat = match estimate.theta_hat {
            Some(t) => format!("{t:.3}"),
            None => "n/a".to_string(),
        };
        println!(
            "estimate ({}): lambda_hat = {:.4}, stderr = {:.4}, R2 = {:.4}, theta_hat = {}, samples = {}",
            estimate.method,
            estimate.lambda_hat,
            estimate.stderr_lambda,
            estimate.fit_r2,
            theta_hat,
            estimate.samples_used
        );
        println!(
            "agreement: |lambda_hat - lambda| = {:.4} {} tol + 2*stderr = {:.4} -> {}",
            delta,
            if agrees { "<=" } else { ">" },
            bound,
            if agrees { "OK" } else { "FAIL" }
        );
    }

    if estimate.poor_fit {
        eprintln!(
            "error: poor fit: R2 = {:.4} is below the 0.95 threshold; the scaling law does not describe the data",
            estimate.fit_r2
        );
        return Ok(3);
    }
    if !agrees {
        eprintln!(
            "error: estimate disagrees with the exact value: |{:.4} - {}| = {:.4} > {:.4}",
            estimate.lambda_hat,
            exact.lambda(),
            delta,
            bound
        );
        return Ok(3);
    }
    Ok(0)
}

fn run_select(args: &SelectArgs) -> Result<u8, Failure> {
    let file = CandidatesFile::load(&args.candidates)?;
    let ranking = slct_core::rank_architectures(&file.candidates, args.n)?;
    if args.json {
        let failures: Vec<serde_json::Value> = ranking
            .failures
            .iter()
            .map(|f| {
                json!({
                    "index": f.index + 1,
                    "widths": f.candidate.widths,
                    "bias": f.candidate.bias,
                    "rank": f.candidate.rank,
                    "error": f.error.to_string(),
                })
            })
            .collect();
        let body = json!({
            "n": args.n,
            "ranked": ranking.ranked,
            "failures": failures,
        });
        println!("{}", envelope("select", body));
    } else {
        for (i, rc) in ranking.ranked.iter().enumerate() {
            println!(
                "{}. widths = {}, bias = {}, rank = {}: lambda = {} ({}), theta = {}, penalty = {:.4}",
                i + 1,
                comma_list(rc.candidate.widths.iter()),
                rc.candidate.bias,
                rc.candidate.rank,
                rc.lambda,
                rc.lambda.to_f64(),
                rc.theta,
                rc.penalty
            );
        }
        if ranking.ranked.is_empty() {
            println!("no valid candidates");
        }
        if !ranking.failures.is_empty() {
            println!("failed candidates:");
            for f in &ranking.failures {
                println!(
                    "  #{} (widths = {}): {}",
                    f.index + 1,
                    comma_list(f.candidate.widths.iter()),
                    f.error
                );
            }
        }
    }
    Ok(0)
}
