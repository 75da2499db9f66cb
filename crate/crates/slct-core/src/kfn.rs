//! Evaluators of the average error function K(w).
//!
//! Every evaluator is a non-negative function of the flattened parameter
//! vector that vanishes at its center w*. For linear models K is replaced by
//! the exactly-equivalent sum of squared coefficient differences of the
//! end-to-end affine map (same sublevel-set geometry near w*, no quadrature
//! error). ReLU and softmax models integrate the squared output difference
//! over a fixed, seeded quasi-uniform point set so that the function seen by
//! the Monte-Carlo oracle is deterministic.

use crate::linear::{LinearArchitecture, LinearNetwork};
use crate::relu::{InputDomain, ReluNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use thiserror::Error;

/// Minimum quadrature size for the integral-based evaluators.
pub const MIN_QUADRATURE: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KError {
    #[error("truth widths {got:?} do not match the architecture widths {want:?}")]
    WidthsMismatch { got: Vec<u32>, want: Vec<u32> },
    #[error("truth carries bias vectors but the architecture has bias disabled")]
    UnexpectedBias,
    #[error("quadrature needs at least {MIN_QUADRATURE} points, got {0}")]
    TooFewPoints(usize),
    #[error("domain dimension {got} does not match the model input dimension {want}")]
    DomainMismatch { got: usize, want: usize },
}

/// Shared, thread-safe error function.
type KClosure = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A non-negative error function over parameter space with a known zero.
#[derive(Clone)]
pub struct KEvaluator {
    center: Vec<f64>,
    f: KClosure,
}

impl KEvaluator {
    /// Wraps an arbitrary error function; `f` must be non-negative and vanish
    /// at `center` (the constructors in this module guarantee it, custom
    /// closures are on the caller).
    pub fn new(center: Vec<f64>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> KEvaluator {
        KEvaluator {
            center,
            f: Arc::new(f),
        }
    }

    /// Parameter-space dimension d.
    pub fn dimension(&self) -> usize {
        self.center.len()
    }

    /// The zero w* the oracle samples around.
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn evaluate(&self, w: &[f64]) -> f64 {
        debug_assert_eq!(
            w.len(),
            self.center.len(),
            "parameter vector has wrong length"
        );
        (self.f)(w)
    }
}

impl std::fmt::Debug for KEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KEvaluator(dim = {})", self.center.len())
    }
}

/// `out = a · b` for row-major `a` (m×k) and `b` (k×n).
fn matmul(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let row = &b[p * n..(p + 1) * n];
            let dst = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                dst[j] += aip * row[j];
            }
        }
    }
    out
}

/// `out += a · x` for row-major `a` (m×k).
fn matvec_acc(a: &[f64], m: usize, k: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..m {
        let row = &a[i * k..(i + 1) * k];
        let mut s = 0.0;
        for j in 0..k {
            s += row[j] * x[j];
        }
        out[i] += s;
    }
}

/// Walks the flattened parameters of a linear network and returns the
/// end-to-end product (row-major H1×Hend) and, when `bias`, the absorbed
/// output bias.
fn affine_of_params(w: &[f64], widths: &[u32], bias: bool) -> (Vec<f64>, Option<Vec<f64>>) {
    let depth = widths.len() - 1;
    let (h0, h1) = (widths[0] as usize, widths[1] as usize);
    let mut off = 0;
    let mut cur = w[off..off + h0 * h1].to_vec();
    let mut cur_cols = h1;
    off += h0 * h1;
    let mut babs = if bias {
        let b = w[off..off + h0].to_vec();
        off += h0;
        Some(b)
    } else {
        None
    };
    for s in 1..depth {
        let (rows, cols) = (widths[s] as usize, widths[s + 1] as usize);
        let a = &w[off..off + rows * cols];
        off += rows * cols;
        if let Some(b) = babs.as_mut() {
            let bs = &w[off..off + rows];
            off += rows;
            // cur is A^(1)···A^(s): exactly the prefix multiplying B^(s+1).
            matvec_acc(&cur, h0, cur_cols, bs, b);
        }
        cur = matmul(&cur, h0, cur_cols, a, cols);
        cur_cols = cols;
    }
    debug_assert_eq!(off, w.len());
    (cur, babs)
}

/// Embeds a truth network into an architecture's flattened parameter space.
/// Widths must match exactly; a bias-free truth inside a bias-enabled
/// architecture gets zero bias vectors.
fn embed_params(arch: &LinearArchitecture, truth: &LinearNetwork) -> Result<Vec<f64>, KError> {
    let t = truth.architecture();
    if t.widths() != arch.widths() {
        return Err(KError::WidthsMismatch {
            got: t.widths().to_vec(),
            want: arch.widths().to_vec(),
        });
    }
    if t.bias() && !arch.bias() {
        return Err(KError::UnexpectedBias);
    }
    if t.bias() == arch.bias() {
        return Ok(truth.flatten());
    }
    let mut out = Vec::with_capacity(arch.param_count() as usize);
    for (s, wmat) in truth.weights().iter().enumerate() {
        for i in 0..wmat.nrows() {
            for j in 0..wmat.ncols() {
                out.push(wmat[(i, j)]);
            }
        }
        out.extend(std::iter::repeat_n(0.0, arch.widths()[s] as usize));
    }
    Ok(out)
}

/// Sum-of-squares error for a linear model: the squared Frobenius distance
/// between the end-to-end weight products of w and the truth, plus (when the
/// architecture has bias) the squared distance of the absorbed output biases.
pub fn coeff_sos_linear(
    arch: &LinearArchitecture,
    truth: &LinearNetwork,
) -> Result<KEvaluator, KError> {
    let center = embed_params(arch, truth)?;
    let widths = arch.widths().to_vec();
    let bias = arch.bias();
    let (target_prod, target_bias) = affine_of_params(&center, &widths, bias);

    let f = move |w: &[f64]| -> f64 {
        let (prod, babs) = affine_of_params(w, &widths, bias);
        let mut acc = 0.0;
        for (p, t) in prod.iter().zip(&target_prod) {
            let d = p - t;
            acc += d * d;
        }
        if let (Some(b), Some(tb)) = (&babs, &target_bias) {
            for (x, t) in b.iter().zip(tb) {
                let d = x - t;
                acc += d * d;
            }
        }
        acc
    };
    Ok(KEvaluator::new(center, f))
}

/// Quasi-uniform points in a box: an additive low-discrepancy lattice with a
/// seeded random rotation, flattened point-major. Deterministic per seed.
fn quasi_uniform_points(domain: &InputDomain, count: usize, seed: u64) -> Vec<f64> {
    let d = domain.dim();
    // Generalized golden ratio: the root > 1 of x^(d+1) = x + 1, via the
    // contraction x ← (1 + x)^(1/(d+1)).
    let mut g = 1.5f64;
    for _ in 0..128 {
        g = (1.0 + g).powf(1.0 / (d as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=d as i32).map(|i| g.powi(-i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shifts: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();

    let lower = domain.lower();
    let upper = domain.upper();
    let mut points = Vec::with_capacity(count * d);
    for q in 0..count {
        for i in 0..d {
            let t = (shifts[i] + (q + 1) as f64 * alphas[i]).fract();
            points.push(lower[i] + t * (upper[i] - lower[i]));
        }
    }
    points
}

/// Forward pass of a three-layer ReLU network on flat row-major parameters;
/// used both to precompute truth outputs and inside the evaluator so that the
/// two agree bit-for-bit (K is exactly zero at the center).
#[allow(clippy::too_many_arguments)]
fn relu_forward(
    a1: &[f64],
    a2: &[f64],
    b2: &[f64],
    h1: usize,
    h2: usize,
    h3: usize,
    x: &[f64],
    hidden: &mut [f64],
    out: &mut [f64],
) {
    for j in 0..h2 {
        let mut pre = b2[j];
        let row = &a2[j * h3..(j + 1) * h3];
        for k in 0..h3 {
            pre += row[k] * x[k];
        }
        hidden[j] = pre.max(0.0);
    }
    for i in 0..h1 {
        let row = &a1[i * h2..(i + 1) * h2];
        let mut y = 0.0;
        for j in 0..h2 {
            y += row[j] * hidden[j];
        }
        out[i] = y;
    }
}

fn split_relu_params(w: &[f64], h1: usize, h2: usize, h3: usize) -> (&[f64], &[f64], &[f64]) {
    (
        &w[0..h1 * h2],
        &w[h1 * h2..h1 * h2 + h2 * h3],
        &w[h1 * h2 + h2 * h3..],
    )
}

/// Mean squared output difference of a three-layer ReLU model against a truth
/// network over a fixed seeded quadrature on the box.
pub fn k_relu(
    truth: &ReluNetwork,
    domain: &InputDomain,
    quadrature: usize,
    seed: u64,
) -> Result<KEvaluator, KError> {
    if domain.dim() != truth.input_dim() {
        return Err(KError::DomainMismatch {
            got: domain.dim(),
            want: truth.input_dim(),
        });
    }
    if quadrature < MIN_QUADRATURE {
        return Err(KError::TooFewPoints(quadrature));
    }
    let (h1, h2, h3) = (truth.output_dim(), truth.hidden_dim(), truth.input_dim());
    let points = quasi_uniform_points(domain, quadrature, seed);
    let center = truth.flatten();

    let mut truth_out = vec![0.0; quadrature * h1];
    {
        let (a1, a2, b2) = split_relu_params(&center, h1, h2, h3);
        let mut hidden = vec![0.0; h2];
        for q in 0..quadrature {
            relu_forward(
                a1,
                a2,
                b2,
                h1,
                h2,
                h3,
                &points[q * h3..(q + 1) * h3],
                &mut hidden,
                &mut truth_out[q * h1..(q + 1) * h1],
            );
        }
    }

    let f = move |w: &[f64]| -> f64 {
        let (a1, a2, b2) = split_relu_params(w, h1, h2, h3);
        let mut hidden = vec![0.0; h2];
        let mut out = vec![0.0; h1];
        let mut acc = 0.0;
        for q in 0..quadrature {
            relu_forward(
                a1,
                a2,
                b2,
                h1,
                h2,
                h3,
                &points[q * h3..(q + 1) * h3],
                &mut hidden,
                &mut out,
            );
            let target = &truth_out[q * h1..(q + 1) * h1];
            for i in 0..h1 {
                let d = out[i] - target[i];
                acc += d * d;
            }
        }
        acc / quadrature as f64
    };
    Ok(KEvaluator::new(center, f))
}

/// Mean squared softmax-output difference of a linear-pre-activation model
/// against a truth network over a fixed seeded quadrature on the box.
pub fn k_softmax(
    arch: &LinearArchitecture,
    truth: &LinearNetwork,
    domain: &InputDomain,
    quadrature: usize,
    seed: u64,
) -> Result<KEvaluator, KError> {
    let center = embed_params(arch, truth)?;
    if domain.dim() != arch.input_dim() as usize {
        return Err(KError::DomainMismatch {
            got: domain.dim(),
            want: arch.input_dim() as usize,
        });
    }
    if quadrature < MIN_QUADRATURE {
        return Err(KError::TooFewPoints(quadrature));
    }

    let widths: Vec<usize> = arch.widths().iter().map(|&h| h as usize).collect();
    let bias = arch.bias();
    let depth = widths.len() - 1;
    let d_in = *widths.last().expect("validated");
    let h1 = widths[0];
    let max_width = *widths.iter().max().expect("non-empty");

    // Per-layer (weight offset, bias offset, rows, cols) in the flat layout.
    let mut layers = Vec::with_capacity(depth);
    let mut off = 0;
    for s in 0..depth {
        let (rows, cols) = (widths[s], widths[s + 1]);
        let a_off = off;
        off += rows * cols;
        let b_off = if bias {
            let b = off;
            off += rows;
            Some(b)
        } else {
            None
        };
        layers.push((a_off, b_off, rows, cols));
    }

    let points = quasi_uniform_points(domain, quadrature, seed);
    let buf_len = max_width.max(d_in);
    let mut truth_sm = vec![0.0; quadrature * h1];
    {
        let mut src = vec![0.0; buf_len];
        let mut dst = vec![0.0; buf_len];
        for q in 0..quadrature {
            softmax_forward(
                &center,
                &layers,
                &points[q * d_in..(q + 1) * d_in],
                h1,
                &mut src,
                &mut dst,
            );
            truth_sm[q * h1..(q + 1) * h1].copy_from_slice(&dst[..h1]);
        }
    }

    let f = move |w: &[f64]| -> f64 {
        let mut src = vec![0.0; buf_len];
        let mut dst = vec![0.0; buf_len];
        let mut acc = 0.0;
        for q in 0..quadrature {
            softmax_forward(
                w,
                &layers,
                &points[q * d_in..(q + 1) * d_in],
                h1,
                &mut src,
                &mut dst,
            );
            let target = &truth_sm[q * h1..(q + 1) * h1];
            for i in 0..h1 {
                let d = dst[i] - target[i];
                acc += d * d;
            }
        }
        acc / quadrature as f64
    };
    Ok(KEvaluator::new(center, f))
}

/// Forward pass of a softmax model on flat parameters: applies the layers
/// innermost-first (v ← A^(s) v + B^(s)), then leaves the softmax
/// probabilities in `dst[..h1]`. Shared between truth precomputation and the
/// evaluator so the two agree bit-for-bit.
fn softmax_forward(
    w: &[f64],
    layers: &[(usize, Option<usize>, usize, usize)],
    x: &[f64],
    h1: usize,
    src: &mut Vec<f64>,
    dst: &mut Vec<f64>,
) {
    src[..x.len()].copy_from_slice(x);
    for &(a_off, b_off, rows, cols) in layers.iter().rev() {
        for i in 0..rows {
            let row = &w[a_off + i * cols..a_off + (i + 1) * cols];
            let mut s = match b_off {
                Some(b) => w[b + i],
                None => 0.0,
            };
            for k in 0..cols {
                s += row[k] * src[k];
            }
            dst[i] = s;
        }
        std::mem::swap(src, dst);
    }
    // Softmax of the pre-activations in src[..h1], written into dst[..h1].
    let mut max = f64::NEG_INFINITY;
    for &v in &src[..h1] {
        max = max.max(v);
    }
    let mut total = 0.0;
    for i in 0..h1 {
        dst[i] = (src[i] - max).exp();
        total += dst[i];
    }
    for v in &mut dst[..h1] {
        *v /= total;
    }
}
