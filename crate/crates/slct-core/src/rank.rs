//! Matrix rank with an exact integer fast path.
//!
//! Ranks feed directly into exact threshold formulas, so a wrong rank silently
//! poisons an "exact" answer. When every entry is a smallish integer (the
//! common case for hand-built truth networks) the rank is computed exactly by
//! fraction-free elimination in 128-bit integers; anything else falls back to
//! an SVD with a relative tolerance.

use nalgebra::DMatrix;

/// Entries larger than this skip the exact integer path.
const INTEGER_LIMIT: f64 = (1u64 << 20) as f64;
/// Singular values below `tol * σ_max` count as zero in the SVD fallback.
const SVD_RELATIVE_TOL: f64 = 1e-9;

/// Dense integer matrix used internally by the exact path.
struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i128>, // row-major
}

impl IntMatrix {
    fn at(&self, i: usize, j: usize) -> i128 {
        self.data[i * self.cols + j]
    }

    fn at_mut(&mut self, i: usize, j: usize) -> &mut i128 {
        &mut self.data[i * self.cols + j]
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for j in 0..self.cols {
                self.data.swap(a * self.cols + j, b * self.cols + j);
            }
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a != b {
            for i in 0..self.rows {
                self.data.swap(i * self.cols + a, i * self.cols + b);
            }
        }
    }
}

fn to_integer(m: &DMatrix<f64>) -> Option<IntMatrix> {
    let mut data = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let x = m[(i, j)];
            if x.round() != x || x.abs() > INTEGER_LIMIT {
                return None;
            }
            data.push(x as i128);
        }
    }
    Some(IntMatrix {
        rows: m.nrows(),
        cols: m.ncols(),
        data,
    })
}

fn integer_product(a: &IntMatrix, b: &IntMatrix) -> Option<IntMatrix> {
    debug_assert_eq!(a.cols, b.rows);
    let mut data = vec![0i128; a.rows * b.cols];
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.at(i, k);
            if aik == 0 {
                continue;
            }
            for j in 0..b.cols {
                let term = aik.checked_mul(b.at(k, j))?;
                data[i * b.cols + j] = data[i * b.cols + j].checked_add(term)?;
            }
        }
    }
    Some(IntMatrix {
        rows: a.rows,
        cols: b.cols,
        data,
    })
}

/// Fraction-free (Bareiss) elimination with full pivoting. Returns `None` on
/// intermediate overflow, which sends the caller to the SVD fallback.
fn bareiss_rank(mut m: IntMatrix) -> Option<usize> {
    let steps = m.rows.min(m.cols);
    let mut prev_pivot: i128 = 1;
    for k in 0..steps {
        // Any non-zero entry of the trailing submatrix can serve as pivot.
        let mut pivot = None;
        'search: for i in k..m.rows {
            for j in k..m.cols {
                if m.at(i, j) != 0 {
                    pivot = Some((i, j));
                    break 'search;
                }
            }
        }
        let Some((pi, pj)) = pivot else {
            return Some(k);
        };
        m.swap_rows(k, pi);
        m.swap_cols(k, pj);
        let pivot = m.at(k, k);
        for i in (k + 1)..m.rows {
            for j in (k + 1)..m.cols {
                let lhs = m.at(i, j).checked_mul(pivot)?;
                let rhs = m.at(i, k).checked_mul(m.at(k, j))?;
                // The division is exact: this is the defining property of the
                // one-step Bareiss update.
                *m.at_mut(i, j) = lhs.checked_sub(rhs)? / prev_pivot;
            }
            *m.at_mut(i, k) = 0;
        }
        prev_pivot = pivot;
    }
    Some(steps)
}

fn svd_rank(m: &DMatrix<f64>) -> usize {
    let singular = m.clone().singular_values();
    let max = singular.iter().cloned().fold(0.0f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    singular
        .iter()
        .filter(|&&s| s > SVD_RELATIVE_TOL * max)
        .count()
}

/// Rank of a single matrix: exact when the entries are integers of magnitude
/// at most 2^20, otherwise SVD with relative tolerance 1e-9.
pub fn matrix_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    if let Some(exact) = to_integer(m).and_then(bareiss_rank) {
        return exact;
    }
    svd_rank(m)
}

/// Rank of a product `factors[0] * factors[1] * …`, forming the product in
/// exact integer arithmetic when possible so that catastrophic cancellation in
/// the product cannot flip the rank.
pub fn product_rank(factors: &[DMatrix<f64>]) -> usize {
    assert!(
        !factors.is_empty(),
        "product of no matrices has no defined shape"
    );
    if factors.iter().any(|f| f.nrows() == 0 || f.ncols() == 0) {
        return 0;
    }
    let exact = || -> Option<usize> {
        let mut acc = to_integer(&factors[0])?;
        for f in &factors[1..] {
            acc = integer_product(&acc, &to_integer(f)?)?;
        }
        bareiss_rank(acc)
    };
    if let Some(rank) = exact() {
        return rank;
    }
    let mut acc = factors[0].clone();
    for f in &factors[1..] {
        acc *= f;
    }
    svd_rank(&acc)
}
