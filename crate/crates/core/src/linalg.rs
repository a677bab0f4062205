//! Thin factorization helpers on top of nalgebra.
//!
//! QR is Householder-based with the sign convention fixed so the diagonal
//! of R is nonnegative, which makes factorizations reproducible across
//! platforms and under exact input rescaling.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub(crate) fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin QR with nonnegative diagonal of R. Requires rows >= cols.
pub(crate) fn thin_qr(m: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    if m.rows() < m.cols() {
        return Err(Error::arg(format!(
            "thin QR needs rows >= cols, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let qr = to_na(m).qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for k in 0..r.nrows().min(r.ncols()) {
        if r[(k, k)] < 0.0 {
            for j in 0..r.ncols() {
                r[(k, j)] = -r[(k, j)];
            }
            for i in 0..q.nrows() {
                q[(i, k)] = -q[(i, k)];
            }
        }
    }
    Ok((from_na(&q), from_na(&r)))
}

/// Smallest and largest singular values via the Gram matrix eigenvalues.
pub(crate) fn singular_extremes(m: &DenseMatrix) -> (f64, f64) {
    let a = to_na(m);
    let gram = a.transpose() * &a;
    let eig = gram.symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &l in eig.eigenvalues.iter() {
        let l = l.max(0.0);
        lo = lo.min(l);
        hi = hi.max(l);
    }
    (lo.sqrt(), hi.sqrt())
}

/// Numerical rank via Gram eigenvalues with a LAPACK-style cutoff
/// (relative to the largest eigenvalue, scaled by dimension and epsilon).
pub(crate) fn rank(m: &DenseMatrix) -> usize {
    let a = to_na(m);
    let gram = if a.nrows() >= a.ncols() {
        a.transpose() * &a
    } else {
        &a * a.transpose()
    };
    let eig = gram.symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return 0;
    }
    let dim = m.rows().max(m.cols()) as f64;
    let cut = max * dim * f64::EPSILON * 64.0;
    eig.eigenvalues.iter().filter(|&&l| l > cut).count()
}

/// Full column rank check used by contracts that promise a re-seed hint.
pub(crate) fn has_full_column_rank(m: &DenseMatrix) -> bool {
    rank(m) == m.cols()
}

/// Solves R x = b for upper triangular R.
pub(crate) fn solve_upper(r: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = r.cols();
    if r.rows() < n || b.len() != n {
        return Err(Error::arg("bad shapes in triangular solve"));
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in (i + 1)..n {
            acc -= r.get(i, j) * x[j];
        }
        let d = r.get(i, i);
        if d == 0.0 || !d.is_finite() {
            return Err(Error::Conditioning(
                "singular triangular factor; re-seed the sketch".into(),
            ));
        }
        x[i] = acc / d;
    }
    Ok(x)
}

/// U = A R^{-1} computed row-by-row with back substitution on R^T.
pub(crate) fn right_apply_r_inverse(a: &DenseMatrix, r: &DenseMatrix) -> Result<DenseMatrix> {
    let d = a.cols();
    if r.cols() != d || r.rows() < d {
        return Err(Error::arg("R shape does not match A"));
    }
    let mut u = DenseMatrix::zeros(a.rows(), d);
    for i in 0..a.rows() {
        // Solve u R = a_row, i.e. R^T u^T = a_row^T (forward substitution).
        let arow = a.row(i);
        let urow = u.row_mut(i);
        for j in 0..d {
            let mut acc = arow[j];
            for k in 0..j {
                acc -= r.get(k, j) * urow[k];
            }
            let diag = r.get(j, j);
            if diag == 0.0 || !diag.is_finite() {
                return Err(Error::Conditioning(
                    "rank-deficient sketch factor; re-seed".into(),
                ));
            }
            urow[j] = acc / diag;
        }
    }
    Ok(u)
}

/// Weighted least squares argmin_x sum_i w_i (a_i x - b_i)^2 with w_i >= 0.
///
/// Normal equations with Cholesky, falling back to QR on the scaled rows
/// if the Gram matrix loses positive definiteness.
pub(crate) fn weighted_least_squares(
    a: &DenseMatrix,
    b: &[f64],
    w: &[f64],
) -> Result<Vec<f64>> {
    let n = a.rows();
    let d = a.cols();
    if b.len() != n || w.len() != n {
        return Err(Error::arg("weighted LS shape mismatch"));
    }
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = nalgebra::DVector::<f64>::zeros(d);
    for i in 0..n {
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        let row = a.row(i);
        for j in 0..d {
            let wij = wi * row[j];
            rhs[j] += wij * b[i];
            for k in j..d {
                gram[(j, k)] += wij * row[k];
            }
        }
    }
    for j in 0..d {
        for k in 0..j {
            gram[(j, k)] = gram[(k, j)];
        }
    }
    if let Some(chol) = gram.clone().cholesky() {
        let x = chol.solve(&rhs);
        return Ok(x.iter().cloned().collect());
    }
    // Scaled-row QR fallback.
    let mut scaled = DenseMatrix::zeros(n, d);
    let mut bs = vec![0.0; n];
    for i in 0..n {
        let sw = w[i].max(0.0).sqrt();
        for j in 0..d {
            scaled.set(i, j, a.get(i, j) * sw);
        }
        bs[i] = b[i] * sw;
    }
    let (q, r) = thin_qr(&scaled)?;
    let qn = to_na(&q);
    let bv = nalgebra::DVector::from_column_slice(&bs);
    let qtb = qn.transpose() * bv;
    solve_upper(&r, qtb.as_slice())
}
