//! Dense row-major and sparse column-compressed matrices.
//!
//! Dense storage is row-major because witnesses and regression targets are
//! consumed row-wise; sparse storage is column-compressed because sketching
//! operators are built and applied column-by-column. All values are f64.

use crate::error::{Error, Result};

/// Dense row-major matrix. Entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::arg(format!(
                "dense data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite entry in dense matrix".into()));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// y = self * x.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::arg(format!(
                "matvec length mismatch: {} cols vs {} entries",
                self.cols,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += row[j] * x[j];
            }
            y[i] = acc;
        }
        Ok(y)
    }

    /// Plain dense product, accumulating over the inner index in ascending
    /// order so results match the sparse path bit for bit.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::arg(format!(
                "matmul dimension mismatch: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let out_row = out.row_mut(i);
                for j in 0..other.cols {
                    out_row[j] += a * orow[j];
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }
}

/// Sparse column-compressed matrix; row indices strictly increase within
/// each column and explicit zeros are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from (row, col, value) triplets. Zero values are dropped;
    /// duplicate coordinates and out-of-range indices are rejected.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::arg(format!(
                    "triplet ({r}, {c}) out of range for {rows}x{cols}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Domain("non-finite entry in sparse matrix".into()));
            }
            if v != 0.0 {
                entries.push((c, r, v));
            }
        }
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::arg(format!(
                    "duplicate coordinate ({}, {})",
                    w[0].1, w[0].0
                )));
            }
        }
        let mut col_ptr = vec![0usize; cols + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for (c, r, v) in entries {
            col_ptr[c + 1] += 1;
            row_idx.push(r);
            values.push(v);
        }
        for c in 0..cols {
            col_ptr[c + 1] += col_ptr[c];
        }
        Ok(SparseMatrix {
            rows,
            cols,
            col_ptr,
            row_idx,
            values,
        })
    }

    /// Builds from per-column entry lists that are already sorted by row.
    pub fn from_columns(rows: usize, columns: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let cols = columns.len();
        let mut col_ptr = Vec::with_capacity(cols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for (c, entries) in columns.iter().enumerate() {
            let mut last: Option<usize> = None;
            for &(r, v) in entries {
                if r >= rows {
                    return Err(Error::arg(format!(
                        "row index {r} out of range in column {c}"
                    )));
                }
                if let Some(prev) = last {
                    if r <= prev {
                        return Err(Error::arg(format!(
                            "row indices not strictly increasing in column {c}"
                        )));
                    }
                }
                last = Some(r);
                if v != 0.0 {
                    row_idx.push(r);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Ok(SparseMatrix {
            rows,
            cols,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix::from_columns(n, (0..n).map(|i| vec![(i, 1.0)]).collect()).unwrap()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of column `j` as parallel (row, value) slices.
    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let lo = self.col_ptr[j];
        let hi = self.col_ptr[j + 1];
        (&self.row_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn column_nnz(&self, j: usize) -> usize {
        self.col_ptr[j + 1] - self.col_ptr[j]
    }

    /// Iterates all stored entries as (row, col, value).
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.cols).flat_map(move |j| {
            let (rows, vals) = self.column(j);
            rows.iter().zip(vals).map(move |(&r, &v)| (r, j, v))
        })
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.iter() {
            out.set(r, c, v);
        }
        out
    }

    /// y = self * x with x dense.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::arg(format!(
                "matvec length mismatch: {} cols vs {} entries",
                self.cols,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.rows];
        for j in 0..self.cols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let (rows, vals) = self.column(j);
            for (r, v) in rows.iter().zip(vals) {
                y[*r] += v * xj;
            }
        }
        Ok(y)
    }
}

/// S * A for sparse S and dense A, costing O(nnz(S) * A.cols).
///
/// Accumulation runs over the columns of S in ascending order, so the output
/// is identical regardless of how callers batch the work.
pub fn spmm_apply(s: &SparseMatrix, a: &DenseMatrix) -> Result<DenseMatrix> {
    if s.cols != a.rows() {
        return Err(Error::arg(format!(
            "spmm dimension mismatch: {}x{} times {}x{}",
            s.rows,
            s.cols,
            a.rows(),
            a.cols()
        )));
    }
    let mut out = DenseMatrix::zeros(s.rows, a.cols());
    for j in 0..s.cols {
        let (rows, vals) = s.column(j);
        let arow = a.row(j);
        for (r, v) in rows.iter().zip(vals) {
            let orow = out.row_mut(*r);
            for (o, x) in orow.iter_mut().zip(arow) {
                *o += v * x;
            }
        }
    }
    Ok(out)
}

/// S * A for sparse S and sparse A, densified output.
pub fn spmm_sparse(s: &SparseMatrix, a: &SparseMatrix) -> Result<DenseMatrix> {
    if s.cols != a.rows() {
        return Err(Error::arg(format!(
            "spmm dimension mismatch: {}x{} times {}x{}",
            s.rows,
            s.cols,
            a.rows(),
            a.cols()
        )));
    }
    let mut out = DenseMatrix::zeros(s.rows, a.cols());
    for c in 0..a.cols() {
        let (a_rows, a_vals) = a.column(c);
        for (&j, &av) in a_rows.iter().zip(a_vals) {
            let (s_rows, s_vals) = s.column(j);
            for (&r, &sv) in s_rows.iter().zip(s_vals) {
                *out.row_mut(r).get_mut(c).unwrap() += sv * av;
            }
        }
    }
    Ok(out)
}

/// D * S for dense D and sparse S, densified output.
pub fn dense_times_sparse(d: &DenseMatrix, s: &SparseMatrix) -> Result<DenseMatrix> {
    if d.cols() != s.rows() {
        return Err(Error::arg(format!(
            "product dimension mismatch: {}x{} times {}x{}",
            d.rows(),
            d.cols(),
            s.rows(),
            s.cols()
        )));
    }
    let mut out = DenseMatrix::zeros(d.rows(), s.cols());
    for c in 0..s.cols() {
        let (rows, vals) = s.column(c);
        for (&j, &v) in rows.iter().zip(vals) {
            for i in 0..d.rows() {
                let add = d.get(i, j) * v;
                let cur = out.get(i, c);
                out.set(i, c, cur + add);
            }
        }
    }
    Ok(out)
}

/// Borrowed view over either matrix kind; lets harness code take both.
#[derive(Debug, Clone, Copy)]
pub enum MatrixRef<'a> {
    Dense(&'a DenseMatrix),
    Sparse(&'a SparseMatrix),
}

impl<'a> MatrixRef<'a> {
    pub fn rows(&self) -> usize {
        match self {
            MatrixRef::Dense(m) => m.rows(),
            MatrixRef::Sparse(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            MatrixRef::Dense(m) => m.cols(),
            MatrixRef::Sparse(m) => m.cols(),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            MatrixRef::Dense(m) => m.matvec(x),
            MatrixRef::Sparse(m) => m.matvec(x),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            MatrixRef::Dense(m) => (*m).clone(),
            MatrixRef::Sparse(m) => m.to_dense(),
        }
    }
}

impl<'a> From<&'a DenseMatrix> for MatrixRef<'a> {
    fn from(m: &'a DenseMatrix) -> Self {
        MatrixRef::Dense(m)
    }
}

impl<'a> From<&'a SparseMatrix> for MatrixRef<'a> {
    fn from(m: &'a SparseMatrix) -> Self {
        MatrixRef::Sparse(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn random_sparse(stream: &mut RngStream, rows: usize, cols: usize, fill: f64) -> SparseMatrix {
        let mut triplets = Vec::new();
        for c in 0..cols {
            for r in 0..rows {
                if stream.bernoulli(fill) {
                    triplets.push((r, c, stream.standard_normal()));
                }
            }
        }
        SparseMatrix::from_triplets(rows, cols, triplets).unwrap()
    }

    fn random_dense(stream: &mut RngStream, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| stream.standard_normal())
    }

    #[test]
    fn identity_apply_is_identity() {
        let mut s = RngStream::new(1, "spmm-id");
        let a = random_dense(&mut s, 3, 2);
        let id = SparseMatrix::identity(3);
        let out = spmm_apply(&id, &a).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn zero_sparse_gives_zero() {
        let z = SparseMatrix::from_triplets(4, 5, std::iter::empty()).unwrap();
        let a = DenseMatrix::from_fn(5, 3, |i, j| (i + j) as f64);
        let out = spmm_apply(&z, &a).unwrap();
        assert_eq!(out, DenseMatrix::zeros(4, 3));
    }

    #[test]
    fn matches_dense_materialized_product() {
        let mut s = RngStream::new(2, "spmm-oracle");
        let sp = random_sparse(&mut s, 50, 100, 0.05);
        let a = random_dense(&mut s, 100, 7);
        let fast = spmm_apply(&sp, &a).unwrap();
        let oracle = sp.to_dense().matmul(&a).unwrap();
        for (x, y) in fast.data().iter().zip(oracle.data()) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let z = SparseMatrix::from_triplets(4, 5, std::iter::empty()).unwrap();
        let a = DenseMatrix::zeros(4, 3);
        assert!(spmm_apply(&z, &a).is_err());
    }

    #[test]
    fn duplicate_triplets_rejected() {
        let r = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0)]);
        assert!(r.is_err());
    }

    #[test]
    fn zero_values_dropped() {
        let m = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 0.0), (1, 1, 3.0)]).unwrap();
        assert_eq!(m.nnz(), 1);
    }

    #[test]
    fn dense_rejects_bad_shape_and_nan() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn sparse_sparse_product_matches_dense() {
        let mut s = RngStream::new(3, "spmm-ss");
        let a = random_sparse(&mut s, 30, 40, 0.1);
        let b = random_sparse(&mut s, 40, 6, 0.2);
        let fast = spmm_sparse(&a, &b).unwrap();
        let oracle = a.to_dense().matmul(&b.to_dense()).unwrap();
        for (x, y) in fast.data().iter().zip(oracle.data()) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    proptest! {
        // Random sparse matrices up to 200x200 against the dense oracle.
        #[test]
        fn spmm_equals_dense_product(seed in 0u64..40, rows in 1usize..200, cols in 1usize..200) {
            let mut s = RngStream::new(seed, "spmm-prop");
            let sp = random_sparse(&mut s, rows, cols, 0.03);
            let a = random_dense(&mut s, cols, 3);
            let fast = spmm_apply(&sp, &a).unwrap();
            let oracle = sp.to_dense().matmul(&a).unwrap();
            for (x, y) in fast.data().iter().zip(oracle.data()) {
                prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }
}
