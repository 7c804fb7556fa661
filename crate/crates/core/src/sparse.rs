//! Row-compressed sparse matrices and sparse vectors over [`Scalar`].

use crate::error::{Error, Result};
use crate::scalar::{Field, Scalar};

/// Row-compressed sparse matrix. Column indices are sorted and unique per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<S> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<S>,
}

impl<S: Scalar> SparseMatrix<S> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![S::ONE; n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed in
    /// the order they appear, so the result only depends on the triplet sequence.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, S)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of range");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        // bucket by row, keeping insertion order
        let mut next = counts.clone();
        let mut order = vec![0usize; triplets.len()];
        for (k, &(r, _, _)) in triplets.iter().enumerate() {
            order[next[r]] = k;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut row_buf: Vec<(usize, usize)> = Vec::new();
        for r in 0..nrows {
            row_buf.clear();
            for &k in &order[counts[r]..counts[r + 1]] {
                row_buf.push((triplets[k].1, k));
            }
            // stable: equal columns keep insertion order
            row_buf.sort_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < row_buf.len() {
                let c = row_buf[i].0;
                let mut acc = S::ZERO;
                while i < row_buf.len() && row_buf[i].0 == c {
                    acc += triplets[row_buf[i].1].2;
                    i += 1;
                }
                col_idx.push(c);
                values.push(acc);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Builds a matrix from per-row sorted entries.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, S)>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows {
            let mut last = None;
            for (c, v) in row {
                assert!(c < ncols);
                if let Some(l) = last {
                    assert!(c > l, "row entries must be sorted and unique");
                }
                last = Some(c);
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn field(&self) -> Field {
        S::FIELD
    }

    pub fn row(&self, i: usize) -> (&[usize], &[S]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => S::ZERO,
        }
    }

    /// Iterates over stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&c, &v)| (i, c, v))
        })
    }

    pub fn mul_vec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.ncols, "mul_vec: length mismatch");
        (0..self.nrows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        self.transpose_map(|v| v)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        self.transpose_map(|v| v.conjugate())
    }

    fn transpose_map(&self, f: impl Fn(S) -> S) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![S::ZERO; self.nnz()];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                col_idx[next[c]] = i;
                values[next[c]] = f(v);
                next[c] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr: counts,
            col_idx,
            values,
        }
    }

    /// Sparse product `self * rhs`.
    pub fn matmul(&self, rhs: &SparseMatrix<S>) -> Result<Self> {
        if self.ncols != rhs.nrows {
            return Err(Error::DimensionMismatch(format!(
                "matmul {}x{} by {}x{}",
                self.nrows, self.ncols, rhs.nrows, rhs.ncols
            )));
        }
        let mut acc = vec![S::ZERO; rhs.ncols];
        let mut mark = vec![usize::MAX; rhs.ncols];
        let mut touched = Vec::new();
        let mut rows = Vec::with_capacity(self.nrows);
        for i in 0..self.nrows {
            touched.clear();
            let (cols, vals) = self.row(i);
            for (&k, &a) in cols.iter().zip(vals) {
                let (rc, rv) = rhs.row(k);
                for (&j, &b) in rc.iter().zip(rv) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = S::ZERO;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            rows.push(touched.iter().map(|&j| (j, acc[j])).collect());
        }
        Ok(Self::from_rows(rhs.ncols, rows))
    }

    /// `alpha * self + beta * other`, both of equal shape.
    pub fn linear_combination(&self, alpha: S, other: &SparseMatrix<S>, beta: S) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch("linear_combination".into()));
        }
        let mut rows = Vec::with_capacity(self.nrows);
        for i in 0..self.nrows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            let mut row = Vec::with_capacity(ca.len().max(cb.len()));
            while p < ca.len() || q < cb.len() {
                if q == cb.len() || (p < ca.len() && ca[p] < cb[q]) {
                    row.push((ca[p], alpha * va[p]));
                    p += 1;
                } else if p == ca.len() || cb[q] < ca[p] {
                    row.push((cb[q], beta * vb[q]));
                    q += 1;
                } else {
                    row.push((ca[p], alpha * va[p] + beta * vb[q]));
                    p += 1;
                    q += 1;
                }
            }
            rows.push(row);
        }
        Ok(Self::from_rows(self.ncols, rows))
    }

    pub fn scale(&self, alpha: S) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v = *v * alpha;
        }
        out
    }

    /// Extracts the submatrix with the given rows and columns. `cols` must be sorted.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        debug_assert!(cols.windows(2).all(|w| w[0] < w[1]));
        let out_rows = rows
            .iter()
            .map(|&r| {
                let (rc, rv) = self.row(r);
                rc.iter()
                    .zip(rv)
                    .filter_map(|(&c, &v)| cols.binary_search(&c).ok().map(|j| (j, v)))
                    .collect()
            })
            .collect();
        Self::from_rows(cols.len(), out_rows)
    }

    pub fn to_dense(&self) -> Vec<Vec<S>> {
        let mut d = vec![vec![S::ZERO; self.ncols]; self.nrows];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }

    /// Largest entrywise modulus of `self - self^T` (no conjugation).
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let diff = self
            .linear_combination(S::ONE, &t, -S::ONE)
            .expect("square matrix");
        diff.values.iter().fold(0.0, |m, v| m.max(v.modulus()))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.modulus()))
    }

    pub fn diagonal(&self) -> Vec<S> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// Converts to faer's column-compressed storage.
    pub fn to_faer(&self) -> faer::sparse::SparseColMat<usize, S> {
        let trip: Vec<_> = self
            .triplets()
            .map(|(i, j, v)| faer::sparse::Triplet::new(i, j, v))
            .collect();
        faer::sparse::SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trip)
            .expect("valid sparse structure")
    }

    /// Writes the stored entries as `row col value` lines (`row col re im` for complex).
    pub fn write_coordinate(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "% {} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (i, j, v) in self.triplets() {
            match S::FIELD {
                Field::Real => writeln!(w, "{} {} {:.17e}", i, j, v.re_part())?,
                Field::Complex => {
                    writeln!(w, "{} {} {:.17e} {:.17e}", i, j, v.re_part(), v.im_part())?
                }
            }
        }
        Ok(())
    }
}

impl SparseMatrix<f64> {
    /// Applies a real matrix to a vector of any scalar type.
    pub fn apply<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.ncols, "apply: length mismatch");
        (0..self.nrows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&c, &v)| x[c].scaled(v)).sum()
            })
            .collect()
    }

    /// The same matrix over another scalar field.
    pub fn cast<S: Scalar>(&self) -> SparseMatrix<S> {
        SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| S::of_real(v)).collect(),
        }
    }
}

/// Sparse vector with sorted unique indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVec<S> {
    pub len: usize,
    pub indices: Vec<usize>,
    pub values: Vec<S>,
}

impl<S: Scalar> SparseVec<S> {
    pub fn new(len: usize) -> Self {
        Self {
            len,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(x: &[S]) -> Self {
        let mut out = Self::new(x.len());
        for (i, &v) in x.iter().enumerate() {
            if v != S::ZERO {
                out.indices.push(i);
                out.values.push(v);
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<S> {
        let mut d = vec![S::ZERO; self.len];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            d[i] = v;
        }
        d
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Sum of sparse vectors, accumulated in the given order.
    pub fn sum<'a>(len: usize, parts: impl IntoIterator<Item = &'a SparseVec<S>>) -> Self {
        let mut entries: Vec<(usize, S)> = Vec::new();
        for p in parts {
            assert_eq!(p.len, len);
            entries.extend(p.indices.iter().copied().zip(p.values.iter().copied()));
        }
        entries.sort_by_key(|&(i, _)| i);
        let mut out = Self::new(len);
        for (i, v) in entries {
            if out.indices.last() == Some(&i) {
                *out.values.last_mut().unwrap() += v;
            } else {
                out.indices.push(i);
                out.values.push(v);
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.modulus()))
    }
}
