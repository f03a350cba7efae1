//! Compressed-sparse-row matrices.
//!
//! Assembly produces matrices with a precomputed sparsity pattern that is
//! filled in place (element row blocks are written by exactly one owner, so
//! parallel fills are race-free and bitwise deterministic). The eigensolver
//! hands matrices to faer in compressed-column form; since CSR of `A` is the
//! CSC of `A^T`, conversion is a transpose.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from a row-major pattern; all values start at zero.
    ///
    /// Column indices within a row must be strictly increasing.
    pub fn from_pattern(n_rows: usize, n_cols: usize, rows: &[Vec<usize>]) -> Self {
        assert_eq!(rows.len(), n_rows);
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for cols in rows {
            debug_assert!(cols.windows(2).all(|w| w[0] < w[1]));
            debug_assert!(cols.iter().all(|&c| c < n_cols));
            col_idx.extend_from_slice(cols);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Builds a matrix from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Self {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for &(r, c, v) in triplets {
            assert!(r < n_rows && c < n_cols);
            per_row[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for row in &mut per_row {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for &(c, v) in row.iter() {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::from_pattern(n, n, &(0..n).map(|i| vec![i]).collect::<Vec<_>>());
        m.values.iter_mut().for_each(|v| *v = 1.0);
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// Adds `v` to entry (r, c). The entry must exist in the pattern.
    pub fn add_at(&mut self, r: usize, c: usize, v: f64) {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        match self.col_idx[lo..hi].binary_search(&c) {
            Ok(k) => self.values[lo + k] += v,
            Err(_) => panic!("entry ({r}, {c}) not present in sparsity pattern"),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        match self.col_idx[lo..hi].binary_search(&c) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `y = A x` for real vectors.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for r in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    /// `y = A x` for complex vectors (the matrix itself is real).
    pub fn mul_vec_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for r in 0..self.n_rows {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += x[self.col_idx[k]] * self.values[k];
            }
            y[r] = acc;
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_cols];
        for &c in &self.col_idx {
            counts[c] += 1;
        }
        let mut row_ptr = Vec::with_capacity(self.n_cols + 1);
        row_ptr.push(0);
        for c in 0..self.n_cols {
            row_ptr.push(row_ptr[c] + counts[c]);
        }
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut next = row_ptr[..self.n_cols].to_vec();
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let dst = next[c];
                col_idx[dst] = r;
                values[dst] = self.values[k];
                next[c] += 1;
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Whether the sparsity pattern equals that of the transpose.
    pub fn is_structurally_symmetric(&self) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        let t = self.transpose();
        self.row_ptr == t.row_ptr && self.col_idx == t.col_idx
    }

    /// `self - scale * other`, requiring `other`'s pattern to be contained in
    /// `self`'s.
    pub fn sub_scaled(&self, other: &CsrMatrix, scale: f64) -> CsrMatrix {
        assert_eq!(self.n_rows, other.n_rows);
        assert_eq!(self.n_cols, other.n_cols);
        let mut out = self.clone();
        if scale == 0.0 {
            return out;
        }
        for r in 0..other.n_rows {
            for k in other.row_ptr[r]..other.row_ptr[r + 1] {
                out.add_at(r, other.col_idx[k], -scale * other.values[k]);
            }
        }
        out
    }

    /// Converts to a faer compressed-column matrix.
    pub fn to_faer(&self) -> faer::sparse::SparseColMat<usize, f64> {
        // CSR arrays of A^T are CSC arrays of A, so transpose first.
        let t = self.transpose();
        let sym = faer::sparse::SymbolicSparseColMat::new_checked(
            self.n_rows,
            self.n_cols,
            t.row_ptr,
            None,
            t.col_idx,
        );
        faer::sparse::SparseColMat::new(sym, t.values)
    }

    /// Writes the matrix in MatrixMarket coordinate format.
    pub fn write_matrix_market<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                writeln!(w, "{} {} {:.17e}", r + 1, self.col_idx[k] + 1, self.values[k])?;
            }
        }
        Ok(())
    }

    /// Largest relative deviation from symmetry, `max|A - A^T| / max|A|`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let denom = self.max_abs().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - t.get(r, c)).abs());
            }
            let (tcols, tvals) = t.row(r);
            for (&c, &v) in tcols.iter().zip(tvals) {
                worst = worst.max((v - self.get(r, c)).abs());
            }
        }
        worst / denom
    }
}

/// Structural sanity check used by tests: every stored column index in bounds
/// and rows sorted.
pub fn validate(m: &CsrMatrix) -> Result<()> {
    for r in 0..m.n_rows() {
        let (cols, _) = m.row(r);
        if !cols.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(format!("row {r} not sorted")));
        }
        if cols.iter().any(|&c| c >= m.n_cols()) {
            return Err(Error::InvalidParameter(format!("row {r} out of bounds")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn transpose_roundtrip() {
        let m = CsrMatrix::from_triplets(
            3,
            2,
            &[(0, 1, 2.0), (1, 0, -1.0), (2, 1, 5.0), (2, 0, 4.0)],
        );
        let tt = m.transpose().transpose();
        assert_eq!(m, tt);
    }

    #[test]
    fn matvec_matches_dense() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 3.0), (1, 1, -2.0)]);
        let x = [1.0, 2.0, 3.0];
        let mut y = [0.0; 2];
        m.mul_vec(&x, &mut y);
        assert_eq!(y, [10.0, -4.0]);
    }

    #[test]
    fn faer_conversion_preserves_entries() {
        let m = CsrMatrix::from_triplets(3, 3, &[(0, 1, 2.0), (1, 0, -1.0), (2, 2, 5.0)]);
        let f = m.to_faer();
        let d = f.to_dense();
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(d[(r, c)], m.get(r, c));
            }
        }
    }
}
