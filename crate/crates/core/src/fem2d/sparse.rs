//! Compressed sparse row operators.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

/// Row pointer and column index arrays of a CSR matrix. Shared between
/// operators assembled on the same mesh so that linear combinations reduce
/// to value-array arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl Pattern {
    /// Position of `(i, j)` in the value array.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }
}

/// Real sparse matrix in CSR form.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseOperator {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// every listed position is kept as a structural entry.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)], symmetric: bool) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let pattern = Pattern { nrows, ncols, row_ptr, col_idx };
        Self { pattern: Arc::new(pattern), values, symmetric }
    }

    pub fn from_pattern(pattern: Arc<Pattern>, values: Vec<f64>, symmetric: bool) -> Self {
        assert_eq!(pattern.nnz(), values.len());
        Self { pattern, values, symmetric }
    }

    pub fn zeros_like(&self) -> Self {
        Self { pattern: self.pattern.clone(), values: vec![0.0; self.values.len()], symmetric: self.symmetric }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t, true)
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn set_symmetric(&mut self, flag: bool) {
        self.symmetric = flag;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Iterates `(col, value)` over row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1];
        self.pattern.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols());
        assert_eq!(y.len(), self.nrows());
        let p = &self.pattern;
        for i in 0..p.nrows {
            let mut s = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                s += self.values[k] * x[p.col_idx[k]];
            }
            y[i] = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows()];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `self * x` for every column of a dense matrix.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows(), x.ncols());
        for c in 0..x.ncols() {
            let col = self.mul_vec(x.column(c).as_slice());
            out.column_mut(c).copy_from_slice(&col);
        }
        out
    }

    /// `x^T A y`
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        let p = &self.pattern;
        let mut s = 0.0;
        for i in 0..p.nrows {
            let mut r = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                r += self.values[k] * y[p.col_idx[k]];
            }
            s += x[i] * r;
        }
        s
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            pattern: self.pattern.clone(),
            values: self.values.iter().map(|v| alpha * v).collect(),
            symmetric: self.symmetric,
        }
    }

    /// `sum_k alpha_k A_k`. All operators must have the same shape.
    pub fn linear_combination(terms: &[(f64, &SparseOperator)]) -> Self {
        assert!(!terms.is_empty());
        let first = terms[0].1;
        let symmetric = terms.iter().all(|(_, a)| a.symmetric);
        let same = terms
            .iter()
            .all(|(_, a)| Arc::ptr_eq(&a.pattern, &first.pattern) || *a.pattern == *first.pattern);
        if same {
            let mut values = vec![0.0; first.nnz()];
            for (alpha, a) in terms {
                for (v, w) in values.iter_mut().zip(&a.values) {
                    *v += alpha * w;
                }
            }
            return Self { pattern: first.pattern.clone(), values, symmetric };
        }
        let mut trip = Vec::new();
        for (alpha, a) in terms {
            assert_eq!((a.nrows(), a.ncols()), (first.nrows(), first.ncols()));
            for i in 0..a.nrows() {
                for (j, v) in a.row(i) {
                    trip.push((i, j, alpha * v));
                }
            }
        }
        Self::from_triplets(first.nrows(), first.ncols(), &trip, symmetric)
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows() {
            for (j, v) in self.row(i) {
                trip.push((j, i, v));
            }
        }
        Self::from_triplets(self.ncols(), self.nrows(), &trip, self.symmetric)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `max |A - A^T|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.nrows() {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Checks the symmetric flag against the actual entries.
    pub fn symmetry_holds(&self) -> bool {
        !self.symmetric || self.asymmetry() <= 1e-12 * self.max_abs()
    }

    /// Submatrix keeping rows `rows` and columns `cols` (given as original
    /// indices, in the order of the new numbering).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols()];
        for (new, old) in cols.iter().enumerate() {
            col_map[*old] = new;
        }
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &r in rows {
            let mut entries: Vec<(usize, f64)> = self
                .row(r)
                .filter_map(|(j, v)| (col_map[j] != usize::MAX).then(|| (col_map[j], v)))
                .collect();
            entries.sort_by_key(|e| e.0);
            for (j, v) in entries {
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        let pattern = Pattern { nrows: rows.len(), ncols: cols.len(), row_ptr, col_idx };
        let symmetric = self.symmetric && rows == cols;
        Self { pattern: Arc::new(pattern), values, symmetric }
    }

    /// Largest `|i - j|` over structural entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for i in 0..self.nrows() {
            for (j, _) in self.row(i) {
                bw = bw.max(i.abs_diff(j));
            }
        }
        bw
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows(), self.ncols());
        for i in 0..self.nrows() {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }

    /// `B^T A B` for a dense `B` with orthonormal or arbitrary columns.
    pub fn project(&self, basis: &DMatrix<f64>) -> DMatrix<f64> {
        basis.transpose() * self.mul_dense(basis)
    }

    /// `A x` as an nalgebra vector.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.mul_vec(x.as_slice()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseOperator {
        SparseOperator::from_triplets(
            3,
            3,
            &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 2.0), (2, 2, 1.0)],
            true,
        )
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = sample();
        assert_eq!(a.get(2, 2), 3.0);
        assert_eq!(a.nnz(), 7);
        assert_eq!(a.mul_vec(&[1.0, 1.0, 1.0]), vec![1.0, 0.0, 2.0]);
        assert!(a.symmetry_holds());
        assert_eq!(a.bandwidth(), 1);
    }

    #[test]
    fn combination_and_submatrix() {
        let a = sample();
        let b = SparseOperator::identity(3);
        let c = SparseOperator::linear_combination(&[(1.0, &a), (2.0, &b)]);
        assert_eq!(c.get(0, 0), 4.0);
        assert_eq!(c.get(0, 1), -1.0);
        let s = a.submatrix(&[0, 2], &[0, 2]);
        assert_eq!(s.to_dense(), DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
        let t = SparseOperator::from_triplets(2, 2, &[(0, 1, 1.0)], false).transpose();
        assert_eq!(t.get(1, 0), 1.0);
        assert!((a.inner(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]) + 1.0).abs() < 1e-15);
    }
}
