//! Banded LU factorization with partial pivoting.
//!
//! Lexicographic node numbering on a Cartesian grid gives operators whose
//! bandwidth is about one row of nodes, so a band solver is the direct
//! method of choice here.

use super::sparse::SparseOperator;
use super::FemError;

#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    /// Row-major band storage; entry `(i, j)` lives at `i * width + j + kl - i`.
    band: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &SparseOperator) -> Result<Self, FemError> {
        assert_eq!(a.nrows(), a.ncols(), "banded LU needs a square operator");
        let n = a.nrows();
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..n {
            for (j, _) in a.row(i) {
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        // Pivoting fills up to kl extra super-diagonals.
        let width = 2 * kl + ku + 1;
        let mut band = vec![0.0; n * width];
        for i in 0..n {
            for (j, v) in a.row(i) {
                band[i * width + j + kl - i] += v;
            }
        }
        let mut lu = Self { n, kl, ku, width, band, pivots: vec![0; n] };
        lu.eliminate()?;
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + j + self.kl - i
    }

    fn eliminate(&mut self) -> Result<(), FemError> {
        let n = self.n;
        let scale = self.band.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let last_col = (k + self.kl + self.ku).min(n - 1);
            let mut p = k;
            let mut best = self.band[self.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.band[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= f64::EPSILON * scale * 1e-3 || !best.is_finite() {
                return Err(FemError::Factorization { pivot: k, context: "zero pivot in banded LU".into() });
            }
            self.pivots[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.band.swap(a, b);
                }
            }
            let diag = self.band[self.idx(k, k)];
            let krow = self.idx(k, k);
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.band[ik] / diag;
                self.band[ik] = l;
                if l == 0.0 {
                    continue;
                }
                let irow = self.idx(i, k);
                let len = last_col - k;
                // Row segments (k, k+1..=last_col) and (i, k+1..=last_col) are contiguous.
                let (head, tail) = self.band.split_at_mut(irow);
                let src = &head[krow + 1..krow + 1 + len];
                let dst = &mut tail[1..1 + len];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d -= l * s;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    b[i] -= self.band[self.idx(i, k)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + self.kl + self.ku).min(n - 1);
            let row = self.idx(k, k);
            let mut s = b[k];
            for (off, j) in (k + 1..=last_col).enumerate() {
                s -= self.band[row + 1 + off] * b[j];
            }
            b[k] = s / self.band[row];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
