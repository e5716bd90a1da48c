//! Symmetric positive definite band matrices and their Cholesky factor.

use crate::error::{Error, Result};

/// Lower band storage: `data[i * (bw + 1) + d]` holds entry `(i, i - d)`.
#[derive(Debug, Clone)]
pub(crate) struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub(crate) fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(hi - lo <= self.bw, "entry ({i}, {j}) outside the band");
        hi * (self.bw + 1) + (hi - lo)
    }

    /// Add `v` to entry `(i, j)` (and implicitly `(j, i)`).
    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    #[cfg(test)]
    pub(crate) fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// In-place band Cholesky `A = L L^T`.
    pub(crate) fn factor(mut self) -> Result<BandedCholesky> {
        let (n, bw) = (self.n, self.bw);
        for j in 0..n {
            let start = j.saturating_sub(bw);
            let mut diag = self.data[self.slot(j, j)];
            for k in start..j {
                let l = self.data[self.slot(j, k)];
                diag -= l * l;
            }
            if !(diag > 0.0) {
                return Err(Error::Numerical(format!("band Cholesky: non-positive pivot at row {j}")));
            }
            let ljj = diag.sqrt();
            let sj = self.slot(j, j);
            self.data[sj] = ljj;
            for i in j + 1..(j + bw + 1).min(n) {
                let mut v = self.data[self.slot(i, j)];
                for k in i.saturating_sub(bw)..j {
                    v -= self.data[self.slot(i, k)] * self.data[self.slot(j, k)];
                }
                let s = self.slot(i, j);
                self.data[s] = v / ljj;
            }
        }
        Ok(BandedCholesky { l: self })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BandedCholesky {
    l: BandedSpd,
}

impl BandedCholesky {
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.l.n, self.l.bw);
        let l = &self.l;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut v = y[i];
            for k in i.saturating_sub(bw)..i {
                v -= l.data[l.slot(i, k)] * y[k];
            }
            y[i] = v / l.data[l.slot(i, i)];
        }
        for i in (0..n).rev() {
            let mut v = y[i];
            for k in i + 1..(i + bw + 1).min(n) {
                v -= l.data[l.slot(k, i)] * y[k];
            }
            y[i] = v / l.data[l.slot(i, i)];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn matches_dense_solve() {
        let (n, bw) = (12, 3);
        let mut a = BandedSpd::zeros(n, bw);
        for i in 0..n {
            a.add(i, i, 4.0 + i as f64 * 0.1);
            for d in 1..=bw.min(i) {
                a.add(i, i - d, -0.5 / d as f64);
            }
        }
        let dense = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = a.factor().unwrap().solve(&b);
        let want = dense.cholesky().unwrap().solve(&DVector::from_vec(b));
        for i in 0..n {
            assert!((x[i] - want[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn indefinite_matrix_fails() {
        let mut a = BandedSpd::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(1, 0, 2.0);
        assert!(a.factor().is_err());
    }
}
