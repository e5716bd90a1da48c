//! Dense kernels shared by the estimators: ordered symmetric eigendecomposition,
//! minimum-norm least squares, and a few norms.

use nalgebra::{DMatrix, DVector, QR};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{argument, Error, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
///
/// Column `i` of `eigenvectors` pairs with `eigenvalues[i]`. Each eigenvector is
/// signed so that its largest-magnitude entry is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// The first `n` eigenvectors as an `m x n` block.
    pub fn leading_vectors(&self, n: usize) -> DMatrix<f64> {
        self.eigenvectors.columns(0, n.min(self.dim())).into_owned()
    }

    /// The first `n` eigenvalues, zero-padded when `n` exceeds the dimension.
    pub fn leading_values(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| self.eigenvalues.get(i).copied().unwrap_or(0.0))
            .collect()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let w = &self.eigenvectors;
        w * DMatrix::from_diagonal(&self.eigenvalues) * w.transpose()
    }
}

/// Symmetric eigendecomposition with descending eigenvalues and a
/// deterministic sign convention.
///
/// The input is symmetrised as `(C + C^T)/2` first, so accumulated round-off
/// asymmetry in averaged outer products is harmless.
pub fn sym_eig(c: &DMatrix<f64>) -> Result<EigenDecomposition> {
    if !c.is_square() {
        return argument(format!("sym_eig needs a square matrix, got {}x{}", c.nrows(), c.ncols()));
    }
    if c.nrows() == 0 {
        return argument("sym_eig needs a non-empty matrix");
    }
    if c.iter().any(|v| !v.is_finite()) {
        return argument("sym_eig input has non-finite entries");
    }
    let m = c.nrows();
    // faer's tridiagonal solver keeps the residual near machine precision;
    // nalgebra's `SymmetricEigen` can lose several digits on some inputs.
    let sym = faer::Mat::<f64>::from_fn(m, m, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let eig = sym.selfadjoint_eigendecomposition(faer::Side::Lower);
    let values: Vec<f64> = (0..m).map(|i| eig.s().column_vector().read(i)).collect();

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let eigenvalues = DVector::from_iterator(m, order.iter().map(|&i| values[i]));
    let u = eig.u();
    let mut eigenvectors = DMatrix::from_fn(m, m, |i, j| u.read(i, order[j]));
    canonicalize_signs(&mut eigenvectors);
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

/// Flip each column so its largest-magnitude entry is positive. Ties go to
/// the first such entry.
pub fn canonicalize_signs(q: &mut DMatrix<f64>) {
    for mut col in q.column_iter_mut() {
        let mut pivot = 0.0_f64;
        for &v in col.iter() {
            if v.abs() > pivot.abs() {
                pivot = v;
            }
        }
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
}

/// Thin SVD `a = U diag(s) V^T`, singular values in descending order.
///
/// Backed by faer, whose bidiagonal solver keeps least-squares solutions
/// optimal to working precision; nalgebra's `SVD` can lose several digits.
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub fn thin_svd(a: &DMatrix<f64>) -> ThinSvd {
    let (rows, cols) = a.shape();
    let svd = faer::Mat::<f64>::from_fn(rows, cols, |i, j| a[(i, j)]).thin_svd();
    let (u, v, s) = (svd.u(), svd.v(), svd.s_diagonal());
    let k = s.nrows();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| s.read(y).total_cmp(&s.read(x)).then(x.cmp(&y)));
    ThinSvd {
        u: DMatrix::from_fn(rows, k, |i, j| u.read(i, order[j])),
        singular_values: order.iter().map(|&j| s.read(j)).collect(),
        v: DMatrix::from_fn(cols, k, |i, j| v.read(i, order[j])),
    }
}

/// Minimum-norm solution of `min ||a x - b||_2`, with singular values below
/// `max(rows, cols) * eps * sigma_max` treated as zero.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return argument(format!("lstsq: {} rows vs rhs of length {}", a.nrows(), b.len()));
    }
    let mut x = DVector::zeros(a.ncols());
    if a.is_empty() {
        return Ok(x);
    }
    let svd = thin_svd(a);
    let smax = svd.singular_values[0];
    if !smax.is_finite() {
        return Err(Error::Numerical("lstsq: non-finite singular values".into()));
    }
    let cutoff = smax * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    for (j, &sj) in svd.singular_values.iter().enumerate() {
        if sj > cutoff {
            x.axpy(svd.u.column(j).dot(b) / sj, &svd.v.column(j), 1.0);
        }
    }
    Ok(x)
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    thin_svd(a).singular_values[0]
}

/// `||Q^T Q - I||_2`.
pub fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let gram = q.transpose() * q;
    spectral_norm(&(gram - DMatrix::identity(q.ncols(), q.ncols())))
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // Column-major fill order keeps the stream layout independent of nalgebra internals.
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(rng.sample::<f64, _>(StandardNormal));
    }
    DMatrix::from_vec(rows, cols, data)
}

/// A Haar-distributed `m x n` matrix with orthonormal columns (`n <= m`).
pub fn random_orthonormal<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = gaussian_matrix(m, n, rng);
    let qr = QR::new(g);
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_is_sorted_permutation() {
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let eig = sym_eig(&c).unwrap();
        assert_eq!(eig.eigenvalues.as_slice(), &[3.0, 2.0, 1.0]);
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert!((eig.eigenvectors - expected).abs().max() < 1e-14);
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let eig = sym_eig(&DMatrix::identity(4, 4)).unwrap();
        for v in eig.eigenvalues.iter() {
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert!(orthonormality_defect(&eig.eigenvectors) < 1e-12);
    }

    #[test]
    fn random_symmetric_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in [2, 5, 17, 40] {
            let g = gaussian_matrix(m, m, &mut rng);
            let c = &g + g.transpose();
            let eig = sym_eig(&c).unwrap();
            let resid = spectral_norm(&(&c - eig.reconstruct()));
            assert!(resid <= 1e-10 * spectral_norm(&c), "m={m}: residual {resid}");
            assert!(orthonormality_defect(&eig.eigenvectors) < 1e-10);
            for w in eig.eigenvalues.as_slice().windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn sign_convention_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = gaussian_matrix(6, 6, &mut rng);
        let eig = sym_eig(&(&g * g.transpose())).unwrap();
        for col in eig.eigenvectors.column_iter() {
            let imax = col.iamax();
            assert!(col[imax] > 0.0);
        }
    }

    #[test]
    fn rejects_non_finite_and_non_square() {
        let mut c = DMatrix::identity(3, 3);
        c[(1, 2)] = f64::NAN;
        assert!(matches!(sym_eig(&c), Err(Error::Argument(_))));
        assert!(matches!(sym_eig(&DMatrix::zeros(2, 3)), Err(Error::Argument(_))));
    }

    #[test]
    fn min_norm_on_rank_deficient_system() {
        // Columns are identical: the min-norm solution splits the weight evenly.
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![2.0, 4.0, 0.0]);
        let x = lstsq_min_norm(&a, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        let zero = lstsq_min_norm(&DMatrix::zeros(3, 2), &b).unwrap();
        assert_eq!(zero.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn random_orthonormal_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = random_orthonormal(10, 4, &mut rng);
        assert!(orthonormality_defect(&q) < 1e-12);
    }
}
