//! Error measures for estimated eigenvalues and subspaces.

use nalgebra::DMatrix;

use crate::error::{argument, Error, Result};
use crate::linalg::{orthonormality_defect, spectral_norm, EigenDecomposition};

/// Number of leading eigenvalues compared by [`eigenvalue_error`].
pub const EIGENVALUE_TERMS: usize = 6;

const ORTHONORMAL_TOL: f64 = 1e-10;

/// An `m x n` basis with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceEstimate {
    basis: DMatrix<f64>,
}

impl SubspaceEstimate {
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        if basis.ncols() == 0 || basis.ncols() > basis.nrows() {
            return argument(format!("subspace basis of shape {}x{}", basis.nrows(), basis.ncols()));
        }
        let defect = orthonormality_defect(&basis);
        if !(defect <= ORTHONORMAL_TOL) {
            return argument(format!("basis columns are not orthonormal (defect {defect:e})"));
        }
        Ok(Self { basis })
    }

    /// Span of the leading `n` eigenvectors.
    pub fn leading(eig: &EigenDecomposition, n: usize) -> Result<Self> {
        if n > eig.dim() {
            return argument(format!("requested {n} eigenvectors of a {}-dimensional decomposition", eig.dim()));
        }
        Self::new(eig.leading_vectors(n))
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// `sqrt( sum (ref_i - est_i)^2 / sum ref_i^2 )` over the first six eigenvalues.
///
/// Shorter inputs are zero-padded to six terms.
pub fn eigenvalue_error(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() > EIGENVALUE_TERMS || estimate.len() > EIGENVALUE_TERMS {
        return argument(format!("eigenvalue_error compares at most {EIGENVALUE_TERMS} values"));
    }
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..EIGENVALUE_TERMS {
        let (r, e) = (at(reference, i), at(estimate, i));
        num += (r - e) * (r - e);
        den += r * r;
    }
    if den == 0.0 {
        return Err(Error::Numerical("reference eigenvalues are all zero".into()));
    }
    Ok((num / den).sqrt())
}

/// `||P_ref - P_est||_2` for the orthogonal projectors onto two subspaces of
/// equal dimension: the sine of their largest principal angle.
///
/// Evaluated as `||(I - P_ref) W_est||_2` without forming `m x m` projectors.
pub fn subspace_error(reference: &SubspaceEstimate, estimate: &SubspaceEstimate) -> Result<f64> {
    if reference.ambient_dim() != estimate.ambient_dim() || reference.dim() != estimate.dim() {
        return argument(format!(
            "subspace shapes differ: {}x{} vs {}x{}",
            reference.ambient_dim(),
            reference.dim(),
            estimate.ambient_dim(),
            estimate.dim()
        ));
    }
    let (w, v) = (&reference.basis, &estimate.basis);
    let residual = v - w * w.tr_mul(v);
    Ok(spectral_norm(&residual).clamp(0.0, 1.0))
}
