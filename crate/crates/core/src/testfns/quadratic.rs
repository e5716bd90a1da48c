//! `f(x) = x^T H x / 2` on `[-1, 1]^m` with uniform inputs.
//!
//! Since `E[x x^T] = I/3` under the uniform density, `C = H^2 / 3`: the
//! eigenvectors of `C` are those of `H` and its eigenvalues are `d_i^2 / 3`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{argument, Result};
use crate::linalg::{random_orthonormal, sym_eig, EigenDecomposition};
use crate::metrics::SubspaceEstimate;
use crate::model::FunctionModel;

#[derive(Debug, Clone)]
pub struct QuadraticModel {
    h: DMatrix<f64>,
    eig: EigenDecomposition,
}

impl QuadraticModel {
    /// Wrap a symmetric positive semidefinite `H`.
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        if !h.is_square() || h.nrows() == 0 {
            return argument("H must be a non-empty square matrix");
        }
        let scale = h.amax().max(f64::MIN_POSITIVE);
        if (&h - h.transpose()).amax() > 1e-12 * scale {
            return argument("H must be symmetric");
        }
        let eig = sym_eig(&h)?;
        if eig.eigenvalues[eig.dim() - 1] < -1e-12 * scale {
            return argument("H must be positive semidefinite");
        }
        Ok(Self { h, eig })
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Eigenpairs of `H`.
    pub fn hessian_eigen(&self) -> &EigenDecomposition {
        &self.eig
    }

    /// Eigenvalues of `C`, `d_i^2 / 3`, descending.
    pub fn c_eigenvalues(&self) -> Vec<f64> {
        self.eig.eigenvalues.iter().map(|d| d * d / 3.0).collect()
    }
}

impl FunctionModel for QuadraticModel {
    fn dim(&self) -> usize {
        self.h.nrows()
    }

    fn evaluate(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * x.dot(&(&self.h * x)))
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.h * x)
    }
}

/// Quarter-decade decay with a `10^2.5` drop after entry `gap_after`:
/// `d_i = 10^{-(i-1)/4}` up to the gap, then continuing from `d_gap * 10^-2.5`.
pub fn engineered_spectrum(m: usize, gap_after: usize) -> Vec<f64> {
    (1..=m)
        .map(|i| {
            let exponent = if i <= gap_after {
                -((i - 1) as f64) / 4.0
            } else {
                -((gap_after - 1) as f64) / 4.0 - 2.5 - ((i - gap_after - 1) as f64) / 4.0
            };
            10f64.powf(exponent)
        })
        .collect()
}

/// `H = Q D Q^T` with a random orthogonal `Q` and [`engineered_spectrum`] on the diagonal.
pub fn build_quadratic(m: usize, gap_after: usize, seed: u64) -> Result<QuadraticModel> {
    if gap_after == 0 || gap_after >= m {
        return argument(format!("gap position {gap_after} must lie in 1..{m}"));
    }
    let q = random_orthonormal(m, m, &mut ChaCha8Rng::seed_from_u64(seed));
    let d = DMatrix::from_diagonal(&DVector::from_vec(engineered_spectrum(m, gap_after)));
    let h = &q * d * q.transpose();
    QuadraticModel::new((&h + h.transpose()) * 0.5)
}

/// The analytic active subspace of dimension `n` and the first `n` eigenvalues of `C`.
pub fn quadratic_true_active_subspace(model: &QuadraticModel, n: usize) -> Result<(SubspaceEstimate, Vec<f64>)> {
    let basis = SubspaceEstimate::leading(&model.eig, n)?;
    let values = model.c_eigenvalues().into_iter().take(n).collect();
    Ok((basis, values))
}
