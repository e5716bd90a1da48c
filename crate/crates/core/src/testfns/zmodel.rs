//! Planted-subspace Gaussian vectors `z = sum_j w_j sigma_j v_j`, `w_j ~ N(0, 1)`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{argument, Result};
use crate::estimators::GradientMatrix;
use crate::linalg::{gaussian_matrix, orthonormality_defect, random_orthonormal};

#[derive(Debug, Clone, PartialEq)]
pub struct ZModelSpec {
    weights: Vec<f64>,
    /// `m x d`, orthonormal columns.
    directions: DMatrix<f64>,
}

impl ZModelSpec {
    pub fn new(weights: Vec<f64>, directions: DMatrix<f64>) -> Result<Self> {
        let d = weights.len();
        if d == 0 || d != directions.ncols() || d > directions.nrows() {
            return argument(format!(
                "{d} weights for {}x{} directions",
                directions.nrows(),
                directions.ncols()
            ));
        }
        if weights.iter().any(|w| !(*w > 0.0)) || weights.windows(2).any(|w| w[0] < w[1]) {
            return argument("weights must be positive and descending");
        }
        if orthonormality_defect(&directions) > 1e-10 {
            return argument("directions must be orthonormal");
        }
        Ok(Self { weights, directions })
    }

    /// Random orthonormal directions in `R^m` for the given weights.
    pub fn planted(m: usize, weights: Vec<f64>, seed: u64) -> Result<Self> {
        if weights.len() > m {
            return argument("more planted directions than dimensions");
        }
        let v = random_orthonormal(m, weights.len(), &mut ChaCha8Rng::seed_from_u64(seed));
        Self::new(weights, v)
    }

    pub fn dim(&self) -> usize {
        self.directions.nrows()
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn directions(&self) -> &DMatrix<f64> {
        &self.directions
    }

    /// `sum_j sigma_j^2 v_j v_j^T`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut scaled = self.directions.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.weights[j];
        }
        &scaled * scaled.transpose()
    }
}

/// `count` independent draws as the columns of a gradient matrix.
pub fn sample_z_model(spec: &ZModelSpec, count: usize, seed: u64) -> Result<GradientMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = gaussian_matrix(spec.rank(), count, &mut rng);
    for (j, mut row) in w.row_iter_mut().enumerate() {
        row *= spec.weights[j];
    }
    GradientMatrix::new(&spec.directions * w)
}
