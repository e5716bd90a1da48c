//! Estimators of the gradient outer-product matrix and its dominant eigenspace.

mod als;

pub use als::{als_fit, als_init, subspace_from_factors, AlsConfig, AlsFit, AlsTrace, FactorSubspace, LowRankFactors};

use nalgebra::{DMatrix, DVector, QR};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{argument, Error, Result};
use crate::linalg::{gaussian_matrix, sym_eig, EigenDecomposition};
use crate::model::{measure_gradient, FunctionModel, MeasurementConfig};

/// The `m x M` matrix whose columns are gradient samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMatrix(DMatrix<f64>);

impl GradientMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() == 0 || values.nrows() == 0 {
            return argument("gradient matrix must have at least one row and one column");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return argument("gradient matrix has non-finite entries");
        }
        Ok(Self(values))
    }

    /// Evaluate exact gradients of `model` at each column of `inputs`.
    pub fn from_model(model: &dyn FunctionModel, inputs: &DMatrix<f64>) -> Result<Self> {
        let mut g = DMatrix::zeros(model.dim(), inputs.ncols());
        for (i, x) in inputs.column_iter().enumerate() {
            g.set_column(i, &model.gradient(&x.into_owned())?);
        }
        Self::new(g)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn count(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// An `m x k` Gaussian sketch together with the seed of the stream it came from
/// and its position in that stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchMatrix {
    values: DMatrix<f64>,
    seed: u64,
    index: usize,
}

impl SketchMatrix {
    pub fn new(values: DMatrix<f64>, seed: u64, index: usize) -> Self {
        Self { values, seed, index }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

/// `count` independent `m x k` standard Gaussian matrices from one seeded stream.
pub fn draw_sketches(m: usize, k: usize, count: usize, seed: u64) -> Result<Vec<SketchMatrix>> {
    if k == 0 || k > m {
        return argument(format!("need 1 <= k <= m, got k={k}, m={m}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|i| SketchMatrix::new(gaussian_matrix(m, k, &mut rng), seed, i))
        .collect())
}

/// Pairs `(E_i, m_i = E_i^T grad f_i)`, one independent sketch per gradient.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    sketches: Vec<SketchMatrix>,
    measurements: Vec<DVector<f64>>,
    dim: usize,
    k: usize,
}

impl MeasurementSet {
    pub fn new(sketches: Vec<SketchMatrix>, measurements: Vec<DVector<f64>>) -> Result<Self> {
        if sketches.is_empty() {
            return argument("measurement set is empty");
        }
        if sketches.len() != measurements.len() {
            return argument(format!(
                "{} sketches but {} measurement vectors",
                sketches.len(),
                measurements.len()
            ));
        }
        let (dim, k) = sketches[0].values.shape();
        for (s, mv) in sketches.iter().zip(&measurements) {
            if s.values.shape() != (dim, k) {
                return argument("sketch matrices must share one shape");
            }
            if mv.len() != k {
                return argument(format!("measurement of length {} for k={k}", mv.len()));
            }
        }
        Ok(Self { sketches, measurements, dim, k })
    }

    /// Exact measurements `E_i^T g_i` of known gradients.
    pub fn from_gradients(g: &GradientMatrix, sketches: Vec<SketchMatrix>) -> Result<Self> {
        if sketches.len() != g.count() {
            return argument(format!("{} sketches for {} gradients", sketches.len(), g.count()));
        }
        if let Some(s) = sketches.first() {
            if s.values.nrows() != g.dim() {
                return argument("sketch rows do not match gradient dimension");
            }
        }
        let measurements = sketches
            .iter()
            .zip(g.values().column_iter())
            .map(|(s, col)| s.values.tr_mul(&col))
            .collect();
        Self::new(sketches, measurements)
    }

    /// Measurements of `model` at each column of `inputs`, exact or by differences.
    pub fn from_model(
        model: &dyn FunctionModel,
        inputs: &DMatrix<f64>,
        sketches: Vec<SketchMatrix>,
        config: &MeasurementConfig,
    ) -> Result<Self> {
        if sketches.len() != inputs.ncols() {
            return argument(format!("{} sketches for {} inputs", sketches.len(), inputs.ncols()));
        }
        let measurements = sketches
            .iter()
            .zip(inputs.column_iter())
            .map(|(s, x)| measure_gradient(model, &x.into_owned(), &s.values, config))
            .collect::<Result<Vec<_>>>()?;
        Self::new(sketches, measurements)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.sketches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sketches.is_empty()
    }

    pub fn sketches(&self) -> &[SketchMatrix] {
        &self.sketches
    }

    pub fn measurements(&self) -> &[DVector<f64>] {
        &self.measurements
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DMatrix<f64>, &DVector<f64>)> {
        self.sketches.iter().map(|s| &s.values).zip(&self.measurements)
    }

    /// `||M(G)||_F`, the norm of all measurements stacked.
    pub fn norm(&self) -> f64 {
        self.measurements.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
    }
}

/// Eigendecomposition of `(1/M) sum_i g_i g_i^T`.
pub fn estimate_c_monte_carlo(g: &GradientMatrix) -> Result<EigenDecomposition> {
    let v = g.values();
    let c = (v * v.transpose()) / (g.count() as f64);
    sym_eig(&c)
}

/// `E (E^T E)^{-1} m`: the orthogonal projection onto `range(E)` of any vector
/// whose sketch is `m`.
pub fn project_measurement(e: &DMatrix<f64>, m_vec: &DVector<f64>) -> Result<DVector<f64>> {
    let (rows, k) = e.shape();
    if m_vec.len() != k {
        return argument(format!("measurement of length {} for a sketch with {k} columns", m_vec.len()));
    }
    if k > rows {
        return argument(format!("sketch has more columns ({k}) than rows ({rows})"));
    }
    // E = QR, so E (E^T E)^{-1} m = Q R^{-T} m.
    let qr = QR::new(e.clone());
    let r = qr.r();
    let scale = r.diagonal().amax();
    let floor = scale * (rows as f64) * f64::EPSILON;
    if scale == 0.0 || r.diagonal().iter().any(|d| d.abs() <= floor) {
        return Err(Error::Numerical("sketch matrix is rank deficient".into()));
    }
    let y = r
        .tr_solve_upper_triangular(m_vec)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    Ok(qr.q() * y)
}

/// Eigendecomposition of `(1/M) sum_i (P_i g_i)(P_i g_i)^T`, where `P_i g_i`
/// comes from [`project_measurement`].
///
/// Only the eigenvectors are meant to track those of the Monte Carlo
/// estimate; the eigenvalues are biased and reported for comparison only.
pub fn estimate_c_projection(ms: &MeasurementSet) -> Result<EigenDecomposition> {
    let mut c = DMatrix::zeros(ms.dim(), ms.dim());
    let w = 1.0 / ms.len() as f64;
    for (e, m_vec) in ms.iter() {
        let p = project_measurement(e, m_vec)?;
        c.ger(w, &p, &p, 1.0);
    }
    sym_eig(&c)
}
