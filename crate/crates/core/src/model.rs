//! Function models, input densities, and gradient measurements.
//!
//! A gradient measurement is the directional derivative `grad f(x)^T a`. It is
//! taken either exactly from the model's gradient or by a forward difference
//! `(f(x + h a) - f(x)) / h`, which costs two evaluations of `f` regardless of
//! the input dimension.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityKind {
    /// Independent uniforms on `[-1, 1]^m`.
    UniformHypercube,
    StandardGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDensity {
    kind: DensityKind,
    dim: usize,
}

impl InputDensity {
    pub fn new(kind: DensityKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return argument("input density dimension must be at least 1");
        }
        Ok(Self { kind, dim })
    }

    pub fn kind(&self) -> DensityKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Draw `count` independent inputs as the columns of an `m x count` matrix.
pub fn sample_inputs(density: &InputDensity, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    if count == 0 {
        return argument("sample count must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = density.dim;
    let data: Vec<f64> = match density.kind {
        DensityKind::UniformHypercube => (0..m * count).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        DensityKind::StandardGaussian => {
            (0..m * count).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
        }
    };
    Ok(DMatrix::from_vec(m, count, data))
}

/// A scalar function of `dim()` inputs, optionally with an exact gradient.
///
/// Implementations must be deterministic in `x`.
pub trait FunctionModel: Send + Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, x: &DVector<f64>) -> Result<f64>;

    fn has_gradient(&self) -> bool {
        false
    }

    fn gradient(&self, _x: &DVector<f64>) -> Result<DVector<f64>> {
        Err(Error::Capability("model has no gradient routine".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementMode {
    Exact,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    pub mode: MeasurementMode,
    /// Forward-difference step. `None` means `1e-6 * max(1, ||x||_inf)`.
    pub step: Option<f64>,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self::exact()
    }
}

impl MeasurementConfig {
    pub fn exact() -> Self {
        Self { mode: MeasurementMode::Exact, step: None }
    }

    pub fn finite_difference(step: Option<f64>) -> Result<Self> {
        if let Some(h) = step {
            if !(h > 0.0 && h.is_finite()) {
                return argument(format!("finite-difference step must be positive, got {h}"));
            }
        }
        Ok(Self { mode: MeasurementMode::FiniteDifference, step })
    }

    pub fn step_at(&self, x: &DVector<f64>) -> f64 {
        self.step.unwrap_or_else(|| 1e-6 * x.amax().max(1.0))
    }
}

fn check_len(what: &str, v: &DVector<f64>, dim: usize) -> Result<()> {
    if v.len() != dim {
        return argument(format!("{what} has length {}, model dimension is {dim}", v.len()));
    }
    Ok(())
}

/// One linear measurement `grad f(x)^T a` of the gradient.
pub fn directional_derivative(
    model: &dyn FunctionModel,
    x: &DVector<f64>,
    a: &DVector<f64>,
    config: &MeasurementConfig,
) -> Result<f64> {
    check_len("x", x, model.dim())?;
    check_len("direction", a, model.dim())?;
    match config.mode {
        MeasurementMode::Exact => Ok(model.gradient(x)?.dot(a)),
        MeasurementMode::FiniteDifference => {
            let f0 = model.evaluate(x)?;
            forward_difference(model, x, a, f0, config.step_at(x))
        }
    }
}

fn forward_difference(
    model: &dyn FunctionModel,
    x: &DVector<f64>,
    a: &DVector<f64>,
    f0: f64,
    h: f64,
) -> Result<f64> {
    let shifted = x + a * h;
    Ok((model.evaluate(&shifted)? - f0) / h)
}

/// The `k`-vector `E^T grad f(x)`, one directional derivative per column of `E`.
///
/// In finite-difference mode `f(x)` is evaluated once and shared, so the
/// total cost is `k + 1` evaluations.
pub fn measure_gradient(
    model: &dyn FunctionModel,
    x: &DVector<f64>,
    e: &DMatrix<f64>,
    config: &MeasurementConfig,
) -> Result<DVector<f64>> {
    check_len("x", x, model.dim())?;
    if e.nrows() != model.dim() {
        return argument(format!(
            "sketch has {} rows, model dimension is {}",
            e.nrows(),
            model.dim()
        ));
    }
    match config.mode {
        MeasurementMode::Exact => Ok(e.tr_mul(&model.gradient(x)?)),
        MeasurementMode::FiniteDifference => {
            let f0 = model.evaluate(x)?;
            let h = config.step_at(x);
            let mut out = DVector::zeros(e.ncols());
            for (j, col) in e.column_iter().enumerate() {
                out[j] = forward_difference(model, x, &col.into_owned(), f0, h)?;
            }
            Ok(out)
        }
    }
}
