//! Estimate the active subspace of a scalar function `f: R^m -> R` from
//! random linear measurements ("sketches") `E_i^T grad f(x_i)` of its gradient.
//!
//! The active subspace is spanned by the dominant eigenvectors of
//! `C = E[grad f grad f^T]`. Three estimators are provided:
//!
//! * [`estimators::estimate_c_monte_carlo`]: the plain sample average of gradient
//!   outer products, used as the reference whenever full gradients exist.
//! * [`estimators::estimate_c_projection`]: average of outer products of each
//!   gradient projected onto the range of its own sketch matrix.
//! * [`estimators::als_fit`]: a rank-`r` factorisation `A B^T` of the gradient
//!   matrix fitted to the sketched data by alternating least squares, seeded
//!   from the projection estimate.
//!
//! The [`testfns`] module carries the built-in problems (an engineered quadratic,
//! a log-normal Poisson problem with an adjoint gradient, and a planted-subspace
//! Gaussian model), and [`harness`] runs seeded multi-trial sweeps over the
//! number of measurements.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod testfns;
pub mod verify;

pub use error::{Error, Result};
pub use estimators::{
    als_fit, als_init, draw_sketches, estimate_c_monte_carlo, estimate_c_projection,
    project_measurement, subspace_from_factors, AlsConfig, AlsFit, AlsTrace, FactorSubspace,
    GradientMatrix, LowRankFactors, MeasurementSet, SketchMatrix,
};
pub use linalg::{sym_eig, EigenDecomposition};
pub use metrics::{eigenvalue_error, subspace_error, SubspaceEstimate};
pub use model::{
    directional_derivative, measure_gradient, sample_inputs, DensityKind, FunctionModel,
    InputDensity, MeasurementConfig, MeasurementMode,
};

pub use nalgebra::{DMatrix, DVector};
