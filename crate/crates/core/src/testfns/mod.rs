//! Built-in test problems with known or computable answers.

mod banded;
pub mod poisson;
pub mod quadratic;
pub mod zmodel;

pub use poisson::{build_poisson_kl, PoissonConfig, PoissonKLModel};
pub use quadratic::{build_quadratic, engineered_spectrum, quadratic_true_active_subspace, QuadraticModel};
pub use zmodel::{sample_z_model, ZModelSpec};
