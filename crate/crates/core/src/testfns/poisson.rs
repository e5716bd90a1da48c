//! Steady diffusion `-div(a grad u) = 1` on the unit square with a log-normal
//! coefficient given by a truncated Karhunen-Loeve expansion.
//!
//! Discretisation: cell-centred finite volumes on an `N x N` grid (a five-point
//! stencil). Face transmissibilities use the harmonic mean of the two adjacent
//! cell coefficients. The left, bottom and top sides carry `u = 0`; the right
//! side is insulated. The quantity of interest is the mean of `u` over the
//! column of cells along the right side.
//!
//! `log a = sum_j sqrt(gamma_j) phi_j x_j`, where `(gamma_j, phi_j)` are the
//! leading eigenpairs of the exponential covariance `exp(-|s - s'| / l)`
//! sampled at cell centres. With `K(x) u = b` and `f = c^T u`, the gradient is
//! `df/dx_j = -v^T (dK/dx_j) u` with the adjoint state `K v = c`.
//!
//! Every call assembles and factors its own system, so a model can be shared
//! across threads.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::banded::BandedSpd;
use crate::error::{argument, Error, Result};
use crate::linalg::sym_eig;
use crate::model::FunctionModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonConfig {
    /// Cells per side.
    pub grid: usize,
    /// Number of KL terms, the input dimension `m`.
    pub params: usize,
    pub correlation_length: f64,
}

impl Default for PoissonConfig {
    fn default() -> Self {
        Self { grid: 32, params: 100, correlation_length: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct PoissonKLModel {
    grid: usize,
    spacing: f64,
    correlation_length: f64,
    /// Continuous-operator eigenvalues `gamma_j`, descending.
    kl_eigenvalues: Vec<f64>,
    /// Column `j` is `sqrt(gamma_j) phi_j` at the cell centres.
    kl_modes: DMatrix<f64>,
    qoi: DVector<f64>,
    forcing: f64,
}

/// One coupling in the five-point stencil.
#[derive(Clone, Copy)]
enum Face {
    Interior(usize, usize),
    Dirichlet(usize),
}

impl PoissonKLModel {
    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cells(&self) -> usize {
        self.grid * self.grid
    }

    pub fn correlation_length(&self) -> f64 {
        self.correlation_length
    }

    pub fn kl_eigenvalues(&self) -> &[f64] {
        &self.kl_eigenvalues
    }

    /// `cells x m`; column `j` is the scaled mode `sqrt(gamma_j) phi_j`.
    pub fn kl_modes(&self) -> &DMatrix<f64> {
        &self.kl_modes
    }

    /// Unscaled KL fields `phi_j`, orthonormal under `<f, g> = h^2 sum f g`.
    pub fn kl_fields(&self) -> DMatrix<f64> {
        let mut phi = self.kl_modes.clone();
        for (j, mut col) in phi.column_iter_mut().enumerate() {
            col /= self.kl_eigenvalues[j].sqrt();
        }
        phi
    }

    /// Weights `c` with `f = c^T u`.
    pub fn qoi_weights(&self) -> &DVector<f64> {
        &self.qoi
    }

    pub fn forcing(&self) -> f64 {
        self.forcing
    }

    /// The same model with the source term scaled to `forcing`.
    pub fn with_forcing(&self, forcing: f64) -> Self {
        Self { forcing, ..self.clone() }
    }

    /// Index of cell `(i, j)`: `i` counts left to right, `j` bottom to top.
    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.grid + i
    }

    /// Cell-centre coefficient `a = exp(kl_modes x)`.
    pub fn coefficient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.kl_modes.ncols() {
            return argument(format!("expected {} parameters, got {}", self.kl_modes.ncols(), x.len()));
        }
        Ok((&self.kl_modes * x).map(f64::exp))
    }

    fn faces(&self) -> Vec<Face> {
        let n = self.grid;
        let mut faces = Vec::with_capacity(2 * n * n + 3 * n);
        for j in 0..n {
            for i in 0..n {
                let p = self.cell_index(i, j);
                if i + 1 < n {
                    faces.push(Face::Interior(p, p + 1));
                }
                if j + 1 < n {
                    faces.push(Face::Interior(p, p + n));
                }
                if i == 0 {
                    faces.push(Face::Dirichlet(p));
                }
                if j == 0 {
                    faces.push(Face::Dirichlet(p));
                }
                if j == n - 1 {
                    faces.push(Face::Dirichlet(p));
                }
            }
        }
        faces
    }

    fn assemble(&self, a: &DVector<f64>, faces: &[Face]) -> BandedSpd {
        let mut k = BandedSpd::zeros(self.cells(), self.grid);
        for face in faces {
            match *face {
                Face::Interior(p, q) => {
                    let t = 2.0 * a[p] * a[q] / (a[p] + a[q]);
                    k.add(p, p, t);
                    k.add(q, q, t);
                    k.add(q, p, -t);
                }
                // Half-cell distance to the boundary doubles the transmissibility.
                Face::Dirichlet(p) => k.add(p, p, 2.0 * a[p]),
            }
        }
        k
    }

    fn load(&self) -> Vec<f64> {
        vec![self.forcing * self.spacing * self.spacing; self.cells()]
    }

    /// Solution `u` at the cell centres.
    pub fn solve_state(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let a = self.coefficient(x)?;
        let k = self.assemble(&a, &self.faces()).factor()?;
        Ok(DVector::from_vec(k.solve(&self.load())))
    }

    fn check_finite(x: &DVector<f64>) -> Result<()> {
        if x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            argument("parameters must be finite")
        }
    }
}

impl FunctionModel for PoissonKLModel {
    fn dim(&self) -> usize {
        self.kl_modes.ncols()
    }

    fn evaluate(&self, x: &DVector<f64>) -> Result<f64> {
        Self::check_finite(x)?;
        Ok(self.qoi.dot(&self.solve_state(x)?))
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Self::check_finite(x)?;
        let a = self.coefficient(x)?;
        let faces = self.faces();
        let chol = self.assemble(&a, &faces).factor()?;
        let u = chol.solve(&self.load());
        let v = chol.solve(self.qoi.as_slice());

        // w_p = sum over faces touching p of (dT/da_p) a_p (dv)(du); the chain
        // rule da_p/dx_j = a_p kl_modes[p, j] then gives grad = -kl_modes^T w.
        let mut w = DVector::zeros(self.cells());
        for face in &faces {
            match *face {
                Face::Interior(p, q) => {
                    let jump = (u[p] - u[q]) * (v[p] - v[q]);
                    let s = a[p] + a[q];
                    w[p] += 2.0 * a[q] * a[q] / (s * s) * a[p] * jump;
                    w[q] += 2.0 * a[p] * a[p] / (s * s) * a[q] * jump;
                }
                Face::Dirichlet(p) => w[p] += 2.0 * a[p] * u[p] * v[p],
            }
        }
        let grad = -self.kl_modes.tr_mul(&w);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical("adjoint gradient is not finite".into()));
        }
        Ok(grad)
    }
}

/// Build the KL parameterisation and quantity-of-interest weights.
pub fn build_poisson_kl(cfg: &PoissonConfig) -> Result<PoissonKLModel> {
    let n = cfg.grid;
    if n < 2 {
        return argument("grid needs at least 2 cells per side");
    }
    if cfg.params == 0 || cfg.params > n * n {
        return argument(format!("{} KL terms on {} cells", cfg.params, n * n));
    }
    if !(cfg.correlation_length > 0.0) {
        return argument("correlation length must be positive");
    }
    let h = 1.0 / n as f64;
    let cells = n * n;
    let centre = |p: usize| (((p % n) as f64 + 0.5) * h, ((p / n) as f64 + 0.5) * h);
    let cov = DMatrix::from_fn(cells, cells, |p, q| {
        let (a, b) = (centre(p), centre(q));
        (-((a.0 - b.0).hypot(a.1 - b.1)) / cfg.correlation_length).exp()
    });
    let eig = sym_eig(&cov)?;
    let mu_last = eig.eigenvalues[cfg.params - 1];
    if !(mu_last > 0.0) {
        return Err(Error::Numerical(format!(
            "covariance eigenvalue {} is {mu_last:e}; reduce the number of KL terms",
            cfg.params
        )));
    }
    // Matrix eigenpairs (mu, q) map to operator eigenpairs (mu h^2, q / h);
    // the scaled mode sqrt(gamma) phi is sqrt(mu) q either way.
    let mut kl_modes = eig.leading_vectors(cfg.params);
    for (j, mut col) in kl_modes.column_iter_mut().enumerate() {
        col *= eig.eigenvalues[j].sqrt();
    }
    let kl_eigenvalues = (0..cfg.params).map(|j| eig.eigenvalues[j] * h * h).collect();

    let mut qoi = DVector::zeros(cells);
    for j in 0..n {
        qoi[j * n + n - 1] = 1.0 / n as f64;
    }
    Ok(PoissonKLModel {
        grid: n,
        spacing: h,
        correlation_length: cfg.correlation_length,
        kl_eigenvalues,
        kl_modes,
        qoi,
        forcing: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_defect;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::sync::OnceLock;

    fn small() -> &'static PoissonKLModel {
        static MODEL: OnceLock<PoissonKLModel> = OnceLock::new();
        MODEL.get_or_init(|| {
            build_poisson_kl(&PoissonConfig { grid: 12, params: 20, correlation_length: 1.0 }).unwrap()
        })
    }

    fn gaussian(m: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn zero_parameters_give_unit_coefficient() {
        let a = small().coefficient(&DVector::zeros(20)).unwrap();
        assert!(a.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn kl_spectrum_is_positive_descending_and_fields_orthonormal() {
        let m = small();
        assert!(m.kl_eigenvalues().iter().all(|&g| g > 0.0));
        assert!(m.kl_eigenvalues().windows(2).all(|w| w[0] >= w[1]));
        let scaled = m.kl_fields() * m.spacing();
        assert!(orthonormality_defect(&scaled) < 1e-10);
    }

    #[test]
    fn solution_is_positive() {
        let m = small();
        let u = m.solve_state(&DVector::zeros(20)).unwrap();
        assert!(u.iter().all(|&v| v > 0.0));
        assert!(m.evaluate(&DVector::zeros(20)).unwrap() > 0.0);
    }

    #[test]
    fn linear_in_forcing() {
        let m = small();
        let x = gaussian(20, 1);
        let f1 = m.evaluate(&x).unwrap();
        let f2 = m.with_forcing(2.0).evaluate(&x).unwrap();
        assert!((f2 - 2.0 * f1).abs() < 1e-14 * f1.abs());
    }

    #[test]
    fn evaluation_is_deterministic() {
        let m = small();
        let x = gaussian(20, 2);
        assert_eq!(m.evaluate(&x).unwrap(), m.evaluate(&x).unwrap());
        assert_eq!(m.gradient(&x).unwrap(), m.gradient(&x).unwrap());
    }

    #[test]
    fn adjoint_matches_central_differences() {
        let m = small();
        let step = 1e-5;
        for seed in 0..3 {
            let x = gaussian(20, 10 + seed);
            let g = m.gradient(&x).unwrap();
            for j in 0..20 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += step;
                xm[j] -= step;
                let fd = (m.evaluate(&xp).unwrap() - m.evaluate(&xm).unwrap()) / (2.0 * step);
                assert!((fd - g[j]).abs() <= 1e-4 * g[j].abs(), "seed {seed}, j {j}: {fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn rejects_bad_configs_and_inputs() {
        assert!(build_poisson_kl(&PoissonConfig { grid: 4, params: 17, correlation_length: 1.0 }).is_err());
        assert!(build_poisson_kl(&PoissonConfig { grid: 4, params: 3, correlation_length: 0.0 }).is_err());
        assert!(small().evaluate(&DVector::zeros(3)).is_err());
        let mut x = DVector::zeros(20);
        x[0] = f64::NAN;
        assert!(small().gradient(&x).is_err());
    }
}
