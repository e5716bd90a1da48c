//! Rank-`r` recovery of the gradient matrix from its sketches by alternating
//! least squares.
//!
//! The fit minimises `sum_i ||m_i - E_i^T A b_i||^2` over `A` (`m x r`) and
//! `B` (`M x r`, rows `b_i`). With `A` fixed every `b_i` is an independent
//! `k x r` least-squares problem; with `B` fixed the problem is linear in the
//! `m r` entries of `A` and is solved through its normal equations
//!
//! ```text
//! sum_i (b_i b_i^T (x) E_i E_i^T) vec(A) = sum_i vec(E_i m_i b_i^T)
//! ```
//!
//! Block `(p, q)` of the normal matrix is `sum_i b_ip b_iq E_i E_i^T`; the
//! `E_i E_i^T` are flattened once into the columns of an `m^2 x M` matrix so
//! every A-step assembles all blocks with a single matrix product.

use faer::prelude::SpSolver;
use nalgebra::{DMatrix, QR};
use serde::{Deserialize, Serialize};

use super::MeasurementSet;
use crate::error::{argument, Error, Result};
use crate::linalg::{canonicalize_signs, lstsq_min_norm, thin_svd, EigenDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlsConfig {
    pub rank: usize,
    pub max_iterations: usize,
    /// Stop once the objective changes by less than this fraction between iterations.
    pub tolerance: f64,
    /// Ridge added to the A-step normal equations when they cannot be factored.
    pub ridge: f64,
}

impl AlsConfig {
    pub fn new(rank: usize) -> Self {
        Self { rank, max_iterations: 200, tolerance: 1e-8, ridge: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return argument("ALS rank must be at least 1");
        }
        if self.max_iterations == 0 {
            return argument("ALS needs at least one iteration");
        }
        if !(self.tolerance > 0.0) {
            return argument("ALS tolerance must be positive");
        }
        if !(self.ridge >= 0.0) {
            return argument("ALS ridge must be non-negative");
        }
        Ok(())
    }
}

/// The factor pair of the model `A B^T` of the `m x M` gradient matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactors {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LowRankFactors {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let r = a.ncols();
        if b.ncols() != r {
            return argument(format!("factor ranks differ: {} vs {}", r, b.ncols()));
        }
        if r == 0 || r > a.nrows().min(b.nrows()) {
            return argument(format!("rank {r} outside 1..=min(m, M)"));
        }
        Ok(Self { a, b })
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    pub fn product(&self) -> DMatrix<f64> {
        &self.a * self.b.transpose()
    }
}

/// Objective history of an ALS run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlsTrace {
    /// `||M(G) - M(A B^T)||_F` after every half-step: B, A, B, A, ...
    pub objectives: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub ridge_applied: bool,
}

impl AlsTrace {
    /// Objective at the end of each full iteration, preceded by the value after
    /// the initial B-step.
    pub fn iteration_objectives(&self) -> Vec<f64> {
        self.objectives.iter().step_by(2).copied().collect()
    }

    pub fn final_objective(&self) -> f64 {
        self.objectives.last().copied().unwrap_or(f64::NAN)
    }

    /// Largest increase between consecutive half-steps, zero if none.
    pub fn max_increase(&self) -> f64 {
        self.objectives
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct AlsFit {
    pub factors: LowRankFactors,
    pub trace: AlsTrace,
}

/// Starting `A`: the leading `r` eigenvectors of the projection estimate, each
/// scaled by the square root of its eigenvalue (negative round-off clamped to 0).
pub fn als_init(cp: &EigenDecomposition, r: usize) -> Result<DMatrix<f64>> {
    if r == 0 || r > cp.dim() {
        return argument(format!("rank {r} outside 1..={}", cp.dim()));
    }
    let mut a = cp.leading_vectors(r);
    for (j, mut col) in a.column_iter_mut().enumerate() {
        col *= cp.eigenvalues[j].max(0.0).sqrt();
    }
    Ok(a)
}

struct Workspace<'a> {
    ms: &'a MeasurementSet,
    /// Column `i` is `vec(E_i E_i^T)`.
    gram: faer::Mat<f64>,
    /// Column `i` is `E_i m_i`.
    back: DMatrix<f64>,
}

impl<'a> Workspace<'a> {
    fn new(ms: &'a MeasurementSet) -> Self {
        let m = ms.dim();
        let mut gram = faer::Mat::zeros(m * m, ms.len());
        let mut back = DMatrix::zeros(m, ms.len());
        for (i, (e, mv)) in ms.iter().enumerate() {
            let s = e * e.transpose();
            for (row, &v) in s.iter().enumerate() {
                gram.write(row, i, v);
            }
            back.set_column(i, &(e * mv));
        }
        Self { ms, gram, back }
    }

    /// Fresh `B` for fixed `A`, plus the squared objective it attains.
    fn b_step(&self, a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
        let mut b = DMatrix::zeros(self.ms.len(), a.ncols());
        let mut obj = 0.0;
        for (i, (e, mv)) in self.ms.iter().enumerate() {
            let q = e.tr_mul(a);
            let bi = lstsq_min_norm(&q, mv)?;
            obj += (mv - &q * &bi).norm_squared();
            b.set_row(i, &bi.transpose());
        }
        Ok((b, obj))
    }

    fn objective(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        self.ms
            .iter()
            .enumerate()
            .map(|(i, (e, mv))| {
                let g = a * b.row(i).transpose();
                (mv - e.tr_mul(&g)).norm_squared()
            })
            .sum()
    }

    /// Fresh `A` for fixed `B`. Returns whether the ridge had to be applied.
    fn a_step(&self, b: &DMatrix<f64>, ridge: f64) -> Result<(DMatrix<f64>, bool)> {
        let m = self.ms.dim();
        let r = b.ncols();
        let n = m * r;
        let pairs: Vec<(usize, usize)> = (0..r).flat_map(|p| (p..r).map(move |q| (p, q))).collect();
        let weights = faer::Mat::<f64>::from_fn(b.nrows(), pairs.len(), |i, c| {
            let (p, q) = pairs[c];
            b[(i, p)] * b[(i, q)]
        });
        // Column c holds vec(sum_i b_ip b_iq E_i E_i^T), the (p, q) block.
        let blocks = &self.gram * &weights;

        let mut normal = faer::Mat::<f64>::zeros(n, n);
        for (c, &(p, q)) in pairs.iter().enumerate() {
            for col in 0..m {
                for row in 0..m {
                    let v = blocks.read(col * m + row, c);
                    normal.write(p * m + row, q * m + col, v);
                    normal.write(q * m + col, p * m + row, v);
                }
            }
        }
        let rhs_mat = &self.back * b;
        let rhs = faer::Mat::<f64>::from_fn(n, 1, |i, _| rhs_mat[i]);

        let (chol, ridged) = match normal.cholesky(faer::Side::Lower) {
            Ok(c) => (c, false),
            Err(_) if ridge > 0.0 => {
                for i in 0..n {
                    normal.write(i, i, normal.read(i, i) + ridge);
                }
                let c = normal.cholesky(faer::Side::Lower).map_err(|_| {
                    Error::Numerical("A-step normal equations singular even with ridge".into())
                })?;
                (c, true)
            }
            Err(_) => {
                return Err(Error::Numerical(
                    "A-step normal equations are singular; set a positive ridge".into(),
                ))
            }
        };
        let vec_a = chol.solve(&rhs);
        Ok((DMatrix::from_fn(m, r, |i, j| vec_a.read(j * m + i, 0)), ridged))
    }
}

/// Fit `A B^T` to the measurements by alternating least squares from `a0`.
///
/// Each iteration is a B-step followed by an A-step. Iteration stops when the
/// objective changes by less than `cfg.tolerance` relative to the previous
/// iteration, when it drops below `1e-15 ||M(G)||_F`, or after
/// `cfg.max_iterations` iterations.
pub fn als_fit(ms: &MeasurementSet, cfg: &AlsConfig, a0: &DMatrix<f64>) -> Result<AlsFit> {
    cfg.validate()?;
    let r = cfg.rank;
    if r >= ms.k() {
        return argument(format!("ALS rank {r} must be below the number of measurements k={}", ms.k()));
    }
    if r > ms.dim().min(ms.len()) {
        return argument(format!("ALS rank {r} exceeds min(m, M)"));
    }
    if a0.shape() != (ms.dim(), r) {
        return argument(format!(
            "initial A is {}x{}, expected {}x{r}",
            a0.nrows(),
            a0.ncols(),
            ms.dim()
        ));
    }

    let ws = Workspace::new(ms);
    let floor = 1e-15 * ms.norm();
    let mut trace = AlsTrace::default();
    let mut a = a0.clone();
    let (mut b, obj) = ws.b_step(&a)?;
    let mut prev = obj.sqrt();
    trace.objectives.push(prev);

    if prev <= floor {
        trace.converged = true;
    } else {
        for it in 1..=cfg.max_iterations {
            let (next_a, ridged) = ws.a_step(&b, cfg.ridge)?;
            a = next_a;
            trace.ridge_applied |= ridged;
            let obj = ws.objective(&a, &b).sqrt();
            trace.objectives.push(obj);
            trace.iterations = it;
            if obj <= floor || prev - obj <= cfg.tolerance * prev {
                trace.converged = true;
                break;
            }
            if it == cfg.max_iterations {
                break;
            }
            let (next_b, obj_b) = ws.b_step(&a)?;
            b = next_b;
            trace.objectives.push(obj_b.sqrt());
            if obj_b.sqrt() <= floor {
                trace.converged = true;
                break;
            }
            prev = obj;
        }
    }

    Ok(AlsFit { factors: LowRankFactors::new(a, b)?, trace })
}

/// Leading left singular vectors of `A B^T` and its `r` singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSubspace {
    pub basis: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

impl FactorSubspace {
    /// `sigma_j^2 / M`, the eigenvalue estimates implied by the factor model.
    pub fn eigenvalue_estimates(&self, samples: usize) -> Vec<f64> {
        self.singular_values.iter().map(|s| s * s / samples as f64).collect()
    }
}

/// First `n` left singular vectors of `A B^T`, with the same sign convention as
/// [`crate::linalg::sym_eig`].
pub fn subspace_from_factors(f: &LowRankFactors, n: usize) -> Result<FactorSubspace> {
    let r = f.rank();
    if n == 0 || n > r {
        return argument(format!("subspace dimension {n} outside 1..={r}"));
    }
    // With B = Q R, A B^T = (A R^T) Q^T and Q has orthonormal columns, so the
    // left singular pairs of A B^T are those of the m x r matrix A R^T.
    let reduced = if f.b.nrows() >= r {
        let rb = QR::new(f.b.clone()).r();
        &f.a * rb.transpose()
    } else {
        f.product()
    };
    let svd = thin_svd(&reduced);
    let mut singular_values = svd.singular_values;
    singular_values.resize(r, 0.0);
    let mut basis = svd.u.columns(0, n).into_owned();
    canonicalize_signs(&mut basis);
    Ok(FactorSubspace { basis, singular_values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use crate::estimators::{draw_sketches, estimate_c_projection, GradientMatrix};
    use crate::linalg::{gaussian_matrix, orthonormality_defect, random_orthonormal, sym_eig};
    use crate::metrics::{subspace_error, SubspaceEstimate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// `G = U diag(s) V^T` with known left factor `U`.
    fn planted(m: usize, count: usize, s: &[f64], seed: u64) -> (GradientMatrix, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_orthonormal(m, s.len(), &mut rng);
        let v = random_orthonormal(count, s.len(), &mut rng);
        let sigma = DMatrix::from_diagonal(&DVector::from_column_slice(s));
        (GradientMatrix::new(&u * sigma * v.transpose()).unwrap(), u)
    }

    fn pipeline(ms: &MeasurementSet, cfg: &AlsConfig) -> AlsFit {
        let cp = estimate_c_projection(ms).unwrap();
        let a0 = als_init(&cp, cfg.rank).unwrap();
        als_fit(ms, cfg, &a0).unwrap()
    }

    #[test]
    fn init_scales_by_root_eigenvalue() {
        let cp = sym_eig(&DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]))).unwrap();
        let a = als_init(&cp, 1).unwrap();
        assert_eq!(a.shape(), (2, 1));
        assert!((a[(0, 0)].abs() - 2.0).abs() < 1e-14 && a[(1, 0)].abs() < 1e-14);
    }

    #[test]
    fn init_allows_zero_columns() {
        let cp = sym_eig(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, -1e-18]))).unwrap();
        let a = als_init(&cp, 3).unwrap();
        assert!(a.column(1).amax() == 0.0 && a.column(2).amax() == 0.0);
        assert!(als_init(&cp, 4).is_err());
    }

    #[test]
    fn recovers_planted_low_rank_matrix() {
        let (g, u) = planted(12, 80, &[3.0, 2.0, 1.0], 1);
        let ms = MeasurementSet::from_gradients(&g, draw_sketches(12, 5, 80, 2).unwrap()).unwrap();
        let fit = pipeline(&ms, &AlsConfig::new(3));
        assert!(fit.trace.final_objective() <= 1e-8 * ms.norm(), "{:?}", fit.trace.final_objective());
        let sub = subspace_from_factors(&fit.factors, 3).unwrap();
        assert!(orthonormality_defect(&sub.basis) < 1e-10);
        let err = subspace_error(
            &SubspaceEstimate::new(u).unwrap(),
            &SubspaceEstimate::new(sub.basis.clone()).unwrap(),
        )
        .unwrap();
        assert!(err <= 1e-6, "subspace error {err}");
        // sigma_j^2 / M of A B^T equals that of G once the fit is exact.
        let want: Vec<f64> = [9.0, 4.0, 1.0].iter().map(|s| s / 80.0).collect();
        for (got, want) in sub.eigenvalue_estimates(80).iter().zip(want) {
            assert!((got - want).abs() < 1e-8);
        }
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = GradientMatrix::new(gaussian_matrix(10, 60, &mut rng)).unwrap();
        let ms = MeasurementSet::from_gradients(&g, draw_sketches(10, 6, 60, 5).unwrap()).unwrap();
        let fit = pipeline(&ms, &AlsConfig::new(3));
        assert!(fit.trace.objectives.len() >= 3);
        assert!(fit.trace.max_increase() <= 1e-12 * fit.trace.objectives[0]);
    }

    #[test]
    fn restarting_at_the_optimum_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = GradientMatrix::new(gaussian_matrix(8, 40, &mut rng)).unwrap();
        let ms = MeasurementSet::from_gradients(&g, draw_sketches(8, 5, 40, 7).unwrap()).unwrap();
        let mut cfg = AlsConfig::new(2);
        cfg.max_iterations = 2000;
        let fit = pipeline(&ms, &cfg);
        assert!(fit.trace.converged);
        let once = AlsConfig { max_iterations: 1, ..cfg };
        let again = als_fit(&ms, &once, &fit.factors.a).unwrap();
        let before = fit.trace.final_objective();
        let after = again.trace.final_objective();
        assert!((before - after).abs() <= cfg.tolerance * before, "{before} -> {after}");
    }

    #[test]
    fn rank_must_be_below_k() {
        let (g, _) = planted(6, 10, &[1.0], 3);
        let ms = MeasurementSet::from_gradients(&g, draw_sketches(6, 3, 10, 1).unwrap()).unwrap();
        let a0 = DMatrix::zeros(6, 3);
        assert!(matches!(als_fit(&ms, &AlsConfig::new(3), &a0), Err(Error::Argument(_))));
        assert!(matches!(als_fit(&ms, &AlsConfig::new(2), &DMatrix::zeros(5, 2)), Err(Error::Argument(_))));
    }

    #[test]
    fn zero_initial_column_needs_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = GradientMatrix::new(gaussian_matrix(6, 30, &mut rng)).unwrap();
        let ms = MeasurementSet::from_gradients(&g, draw_sketches(6, 4, 30, 9).unwrap()).unwrap();
        let mut a0 = gaussian_matrix(6, 2, &mut rng);
        a0.column_mut(1).fill(0.0);
        let err = als_fit(&ms, &AlsConfig::new(2), &a0).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
        let ridged = AlsConfig { ridge: 1e-10, ..AlsConfig::new(2) };
        let fit = als_fit(&ms, &ridged, &a0).unwrap();
        assert!(fit.trace.ridge_applied);
        assert!(fit.trace.final_objective().is_finite());
    }

    #[test]
    fn zero_measurements_converge_immediately() {
        let g = GradientMatrix::new(DMatrix::zeros(5, 8)).unwrap();
        let ms = MeasurementSet::from_gradients(&g, draw_sketches(5, 3, 8, 1).unwrap()).unwrap();
        let fit = als_fit(&ms, &AlsConfig::new(2), &DMatrix::identity(5, 2)).unwrap();
        assert!(fit.trace.converged);
        assert_eq!(fit.trace.final_objective(), 0.0);
    }

    #[test]
    fn factor_subspace_recovers_orthonormal_a() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_orthonormal(7, 3, &mut rng);
        // Columns of B orthogonal with descending norms 3, 2, 1.
        let mut b = random_orthonormal(20, 3, &mut rng);
        for (j, s) in [3.0, 2.0, 1.0].iter().enumerate() {
            b.column_mut(j).scale_mut(*s);
        }
        let f = LowRankFactors::new(a.clone(), b).unwrap();
        let sub = subspace_from_factors(&f, 3).unwrap();
        for j in 0..3 {
            assert!((sub.basis.column(j).dot(&a.column(j)).abs() - 1.0).abs() < 1e-12);
        }
        assert!((sub.singular_values[0] - 3.0).abs() < 1e-12);
        assert!(subspace_from_factors(&f, 4).is_err());
        assert_eq!(subspace_from_factors(&f, 1).unwrap().basis.ncols(), 1);
    }

    #[test]
    fn factor_subspace_matches_dense_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = LowRankFactors::new(gaussian_matrix(9, 4, &mut rng), gaussian_matrix(15, 4, &mut rng)).unwrap();
        let sub = subspace_from_factors(&f, 4).unwrap();
        let dense = f.product().singular_values();
        let mut dense: Vec<f64> = dense.iter().copied().collect();
        dense.sort_by(|x, y| y.total_cmp(x));
        for j in 0..4 {
            assert!((sub.singular_values[j] - dense[j]).abs() < 1e-10 * dense[0]);
        }
        let p = &sub.basis * sub.basis.transpose();
        assert!((&p * f.product() - f.product()).amax() < 1e-10 * f.product().amax());
    }
}
