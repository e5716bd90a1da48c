//! Independent oracles for the integration tests.

#![allow(dead_code)]

use gradsketch::testfns::PoissonKLModel;
use gradsketch::{DMatrix, DVector};
use num_complex::Complex64;

/// Dense complex solve by Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Vec<Complex64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for c in col..n {
                let v = a[col][c];
                a[row][c] -= factor * v;
            }
            let v = b[col];
            b[row] -= factor * v;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for c in row + 1..n {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    x
}

/// The diffusion quantity of interest rebuilt from scratch as a dense system:
/// five-point finite volumes, harmonic face coefficients, `u = 0` on the left,
/// bottom and top sides (half-cell distance), insulated right side, load
/// `forcing * h^2`, evaluated at a complex parameter vector.
pub fn dense_qoi(model: &PoissonKLModel, x: &[Complex64]) -> Complex64 {
    let n = model.grid();
    let cells = n * n;
    let modes = model.kl_modes();
    let a: Vec<Complex64> = (0..cells)
        .map(|p| (0..x.len()).map(|j| x[j] * modes[(p, j)]).sum::<Complex64>().exp())
        .collect();
    let zero = Complex64::new(0.0, 0.0);
    let mut k = vec![vec![zero; cells]; cells];
    let idx = |i: usize, j: usize| j * n + i;
    for j in 0..n {
        for i in 0..n {
            let p = idx(i, j);
            let mut neighbours = Vec::new();
            if i > 0 {
                neighbours.push(idx(i - 1, j));
            }
            if i + 1 < n {
                neighbours.push(idx(i + 1, j));
            }
            if j > 0 {
                neighbours.push(idx(i, j - 1));
            }
            if j + 1 < n {
                neighbours.push(idx(i, j + 1));
            }
            for q in neighbours {
                let t = 2.0 * a[p] * a[q] / (a[p] + a[q]);
                k[p][p] += t;
                k[p][q] -= t;
            }
            let dirichlet_sides = [i == 0, j == 0, j == n - 1].iter().filter(|&&s| s).count();
            k[p][p] += 2.0 * a[p] * dirichlet_sides as f64;
        }
    }
    let h = model.spacing();
    let b = vec![Complex64::new(model.forcing() * h * h, 0.0); cells];
    let u = dense_solve(k, b);
    let q = model.qoi_weights();
    (0..cells).map(|p| u[p] * q[p]).sum()
}

/// Complex-step sensitivities `Im f(x + i t e_j) / t`, free of cancellation.
pub fn complex_step_gradient(model: &PoissonKLModel, x: &DVector<f64>) -> DVector<f64> {
    let t = 1e-30;
    DVector::from_fn(x.len(), |j, _| {
        let z: Vec<Complex64> = (0..x.len())
            .map(|i| Complex64::new(x[i], if i == j { t } else { 0.0 }))
            .collect();
        dense_qoi(model, &z).im / t
    })
}

/// `||U U^T - W W^T||_2`, the projector-distance form of the subspace error.
pub fn projector_distance(u: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    let d = u * u.transpose() - w * w.transpose();
    d.singular_values().max()
}
