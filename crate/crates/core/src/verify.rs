//! Acceptance checks, shared by `ascli verify` and the acceptance test target.
//!
//! Every check returns a [`Check`] with a one-line diagnostic; runtime limits
//! are part of the pass condition.

use std::fmt;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::estimators::{
    als_fit, als_init, draw_sketches, estimate_c_monte_carlo, estimate_c_projection, AlsConfig,
    GradientMatrix, MeasurementSet,
};
use crate::harness::{
    build_problem, csv_string, derive_seed, reference_for, run_with_instance, ExperimentConfig,
    ExperimentResult, Method, Problem,
};
use crate::linalg::random_orthonormal;
use crate::metrics::{eigenvalue_error, subspace_error, SubspaceEstimate, EIGENVALUE_TERMS};
use crate::model::{sample_inputs, DensityKind, FunctionModel, InputDensity};
use crate::testfns::{build_poisson_kl, build_quadratic, sample_z_model, ZModelSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Check {
    fn new(id: u8, title: &'static str, ok: bool, detail: String, seconds: f64, limit: Option<f64>) -> Self {
        let within = limit.map_or(true, |l| seconds <= l);
        let detail = match limit {
            Some(l) if !within => format!("{detail}; runtime {seconds:.1}s exceeds {l}s"),
            _ => detail,
        };
        Self { id, title, passed: ok && within, detail, seconds }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {:>2} {} ({:.1}s): {}", self.id, self.title, self.seconds, self.detail)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4e}"))
}

/// `M = 50000` exact quadratic gradients against the analytic
/// spectrum `d_i^2 / 3` and the eigenvectors of `H`.
pub fn spectrum_oracle(cfg: &ExperimentConfig) -> Result<Check> {
    let started = Instant::now();
    let model = build_quadratic(cfg.dim, cfg.gap_after, derive_seed(cfg.seed, "quadratic/hessian", &[]))?;
    let density = InputDensity::new(DensityKind::UniformHypercube, cfg.dim)?;
    let inputs = sample_inputs(&density, 50_000, derive_seed(cfg.seed, "quadratic/oracle-inputs", &[]))?;
    let c = estimate_c_monte_carlo(&GradientMatrix::from_model(&model, &inputs)?)?;

    let analytic: Vec<f64> = model.c_eigenvalues().into_iter().take(EIGENVALUE_TERMS).collect();
    let eig_err = eigenvalue_error(&analytic, &c.leading_values(EIGENVALUE_TERMS))?;
    let sub_err = subspace_error(
        &SubspaceEstimate::leading(model.hessian_eigen(), 3)?,
        &SubspaceEstimate::leading(&c, 3)?,
    )?;
    Ok(Check::new(
        1,
        "quadratic spectrum oracle",
        eig_err <= 0.05 && sub_err <= 0.05,
        format!("eigenvalue_error {eig_err:.3e} (<= 0.05), subspace_error n=3 {sub_err:.3e} (<= 0.05)"),
        started.elapsed().as_secs_f64(),
        Some(10.0),
    ))
}

/// `k = m` sketches. The projection estimate must reproduce the
/// reference; the rank-`r` fit must drive its objective to `1e-8 ||M(G)||`.
pub fn full_measurement(cfg: &ExperimentConfig) -> Result<Check> {
    let started = Instant::now();
    let cfg = ExperimentConfig { ks: vec![cfg.dim], trials: 1, ..cfg.clone() };
    let instance = build_problem(&cfg)?;
    let reference = reference_for(&instance)?;
    let g = &instance.gradients;
    let seed = derive_seed(cfg.seed, cfg.problem.tag(), &[cfg.dim as u64, 0]);
    let ms = MeasurementSet::from_gradients(g, draw_sketches(g.dim(), cfg.dim, g.count(), seed)?)?;

    let cp = estimate_c_projection(&ms)?;
    let eig_err = eigenvalue_error(&reference.leading_values(), &cp.leading_values(EIGENVALUE_TERMS))?;
    let sub_err = subspace_error(
        &SubspaceEstimate::leading(&reference.eig, cfg.active_dim)?,
        &SubspaceEstimate::leading(&cp, cfg.active_dim)?,
    )?;

    let als_cfg = AlsConfig {
        rank: cfg.rank,
        max_iterations: cfg.als.max_iterations,
        tolerance: cfg.als.tolerance,
        ridge: cfg.als.ridge,
    };
    // The fit needs r < k; k = m = r leaves nothing to check against.
    let (als_ok, als_detail) = if cfg.rank < cfg.dim {
        let fit = als_fit(&ms, &als_cfg, &als_init(&cp, cfg.rank)?)?;
        let rel = fit.trace.final_objective() / ms.norm();
        (rel <= 1e-8, format!("ALS r={} objective/||M(G)|| {rel:.3e} (<= 1e-8)", cfg.rank))
    } else {
        (false, format!("ALS needs r < k, got r={} k={}", cfg.rank, cfg.dim))
    };
    Ok(Check::new(
        2,
        "exact recovery at k = m",
        eig_err <= 1e-8 && sub_err <= 1e-8 && als_ok,
        format!(
            "proj eigenvalue_error {eig_err:.3e} (<= 1e-8), proj subspace_error n={} {sub_err:.3e} (<= 1e-8), {als_detail}",
            cfg.active_dim
        ),
        started.elapsed().as_secs_f64(),
        Some(5.0),
    ))
}

/// ALS mean subspace error at most the projection's plus
/// `margin` for every swept `k > r`.
pub fn als_dominance(res: &ExperimentResult, margin: f64, limit_seconds: f64) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for sweep in res.sweeps.iter().filter(|s| s.k > res.config.rank) {
        let proj = sweep.summary(Method::Proj).subspace_error_mean;
        let als = sweep.summary(Method::Altmin).subspace_error_mean;
        let good = matches!((proj, als), (Some(p), Some(a)) if a <= p + margin);
        ok &= good;
        parts.push(format!(
            "k={} altmin {} vs proj {}{}",
            sweep.k,
            fmt_opt(als),
            fmt_opt(proj),
            if good { "" } else { " FAIL" }
        ));
    }
    if parts.is_empty() {
        ok = false;
        parts.push("no k above the rank in the sweep".into());
    }
    Check::new(
        3,
        "ALS dominance over projection",
        ok,
        parts.join("; "),
        res.timings.reference_seconds + res.timings.sweep_seconds,
        Some(limit_seconds),
    )
}

/// For each method, the mean subspace error at the largest `k`
/// is strictly below that at the smallest `k`.
pub fn monotone_improvement(res: &ExperimentResult) -> Check {
    let (Some(lo), Some(hi)) = (res.sweeps.first(), res.sweeps.last()) else {
        return Check::new(4, "improvement with k", false, "empty sweep".into(), 0.0, None);
    };
    let mut ok = lo.k < hi.k;
    let mut parts = Vec::new();
    for method in Method::ALL {
        let a = lo.summary(method).subspace_error_mean;
        let b = hi.summary(method).subspace_error_mean;
        let good = matches!((a, b), (Some(a), Some(b)) if b < a);
        ok &= good;
        let why = match (a, b) {
            (None, _) | (_, None) => " FAIL (no estimate; the fit requires r < k)",
            _ if !good => " FAIL",
            _ => "",
        };
        parts.push(format!("{method}: k={} {} -> k={} {}{why}", lo.k, fmt_opt(a), hi.k, fmt_opt(b)));
    }
    Check::new(4, "improvement with k", ok, parts.join("; "), 0.0, None)
}

/// Every recorded ALS objective trace is non-increasing to 1e-12
/// (relative to the trace's first value).
pub fn als_monotone(results: &[&ExperimentResult]) -> Check {
    let mut traces = 0usize;
    let mut worst = 0.0_f64;
    for res in results {
        for t in res.als_traces() {
            traces += 1;
            let scale = t.objectives.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
            worst = worst.max(t.max_increase() / scale);
        }
    }
    Check::new(
        5,
        "ALS objective monotonicity",
        traces > 0 && worst <= 1e-12,
        format!("{traces} traces, worst relative increase {worst:.3e} (<= 1e-12)"),
        0.0,
        None,
    )
}

/// Projection-estimate consistency on the planted z-model,
/// `M = 10^2` against `M = 10^4`, averaged over 10 seeds.
pub fn zmodel_consistency(seed: u64) -> Result<Check> {
    let started = Instant::now();
    let (m, k, weights) = (10, 5, vec![1.0, 0.7, 0.4]);
    let mut err_small = 0.0;
    let mut err_large = 0.0;
    for s in 0..10u64 {
        let spec = ZModelSpec::planted(m, weights.clone(), derive_seed(seed, "zmodel/directions", &[s]))?;
        let truth = SubspaceEstimate::new(spec.directions().clone())?;
        for (count, acc) in [(100usize, &mut err_small), (10_000, &mut err_large)] {
            let g = sample_z_model(&spec, count, derive_seed(seed, "zmodel/inputs", &[s, count as u64]))?;
            let sk = draw_sketches(m, k, count, derive_seed(seed, "zmodel", &[k as u64, s, count as u64]))?;
            let cp = estimate_c_projection(&MeasurementSet::from_gradients(&g, sk)?)?;
            *acc += subspace_error(&truth, &SubspaceEstimate::leading(&cp, 3)?)? / 10.0;
        }
    }
    Ok(Check::new(
        6,
        "projection consistency on the z-model",
        err_large < err_small && err_large < 0.2,
        format!("mean subspace error M=1e2 {err_small:.3e}, M=1e4 {err_large:.3e} (< both 0.2 and the M=1e2 value)"),
        started.elapsed().as_secs_f64(),
        Some(30.0),
    ))
}

/// The adjoint gradient of the PDE model
/// against central differences with `h = 1e-5` at five random inputs.
pub fn adjoint_vs_finite_differences(cfg: &ExperimentConfig) -> Result<Check> {
    let started = Instant::now();
    let model = build_poisson_kl(&cfg.pde)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "pde/adjoint-check", &[]));
    let h = 1e-5;
    let mut worst = 0.0_f64;
    let mut compared = 0usize;
    for _ in 0..5 {
        let x = DVector::from_fn(model.dim(), |_, _| StandardNormal.sample(&mut rng));
        let grad = model.gradient(&x)?;
        for j in 0..model.dim() {
            if grad[j].abs() <= 1e-12 {
                continue;
            }
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let fd = (model.evaluate(&xp)? - model.evaluate(&xm)?) / (2.0 * h);
            worst = worst.max((fd - grad[j]).abs() / grad[j].abs());
            compared += 1;
        }
    }
    Ok(Check::new(
        7,
        "adjoint gradient vs central differences",
        compared > 0 && worst <= 1e-4,
        format!("{compared} components, worst relative error {worst:.3e} (<= 1e-4)"),
        started.elapsed().as_secs_f64(),
        Some(30.0),
    ))
}

/// Dominant one-dimensional reference subspace, ALS improvement
/// from `k_lo` to `k_hi`, and ALS no worse than projection at `ks_compare`.
pub fn pde_shape(res: &ExperimentResult, k_lo: usize, k_hi: usize, ks_compare: &[usize]) -> Check {
    let ev = &res.reference_eigenvalues;
    let gap = if ev.len() > 1 && ev[1] > 0.0 { ev[0] / ev[1] } else { f64::INFINITY };
    let mut ok = gap >= 10.0;
    let mut parts = vec![format!("lambda1/lambda2 {gap:.3e} (>= 10)")];

    let als = |k: usize| res.sweep(k).and_then(|s| s.summary(Method::Altmin).subspace_error_mean);
    let proj = |k: usize| res.sweep(k).and_then(|s| s.summary(Method::Proj).subspace_error_mean);
    let ratio_ok = matches!((als(k_lo), als(k_hi)), (Some(lo), Some(hi)) if hi <= 0.5 * lo);
    ok &= ratio_ok;
    parts.push(format!(
        "altmin k={k_hi} {} vs 0.5 x k={k_lo} {}{}",
        fmt_opt(als(k_hi)),
        fmt_opt(als(k_lo)),
        if ratio_ok { "" } else { " FAIL" }
    ));
    for &k in ks_compare {
        let good = matches!((als(k), proj(k)), (Some(a), Some(p)) if a <= p);
        ok &= good;
        parts.push(format!(
            "k={k} altmin {} vs proj {}{}",
            fmt_opt(als(k)),
            fmt_opt(proj(k)),
            if good { "" } else { " FAIL" }
        ));
    }
    Check::new(
        8,
        "PDE qualitative reproduction",
        ok,
        parts.join("; "),
        res.timings.reference_seconds + res.timings.sweep_seconds,
        Some(900.0),
    )
}

/// Randomized spot check of the metric properties.
pub fn metric_properties(seed: u64) -> Result<Check> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "metrics/check", &[]));
    let mut failures = Vec::new();
    let mut cases = 0usize;
    for m in 2..=8 {
        for n in 1..m {
            cases += 1;
            let full = random_orthonormal(m, m, &mut rng);
            let u = SubspaceEstimate::new(full.columns(0, n).into_owned())?;
            let w = SubspaceEstimate::new(random_orthonormal(m, n, &mut rng))?;
            let rot = random_orthonormal(n, n, &mut rng);
            let u_rot = SubspaceEstimate::new(u.basis() * rot)?;

            let d = subspace_error(&u, &w)?;
            if !(0.0..=1.0).contains(&d) {
                failures.push(format!("m={m} n={n}: {d} outside [0,1]"));
            }
            if (d - subspace_error(&w, &u)?).abs() > 1e-12 {
                failures.push(format!("m={m} n={n}: not symmetric"));
            }
            if (d - subspace_error(&u_rot, &w)?).abs() > 1e-12 {
                failures.push(format!("m={m} n={n}: not rotation invariant"));
            }
            if subspace_error(&u, &u_rot)? > 1e-12 {
                failures.push(format!("m={m} n={n}: identical subspaces not at 0"));
            }
            if 2 * n <= m {
                let v = SubspaceEstimate::new(full.columns(n, n).into_owned())?;
                if (subspace_error(&u, &v)? - 1.0).abs() > 1e-12 {
                    failures.push(format!("m={m} n={n}: orthogonal subspaces not at 1"));
                }
            }
        }
    }
    let lam: Vec<f64> = (0..EIGENVALUE_TERMS).map(|i| 2f64.powi(-(i as i32))).collect();
    let est: Vec<f64> = lam.iter().map(|v| v * 1.1).collect();
    let scaled = |c: f64| -> Vec<f64> { lam.iter().map(|v| v * c).collect() };
    let scaled_est = |c: f64| -> Vec<f64> { est.iter().map(|v| v * c).collect() };
    if eigenvalue_error(&lam, &lam)? != 0.0 {
        failures.push("eigenvalue_error not 0 on identity".into());
    }
    let base = eigenvalue_error(&lam, &est)?;
    for c in [1e-3, 0.5, 7.0] {
        if (eigenvalue_error(&scaled(c), &scaled_est(c))? - base).abs() > 1e-12 * base {
            failures.push(format!("eigenvalue_error changes under scaling by {c}"));
        }
    }
    let ok = failures.is_empty();
    Ok(Check::new(
        9,
        "metric properties",
        ok,
        if ok { format!("{cases} subspace cases and eigenvalue scaling hold") } else { failures.join("; ") },
        started.elapsed().as_secs_f64(),
        Some(5.0),
    ))
}

/// A rerun with the same master seed gives byte-identical CSV.
pub fn determinism(first: &ExperimentResult) -> Result<Check> {
    let started = Instant::now();
    let instance = build_problem(&first.config)?;
    let again = run_with_instance(&first.config, &instance)?;
    let (a, b) = (csv_string(first)?, csv_string(&again)?);
    let ok = a == b;
    let detail = if ok {
        format!("{} bytes identical", a.len())
    } else {
        let line = a.lines().zip(b.lines()).position(|(x, y)| x != y).map_or(0, |i| i + 1);
        format!("CSV differs (first differing line {line})")
    };
    Ok(Check::new(10, "deterministic CSV", ok, detail, started.elapsed().as_secs_f64(), None))
}

/// Run the checks that apply to one preset: the quadratic preset covers
/// checks 1-6, 9 and 10; the PDE preset covers 5, 7, 8 and 10.
///
/// `progress` is called with each check as soon as it finishes.
pub fn verify_preset(cfg: &ExperimentConfig, mut progress: impl FnMut(&Check)) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut push = |c: Check, out: &mut Vec<Check>| {
        progress(&c);
        out.push(c);
    };
    let run = |cfg: &ExperimentConfig| -> Result<ExperimentResult> {
        let started = Instant::now();
        let instance = build_problem(cfg)?;
        let mut res = run_with_instance(cfg, &instance)?;
        res.timings.reference_seconds = started.elapsed().as_secs_f64() - res.timings.sweep_seconds;
        Ok(res)
    };
    match cfg.problem {
        Problem::Quadratic => {
            push(spectrum_oracle(cfg)?, &mut out);
            push(full_measurement(cfg)?, &mut out);
            let res = run(cfg)?;
            push(als_dominance(&res, 0.02, 60.0), &mut out);
            push(monotone_improvement(&res), &mut out);
            push(als_monotone(&[&res]), &mut out);
            push(zmodel_consistency(cfg.seed)?, &mut out);
            push(metric_properties(cfg.seed)?, &mut out);
            push(determinism(&res)?, &mut out);
        }
        Problem::Pde => {
            push(adjoint_vs_finite_differences(cfg)?, &mut out);
            let res = run(cfg)?;
            push(pde_shape(&res, 10, 90, &[50, 70, 90]), &mut out);
            push(als_monotone(&[&res]), &mut out);
            push(determinism(&res)?, &mut out);
        }
        Problem::Zmodel => {
            push(zmodel_consistency(cfg.seed)?, &mut out);
            let res = run(cfg)?;
            push(als_monotone(&[&res]), &mut out);
            push(determinism(&res)?, &mut out);
        }
    }
    Ok(out)
}
