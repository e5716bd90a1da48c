use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Problem};
use super::seeds::derive_seed;
use crate::error::Result;
use crate::estimators::{
    als_fit, als_init, draw_sketches, estimate_c_monte_carlo, estimate_c_projection,
    subspace_from_factors, AlsConfig, AlsTrace, GradientMatrix, MeasurementSet,
};
use crate::linalg::EigenDecomposition;
use crate::metrics::{eigenvalue_error, subspace_error, SubspaceEstimate, EIGENVALUE_TERMS};
use crate::model::{sample_inputs, DensityKind, FunctionModel, InputDensity, MeasurementMode};
use crate::testfns::{build_poisson_kl, build_quadratic, sample_z_model, ZModelSpec};

/// Subspace errors are also reported for dimensions `1..=DETAIL_DIMS`.
pub const DETAIL_DIMS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Eigenvectors of the projection estimate.
    Proj,
    /// Left singular vectors of the ALS factor model.
    Altmin,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Proj, Method::Altmin];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Proj => "proj",
            Method::Altmin => "altmin",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Gradients (and, when there is one, the model and inputs) for one experiment.
pub struct ProblemInstance {
    pub problem: Problem,
    pub model: Option<Box<dyn FunctionModel>>,
    pub inputs: Option<DMatrix<f64>>,
    pub gradients: GradientMatrix,
    pub input_seed: u64,
}

/// Build the problem and draw its inputs and exact gradients.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<ProblemInstance> {
    cfg.validate()?;
    let tag = cfg.problem.tag();
    let input_seed = derive_seed(cfg.seed, &format!("{tag}/inputs"), &[]);
    let with_model = |model: Box<dyn FunctionModel>, kind: DensityKind| -> Result<ProblemInstance> {
        let density = InputDensity::new(kind, cfg.dim)?;
        let inputs = sample_inputs(&density, cfg.samples, input_seed)?;
        let gradients = GradientMatrix::from_model(model.as_ref(), &inputs)?;
        Ok(ProblemInstance {
            problem: cfg.problem,
            model: Some(model),
            inputs: Some(inputs),
            gradients,
            input_seed,
        })
    };
    match cfg.problem {
        Problem::Quadratic => {
            let model = build_quadratic(cfg.dim, cfg.gap_after, derive_seed(cfg.seed, "quadratic/hessian", &[]))?;
            with_model(Box::new(model), DensityKind::UniformHypercube)
        }
        Problem::Pde => with_model(Box::new(build_poisson_kl(&cfg.pde)?), DensityKind::StandardGaussian),
        Problem::Zmodel => {
            let spec = ZModelSpec::planted(
                cfg.dim,
                cfg.zmodel_weights.clone(),
                derive_seed(cfg.seed, "zmodel/directions", &[]),
            )?;
            Ok(ProblemInstance {
                problem: cfg.problem,
                model: None,
                inputs: None,
                gradients: sample_z_model(&spec, cfg.samples, input_seed)?,
                input_seed,
            })
        }
    }
}

/// The full-gradient estimate the sketched estimators are scored against.
pub struct Reference {
    pub eig: EigenDecomposition,
    /// Subspaces of dimension `1..=min(DETAIL_DIMS, m)`.
    pub subspaces: Vec<SubspaceEstimate>,
}

impl Reference {
    pub fn leading_values(&self) -> Vec<f64> {
        self.eig.leading_values(EIGENVALUE_TERMS)
    }
}

pub fn reference_for(instance: &ProblemInstance) -> Result<Reference> {
    let eig = estimate_c_monte_carlo(&instance.gradients)?;
    let subspaces = (1..=DETAIL_DIMS.min(eig.dim()))
        .map(|n| SubspaceEstimate::leading(&eig, n))
        .collect::<Result<_>>()?;
    Ok(Reference { eig, subspaces })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodErrors {
    pub eigenvalue_error: f64,
    /// Error at the configured active dimension.
    pub subspace_error: f64,
    /// Entry `n - 1` holds the error at dimension `n`; `None` where the method
    /// has no subspace of that dimension.
    pub subspace_errors_by_dim: Vec<Option<f64>>,
    /// The first six eigenvalue estimates.
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialErrors {
    pub proj: MethodErrors,
    /// `None` when the fit could not run on this cell (e.g. `k <= r`).
    pub altmin: Option<MethodErrors>,
    pub als: Option<AlsTrace>,
    pub altmin_failure: Option<String>,
}

impl TrialErrors {
    pub fn method(&self, method: Method) -> Option<&MethodErrors> {
        match method {
            Method::Proj => Some(&self.proj),
            Method::Altmin => self.altmin.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status")]
pub enum TrialOutcome {
    Completed(TrialErrors),
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// Seed of the sketch stream; replaying it reproduces the trial.
    pub seed: u64,
    pub outcome: TrialOutcome,
}

impl TrialRecord {
    pub fn errors(&self) -> Option<&TrialErrors> {
        match &self.outcome {
            TrialOutcome::Completed(e) => Some(e),
            TrialOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Number of completed trials entering the means.
    pub trials: usize,
    pub eigenvalue_error_mean: Option<f64>,
    pub subspace_error_mean: Option<f64>,
    pub subspace_errors_by_dim_mean: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweep {
    pub k: usize,
    pub trials: Vec<TrialRecord>,
    pub summaries: Vec<MethodSummary>,
}

impl KSweep {
    pub fn summary(&self, method: Method) -> &MethodSummary {
        self.summaries
            .iter()
            .find(|s| s.method == method)
            .expect("every sweep summarises both methods")
    }
}

/// Wall-clock timings. Not serialised, so result files stay reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub reference_seconds: f64,
    pub sweep_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub input_seed: u64,
    pub reference_eigenvalues: Vec<f64>,
    pub sweeps: Vec<KSweep>,
    #[serde(skip)]
    pub timings: Timings,
}

impl ExperimentResult {
    pub fn sweep(&self, k: usize) -> Option<&KSweep> {
        self.sweeps.iter().find(|s| s.k == k)
    }

    pub fn als_traces(&self) -> impl Iterator<Item = &AlsTrace> {
        self.sweeps
            .iter()
            .flat_map(|s| &s.trials)
            .filter_map(|t| t.errors().and_then(|e| e.als.as_ref()))
    }

    pub fn failures(&self) -> usize {
        self.sweeps
            .iter()
            .flat_map(|s| &s.trials)
            .filter(|t| t.errors().map_or(true, |e| e.altmin.is_none()))
            .count()
    }
}

fn scored(
    reference: &Reference,
    eigenvalues: Vec<f64>,
    basis: &DMatrix<f64>,
    available: usize,
    active_dim: usize,
) -> Result<MethodErrors> {
    let eigenvalue_error = eigenvalue_error(&reference.leading_values(), &eigenvalues)?;
    let at = |n: usize| -> Result<f64> {
        let est = SubspaceEstimate::new(basis.columns(0, n).into_owned())?;
        let reference_n = match reference.subspaces.get(n - 1) {
            Some(s) => s.clone(),
            None => SubspaceEstimate::leading(&reference.eig, n)?,
        };
        subspace_error(&reference_n, &est)
    };
    let subspace_errors_by_dim = (1..=DETAIL_DIMS)
        .map(|n| if n <= available.min(reference.eig.dim()) { at(n).map(Some) } else { Ok(None) })
        .collect::<Result<_>>()?;
    Ok(MethodErrors { eigenvalue_error, subspace_error: at(active_dim)?, subspace_errors_by_dim, eigenvalues })
}

/// One `(k, trial)` cell: draw sketches from `seed`, measure, run both
/// estimators on the same measurements, and score them against `reference`.
pub fn run_trial(
    cfg: &ExperimentConfig,
    instance: &ProblemInstance,
    reference: &Reference,
    k: usize,
    seed: u64,
) -> Result<TrialErrors> {
    let g = &instance.gradients;
    let sketches = draw_sketches(g.dim(), k, g.count(), seed)?;
    let ms = match (cfg.measurement.mode, &instance.model, &instance.inputs) {
        (MeasurementMode::FiniteDifference, Some(model), Some(inputs)) => {
            MeasurementSet::from_model(model.as_ref(), inputs, sketches, &cfg.measurement)?
        }
        (MeasurementMode::FiniteDifference, _, _) => {
            return crate::error::argument("finite-difference measurements need a function model")
        }
        (MeasurementMode::Exact, _, _) => MeasurementSet::from_gradients(g, sketches)?,
    };

    let cp = estimate_c_projection(&ms)?;
    let proj = scored(
        reference,
        cp.leading_values(EIGENVALUE_TERMS),
        &cp.eigenvectors,
        cp.dim(),
        cfg.active_dim,
    )?;

    let fitted = || -> Result<(MethodErrors, AlsTrace)> {
        let als_cfg = AlsConfig {
            rank: cfg.rank,
            max_iterations: cfg.als.max_iterations,
            tolerance: cfg.als.tolerance,
            ridge: cfg.als.ridge,
        };
        let a0 = als_init(&cp, cfg.rank)?;
        let fit = als_fit(&ms, &als_cfg, &a0)?;
        let sub = subspace_from_factors(&fit.factors, cfg.rank)?;
        let mut als_values = sub.eigenvalue_estimates(g.count());
        als_values.resize(EIGENVALUE_TERMS, 0.0);
        let errors = scored(reference, als_values, &sub.basis, cfg.rank, cfg.active_dim)?;
        Ok((errors, fit.trace))
    };

    // A failed fit does not discard the projection result of the same cell.
    Ok(match fitted() {
        Ok((altmin, trace)) => TrialErrors { proj, altmin: Some(altmin), als: Some(trace), altmin_failure: None },
        Err(e) => TrialErrors { proj, altmin: None, als: None, altmin_failure: Some(e.to_string()) },
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn summarise(method: Method, trials: &[TrialRecord]) -> MethodSummary {
    let done: Vec<&MethodErrors> = trials.iter().filter_map(|t| t.errors()?.method(method)).collect();
    MethodSummary {
        method,
        trials: done.len(),
        eigenvalue_error_mean: mean(done.iter().map(|e| e.eigenvalue_error)),
        subspace_error_mean: mean(done.iter().map(|e| e.subspace_error)),
        subspace_errors_by_dim_mean: (0..DETAIL_DIMS)
            .map(|d| {
                if done.iter().all(|e| e.subspace_errors_by_dim[d].is_some()) {
                    mean(done.iter().filter_map(|e| e.subspace_errors_by_dim[d]))
                } else {
                    None
                }
            })
            .collect(),
    }
}

/// Run the full sweep: one reference, then `trials` independent sketch draws
/// for every `k`. A failing cell is recorded and the sweep continues.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let started = Instant::now();
    let instance = build_problem(cfg)?;
    let mut res = run_with_instance(cfg, &instance)?;
    res.timings.reference_seconds += started.elapsed().as_secs_f64() - res.timings.sweep_seconds;
    Ok(res)
}

/// [`run_experiment`] on an already built problem.
pub fn run_with_instance(cfg: &ExperimentConfig, instance: &ProblemInstance) -> Result<ExperimentResult> {
    cfg.validate()?;
    let started = Instant::now();
    let reference = reference_for(instance)?;
    let reference_seconds = started.elapsed().as_secs_f64();

    let tag = cfg.problem.tag();
    let cells: Vec<(usize, usize, u64)> = cfg
        .ks
        .iter()
        .flat_map(|&k| (0..cfg.trials).map(move |t| (k, t)))
        .map(|(k, t)| (k, t, derive_seed(cfg.seed, tag, &[k as u64, t as u64])))
        .collect();

    let sweep_started = Instant::now();
    let records: Vec<TrialRecord> = cells
        .par_iter()
        .map(|&(k, trial, seed)| TrialRecord {
            trial,
            seed,
            outcome: match run_trial(cfg, instance, &reference, k, seed) {
                Ok(e) => TrialOutcome::Completed(e),
                Err(e) => TrialOutcome::Failed { reason: e.to_string() },
            },
        })
        .collect();
    let sweep_seconds = sweep_started.elapsed().as_secs_f64();

    let sweeps = if cfg.trials == 0 {
        Vec::new()
    } else {
        cfg.ks
            .iter()
            .zip(records.chunks(cfg.trials))
            .map(|(&k, chunk)| KSweep {
                k,
                trials: chunk.to_vec(),
                summaries: Method::ALL.iter().map(|&m| summarise(m, chunk)).collect(),
            })
            .collect()
    };

    Ok(ExperimentResult {
        config: cfg.clone(),
        input_seed: instance.input_seed,
        reference_eigenvalues: reference.leading_values(),
        sweeps,
        timings: Timings { reference_seconds, sweep_seconds },
    })
}
