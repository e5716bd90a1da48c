//! Seeded multi-trial sweeps comparing the projection and ALS estimators
//! against a full-gradient reference.

mod config;
mod emit;
mod run;
mod seeds;

pub use config::{parse_key_values, AlsSettings, ExperimentConfig, OutputFormat, Problem};
pub use emit::{csv_string, emit_results, json_string, CSV_HEADER};
pub use run::{
    build_problem, reference_for, run_experiment, run_trial, run_with_instance, ExperimentResult, KSweep, Method,
    MethodErrors, MethodSummary, ProblemInstance, Reference, Timings, TrialErrors, TrialOutcome,
    TrialRecord, DETAIL_DIMS,
};
pub use seeds::derive_seed;
