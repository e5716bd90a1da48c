use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::model::{MeasurementConfig, MeasurementMode};
use crate::testfns::PoissonConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Quadratic,
    Pde,
    Zmodel,
}

impl Problem {
    pub fn tag(&self) -> &'static str {
        match self {
            Problem::Quadratic => "quadratic",
            Problem::Pde => "pde",
            Problem::Zmodel => "zmodel",
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "quadratic" => Ok(Problem::Quadratic),
            "pde" => Ok(Problem::Pde),
            "zmodel" => Ok(Problem::Zmodel),
            other => argument(format!("unknown problem '{other}' (quadratic, pde, zmodel)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => argument(format!("unknown format '{other}' (csv, json)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlsSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub ridge: f64,
}

impl Default for AlsSettings {
    fn default() -> Self {
        Self { max_iterations: 200, tolerance: 1e-8, ridge: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: Problem,
    /// Input dimension `m`.
    pub dim: usize,
    /// Number of gradient samples `M`.
    pub samples: usize,
    /// Measurement counts to sweep.
    pub ks: Vec<usize>,
    /// ALS rank `r`.
    pub rank: usize,
    /// Subspace dimension `n` used for the headline subspace error.
    pub active_dim: usize,
    pub trials: usize,
    pub measurement: MeasurementConfig,
    pub seed: u64,
    pub als: AlsSettings,
    /// The `k` whose per-dimension errors are reported in detail; ignored when
    /// it is not part of the sweep.
    pub detail_k: Option<usize>,
    /// Quadratic: index after which the Hessian spectrum drops.
    pub gap_after: usize,
    pub pde: PoissonConfig,
    /// z-model: planted weights, one per direction.
    pub zmodel_weights: Vec<f64>,
}

impl ExperimentConfig {
    pub fn preset(problem: Problem) -> Self {
        match problem {
            Problem::Quadratic => Self::quadratic(),
            Problem::Pde => Self::pde(),
            Problem::Zmodel => Self::zmodel(),
        }
    }

    /// `m = 10`, `M = 200`, `k = 4..=9`, `r = 4`, `n = 3`, 20 trials.
    pub fn quadratic() -> Self {
        Self {
            problem: Problem::Quadratic,
            dim: 10,
            samples: 200,
            ks: (4..=9).collect(),
            rank: 4,
            active_dim: 3,
            trials: 20,
            measurement: MeasurementConfig::exact(),
            seed: 1,
            als: AlsSettings::default(),
            detail_k: Some(7),
            gap_after: 3,
            pde: PoissonConfig::default(),
            zmodel_weights: vec![1.0, 0.7, 0.4],
        }
    }

    /// `m = 100`, `M = 300`, `k = 10, 30, ..., 90`, `r = 8`, `n = 1`, 20 trials.
    pub fn pde() -> Self {
        Self {
            problem: Problem::Pde,
            dim: 100,
            samples: 300,
            ks: vec![10, 30, 50, 70, 90],
            rank: 8,
            active_dim: 1,
            detail_k: Some(70),
            ..Self::quadratic()
        }
    }

    /// Planted three-dimensional subspace in `R^10`.
    pub fn zmodel() -> Self {
        Self {
            problem: Problem::Zmodel,
            samples: 1000,
            rank: 3,
            active_dim: 3,
            detail_k: Some(5),
            ..Self::quadratic()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return argument("need at least one trial");
        }
        if self.dim == 0 || self.samples == 0 {
            return argument("dimension and sample count must be positive");
        }
        if self.rank == 0 || self.rank > self.dim.min(self.samples) {
            return argument(format!("rank {} outside 1..=min(m, M)", self.rank));
        }
        if self.active_dim == 0 || self.active_dim > self.rank {
            return argument(format!(
                "active dimension {} must lie in 1..=rank ({})",
                self.active_dim, self.rank
            ));
        }
        // k <= r is accepted: the projection estimate is defined there, and the
        // ALS cells record the fit's precondition failure instead.
        for &k in &self.ks {
            if k == 0 || k > self.dim {
                return argument(format!("k={k} outside 1..=m (m={})", self.dim));
            }
        }
        if self.measurement.mode == MeasurementMode::FiniteDifference {
            MeasurementConfig::finite_difference(self.measurement.step)?;
            if self.problem == Problem::Zmodel {
                return argument("the z-model has no function to difference");
            }
        }
        match self.problem {
            Problem::Quadratic if self.gap_after == 0 || self.gap_after >= self.dim => {
                argument(format!("gap position {} must lie in 1..{}", self.gap_after, self.dim))
            }
            Problem::Pde if self.pde.params != self.dim => {
                argument("PDE parameter count must equal the dimension")
            }
            Problem::Zmodel if self.zmodel_weights.is_empty() || self.zmodel_weights.len() > self.dim => {
                argument("z-model needs between 1 and m weights")
            }
            _ => Ok(()),
        }
    }

    /// Override one field from its textual key and value.
    ///
    /// Recognised keys: `trials`, `seed`, `k`, `rank`, `active_dim` (`n`),
    /// `samples` (`M`), `dim` (`m`), `mode` (`exact`|`fd`), `h`,
    /// `max_iterations`, `tolerance`, `ridge`, `detail_k`, `gap_after`,
    /// `grid`, `correlation_length`, `weights`.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "trials" | "T" => self.trials = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "k" => self.ks = parse_list(key, value)?,
            "rank" | "r" => self.rank = parse(key, value)?,
            "active_dim" | "n" => self.active_dim = parse(key, value)?,
            "samples" | "M" => self.samples = parse(key, value)?,
            "dim" | "m" => {
                self.dim = parse(key, value)?;
                self.pde.params = self.dim;
            }
            "mode" => {
                self.measurement.mode = match value.to_ascii_lowercase().as_str() {
                    "exact" => MeasurementMode::Exact,
                    "fd" | "finite-difference" => MeasurementMode::FiniteDifference,
                    other => return argument(format!("unknown measurement mode '{other}'")),
                }
            }
            "h" => self.measurement.step = Some(parse(key, value)?),
            "max_iterations" => self.als.max_iterations = parse(key, value)?,
            "tolerance" => self.als.tolerance = parse(key, value)?,
            "ridge" => self.als.ridge = parse(key, value)?,
            "detail_k" => self.detail_k = Some(parse(key, value)?),
            "gap_after" => self.gap_after = parse(key, value)?,
            "grid" => self.pde.grid = parse(key, value)?,
            "correlation_length" => self.pde.correlation_length = parse(key, value)?,
            "weights" => self.zmodel_weights = parse_list(key, value)?,
            other => return argument(format!("unknown configuration key '{other}'")),
        }
        Ok(())
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Argument(format!("cannot parse '{value}' for '{key}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

/// Parse `key = value` lines. Blank lines and `#` comments are ignored.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("line {}: expected 'key = value'", lineno + 1)))?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for p in [Problem::Quadratic, Problem::Pde, Problem::Zmodel] {
            ExperimentConfig::preset(p).validate().unwrap();
        }
        let q = ExperimentConfig::quadratic();
        assert_eq!((q.dim, q.samples, q.rank, q.active_dim, q.trials), (10, 200, 4, 3, 20));
        assert_eq!(q.ks, vec![4, 5, 6, 7, 8, 9]);
        let p = ExperimentConfig::pde();
        assert_eq!((p.dim, p.samples, p.rank, p.active_dim), (100, 300, 8, 1));
        assert_eq!(p.ks, vec![10, 30, 50, 70, 90]);
    }

    #[test]
    fn overrides_apply() {
        let mut c = ExperimentConfig::quadratic();
        c.apply("k", "5, 6,9").unwrap();
        c.apply("trials", "3").unwrap();
        c.apply("mode", "fd").unwrap();
        c.apply("h", "1e-5").unwrap();
        c.apply("seed", "99").unwrap();
        assert_eq!(c.ks, vec![5, 6, 9]);
        assert_eq!(c.trials, 3);
        assert_eq!(c.measurement.mode, MeasurementMode::FiniteDifference);
        assert_eq!(c.measurement.step, Some(1e-5));
        assert_eq!(c.seed, 99);
        c.validate().unwrap();
        assert!(c.apply("bogus", "1").is_err());
        assert!(c.apply("trials", "x").is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = ExperimentConfig::quadratic();
        c.ks = vec![4, 11];
        assert!(c.validate().is_err());
        c.ks = vec![0];
        assert!(c.validate().is_err());
        c.ks = vec![5];
        c.rank = 11;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::quadratic();
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::zmodel();
        c.measurement = MeasurementConfig::finite_difference(None).unwrap();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::quadratic();
        c.ks.clear();
        c.validate().unwrap();
    }

    #[test]
    fn key_value_text() {
        let text = "# sweep\ntrials = 5\n\nk = 5,6 # inline\nseed=3\n";
        let kv = parse_key_values(text).unwrap();
        assert_eq!(kv, vec![
            ("trials".into(), "5".into()),
            ("k".into(), "5,6".into()),
            ("seed".into(), "3".into()),
        ]);
        assert!(parse_key_values("trials 5").is_err());
    }
}
