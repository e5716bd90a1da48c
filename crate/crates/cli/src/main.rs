//! `ascli`: run the sketched active-subspace sweeps and the acceptance checks.
//!
//! Settings are layered: preset defaults, then `key = value` lines from
//! `--config`, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use gradsketch::harness::{
    emit_results, parse_key_values, run_experiment, ExperimentConfig, ExperimentResult, Method, OutputFormat,
    Problem,
};
use gradsketch::verify::verify_preset;

#[derive(Parser)]
#[command(name = "ascli", version, about = "Active subspaces from sketched gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a measurement sweep and write `<out>/<preset>.<format>`.
    Run {
        #[command(flatten)]
        settings: Settings,
        /// Output directory, created if missing.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// csv or json (config key `format`).
        #[arg(long)]
        format: Option<String>,
    },
    /// Run the acceptance checks for a preset; exits nonzero if any fails.
    Verify {
        #[command(flatten)]
        settings: Settings,
    },
}

#[derive(Args)]
struct Settings {
    /// quadratic, pde or zmodel (config key `preset`).
    #[arg(long)]
    preset: Option<String>,
    /// File of `key = value` lines; flags given here take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Comma-separated measurement counts, e.g. 4,5,6.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    rank: Option<String>,
    /// exact or fd.
    #[arg(long)]
    mode: Option<String>,
    /// Finite-difference step.
    #[arg(long)]
    h: Option<String>,
    /// Any other configuration key, e.g. --set max_iterations=500.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

/// Layered `key = value` pairs: file first, flags after, so flags win.
fn layered(settings: &Settings) -> anyhow::Result<Vec<(String, String)>> {
    let mut pairs = match &settings.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_key_values(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => Vec::new(),
    };
    let flags = [
        ("preset", &settings.preset),
        ("trials", &settings.trials),
        ("seed", &settings.seed),
        ("k", &settings.k),
        ("rank", &settings.rank),
        ("mode", &settings.mode),
        ("h", &settings.h),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            pairs.push((key.to_string(), v.clone()));
        }
    }
    for kv in &settings.set {
        let Some((k, v)) = kv.split_once('=') else { bail!("--set expects KEY=VALUE, got '{kv}'") };
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Resolve the preset and apply the remaining pairs in order. `format` is
/// returned separately since it is not part of the experiment.
fn resolve(pairs: &[(String, String)]) -> anyhow::Result<(ExperimentConfig, Option<OutputFormat>)> {
    let preset = pairs.iter().rev().find(|(k, _)| k == "preset").map(|(_, v)| v.as_str());
    let Some(preset) = preset else { bail!("no preset given (--preset quadratic|pde|zmodel)") };
    let mut cfg = ExperimentConfig::preset(preset.parse::<Problem>()?);
    let mut format = None;
    for (key, value) in pairs {
        match key.as_str() {
            "preset" => {}
            "format" => format = Some(value.parse()?),
            _ => cfg.apply(key, value)?,
        }
    }
    cfg.validate()?;
    Ok((cfg, format))
}

fn print_summary(res: &ExperimentResult) {
    println!("{:>5}  {:>12}  {:>12}  {:>12}  {:>12}", "k", "proj eig", "proj sub", "altmin eig", "altmin sub");
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4e}"));
    for s in &res.sweeps {
        let (p, a) = (s.summary(Method::Proj), s.summary(Method::Altmin));
        println!(
            "{:>5}  {:>12}  {:>12}  {:>12}  {:>12}",
            s.k,
            cell(p.eigenvalue_error_mean),
            cell(p.subspace_error_mean),
            cell(a.eigenvalue_error_mean),
            cell(a.subspace_error_mean)
        );
    }
    let failed = res.failures();
    if failed > 0 {
        println!("{failed} trial(s) had a failed estimator; see the JSON output for reasons");
    }
}

fn run(settings: &Settings, out: &Path, format: Option<&String>) -> anyhow::Result<()> {
    let mut pairs = layered(settings)?;
    if let Some(f) = format {
        pairs.push(("format".into(), f.clone()));
    }
    let (cfg, format) = resolve(&pairs)?;
    let format = format.unwrap_or(OutputFormat::Csv);
    let res = run_experiment(&cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(format!("{}.{}", cfg.problem.tag(), format.extension()));
    emit_results(&res, format, &path)?;
    print_summary(&res);
    println!("wrote {}", path.display());
    Ok(())
}

fn verify(settings: &Settings) -> anyhow::Result<bool> {
    let (cfg, _) = resolve(&layered(settings)?)?;
    let checks = verify_preset(&cfg, |c| println!("{c}"))?;
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.id.to_string()).collect();
    if failed.is_empty() {
        println!("all {} checks passed", checks.len());
        Ok(true)
    } else {
        eprintln!("{} of {} checks failed: {}", failed.len(), checks.len(), failed.join(", "));
        Ok(false)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { settings, out, format } => run(settings, out, format.as_ref()).map(|()| true),
        Command::Verify { settings } => verify(settings),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
