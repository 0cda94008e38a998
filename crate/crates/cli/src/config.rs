//! Experiment configuration: a JSON file merged under command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use axnet_core::{Activation, Benchmark, BenchmarkId, BudgetMode, CompareOptions, GatingMode, Method, TrainConfig};
use clap::Args;
use serde::Deserialize;

/// Optimizer fields accepted under `"train"`. Metric, bound and seed come
/// from the benchmark and the top-level keys instead.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub final_lr_fraction: Option<f64>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_iterations: Option<usize>,
    pub prediction_loss_weight: Option<f64>,
    pub trace_samples: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: Option<String>,
    pub benchmarks: Option<Vec<String>>,
    pub method: Option<String>,
    pub methods: Option<Vec<String>>,
    pub budget_mode: Option<String>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub gating: Option<String>,
    pub rounds: Option<usize>,
    pub control_activation: Option<String>,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub error_bound: Option<f64>,
    /// Approximation-subnet widths, e.g. `[2, 4, 1]`.
    pub approx: Option<Vec<usize>>,
    /// Prediction-subnet widths.
    pub pred: Option<Vec<usize>>,
    pub train: TrainSection,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Layer widths given on the command line.
#[derive(Debug, Clone)]
pub struct Widths(pub Vec<usize>);

/// `2-4-1` or `2,4,1`.
pub fn parse_widths(s: &str) -> Result<Widths, String> {
    let w: Result<Vec<usize>, _> = s.split(['-', ',']).map(|p| p.trim().parse::<usize>()).collect();
    match w {
        Ok(w) if w.len() >= 2 && w.iter().all(|&x| x > 0) => Ok(Widths(w)),
        _ => Err(format!("`{s}` is not a topology like 2-4-1")),
    }
}

/// Run settings shared by `train` and `compare`.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    #[arg(long)]
    pub gating: Option<String>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Activation of the control-vector slices.
    #[arg(long)]
    pub control_activation: Option<String>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Overrides the benchmark's bound (metric units).
    #[arg(long)]
    pub error_bound: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub final_lr_fraction: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub prediction_loss_weight: Option<f64>,
    #[arg(long)]
    pub trace_samples: Option<usize>,
}

pub fn benchmark(name: &str) -> Result<Benchmark> {
    Ok(Benchmark::get(BenchmarkId::parse(name)?))
}

pub fn method(name: &str) -> Result<Method> {
    Ok(Method::parse(name)?)
}

pub fn budget_mode(name: &str) -> Result<BudgetMode> {
    Ok(BudgetMode::parse(name)?)
}

impl RunFlags {
    pub fn options(&self, file: &ExperimentConfig) -> Result<CompareOptions> {
        let t = &file.train;
        let d = TrainConfig::default();
        let train = TrainConfig {
            learning_rate: self.learning_rate.or(t.learning_rate).unwrap_or(d.learning_rate),
            final_lr_fraction: self.final_lr_fraction.or(t.final_lr_fraction).unwrap_or(d.final_lr_fraction),
            adam_beta1: t.adam_beta1.unwrap_or(d.adam_beta1),
            adam_beta2: t.adam_beta2.unwrap_or(d.adam_beta2),
            adam_eps: t.adam_eps.unwrap_or(d.adam_eps),
            batch_size: self.batch_size.or(t.batch_size).unwrap_or(d.batch_size),
            max_iterations: self.max_iterations.or(t.max_iterations).unwrap_or(d.max_iterations),
            prediction_loss_weight: self
                .prediction_loss_weight
                .or(t.prediction_loss_weight)
                .unwrap_or(d.prediction_loss_weight),
            trace_samples: self.trace_samples.or(t.trace_samples).unwrap_or(d.trace_samples),
            ..d
        };
        train.validate()?;
        let base = CompareOptions::default();
        let gating = match self.gating.as_ref().or(file.gating.as_ref()) {
            Some(g) => GatingMode::parse(g)?,
            None => base.gating,
        };
        let control_activation = match self.control_activation.as_ref().or(file.control_activation.as_ref()) {
            Some(a) => Activation::parse(a)?,
            None => base.control_activation,
        };
        let error_bound = self.error_bound.or(file.error_bound);
        if let Some(e) = error_bound {
            if !(e > 0.0) {
                bail!("error bound must be > 0, got {e}");
            }
        }
        let opts = CompareOptions {
            train,
            error_bound,
            n_train: self.n_train.or(file.n_train).unwrap_or(base.n_train),
            n_test: self.n_test.or(file.n_test).unwrap_or(base.n_test),
            gating,
            rounds: self.rounds.or(file.rounds).unwrap_or(base.rounds),
            control_activation,
            threads: None,
        };
        if opts.n_train == 0 || opts.n_test == 0 {
            bail!("n_train and n_test must be positive");
        }
        if opts.rounds == 0 {
            bail!("rounds must be >= 1");
        }
        Ok(opts)
    }
}
