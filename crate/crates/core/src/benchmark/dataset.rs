use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Benchmark, BenchmarkId, ErrorMetric, Interval, Scorer};
use crate::error::{Error, Result};
use crate::rng::{seeded, Stream};

pub const SIDECAR_VERSION: u32 = 1;

/// Per-dimension affine map of `[lo, hi]` onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Normalizer {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                what: "normalizer bounds",
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(h > l)) {
            return Err(Error::config("normalizer needs hi > lo in every dimension"));
        }
        Ok(Normalizer { lo, hi })
    }

    pub fn identity(width: usize) -> Self {
        Normalizer {
            lo: vec![0.0; width],
            hi: vec![1.0; width],
        }
    }

    pub fn from_intervals(ivs: &[Interval]) -> Result<Self> {
        Self::new(ivs.iter().map(|i| i.lo).collect(), ivs.iter().map(|i| i.hi).collect())
    }

    pub fn width(&self) -> usize {
        self.lo.len()
    }

    pub fn normalize(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(x, (l, h))| (x - l) / (h - l))
            .collect()
    }

    pub fn denormalize(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(x, (l, h))| l + x * (h - l))
            .collect()
    }
}

/// Samples of one benchmark. The first `n_train` samples form the training
/// split and the rest the test split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub benchmark: BenchmarkId,
    pub seed: u64,
    n_train: usize,
    raw_inputs: Vec<Vec<f64>>,
    raw_targets: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    pub input_norm: Normalizer,
    pub target_norm: Normalizer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    format_version: u32,
    benchmark: BenchmarkId,
    seed: u64,
    n_train: usize,
    n_test: usize,
    input_domain: Vec<Interval>,
    input_normalizer: Normalizer,
    target_normalizer: Normalizer,
}

/// Draws `n_train + n_test` inputs uniformly from the benchmark domain
/// (rejection-sampled where the domain is not a box) and evaluates exact
/// targets.
pub fn generate_dataset(b: &Benchmark, n_train: usize, n_test: usize, seed: u64) -> Result<Dataset> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::config("dataset needs at least one train and one test sample"));
    }
    let total = n_train + n_test;
    let mut rng = seeded(seed, Stream::Data);
    let mut raw_inputs = Vec::with_capacity(total);
    let mut raw_targets = Vec::with_capacity(total);
    let mut attempts: usize = 0;
    while raw_inputs.len() < total {
        attempts += 1;
        if attempts >= 1000 && raw_inputs.len() * 100 < attempts {
            return Err(Error::config(format!(
                "{}: rejection rate above 99% after {attempts} draws; check the input domain",
                b.name()
            )));
        }
        let Some(x) = b.sample_input(&mut rng) else { continue };
        let y = b.eval(&x)?;
        raw_inputs.push(x);
        raw_targets.push(y);
    }
    Dataset::from_raw(b, seed, n_train, raw_inputs, raw_targets)
}

impl Dataset {
    pub fn from_raw(
        b: &Benchmark,
        seed: u64,
        n_train: usize,
        raw_inputs: Vec<Vec<f64>>,
        raw_targets: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let input_norm = Normalizer::from_intervals(&b.input_domain)?;
        let target_norm = Normalizer::from_intervals(&b.output_range)?;
        Self::with_normalizers(b.id, seed, n_train, raw_inputs, raw_targets, input_norm, target_norm)
    }

    fn with_normalizers(
        benchmark: BenchmarkId,
        seed: u64,
        n_train: usize,
        raw_inputs: Vec<Vec<f64>>,
        raw_targets: Vec<Vec<f64>>,
        input_norm: Normalizer,
        target_norm: Normalizer,
    ) -> Result<Self> {
        if raw_inputs.len() != raw_targets.len() {
            return Err(Error::DimensionMismatch {
                what: "targets per input",
                expected: raw_inputs.len(),
                got: raw_targets.len(),
            });
        }
        if n_train == 0 || n_train >= raw_inputs.len() {
            return Err(Error::config("train split must be nonempty and leave a nonempty test split"));
        }
        let inputs = raw_inputs.iter().map(|x| input_norm.normalize(x)).collect();
        let targets = raw_targets.iter().map(|y| target_norm.normalize(y)).collect();
        Ok(Dataset {
            benchmark,
            seed,
            n_train,
            raw_inputs,
            raw_targets,
            inputs,
            targets,
            input_norm,
            target_norm,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn n_test(&self) -> usize {
        self.len() - self.n_train
    }

    pub fn train_indices(&self) -> Range<usize> {
        0..self.n_train
    }

    pub fn test_indices(&self) -> Range<usize> {
        self.n_train..self.len()
    }

    /// Normalized input `i`.
    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i]
    }

    /// Normalized target `i`.
    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i]
    }

    pub fn raw_input(&self, i: usize) -> &[f64] {
        &self.raw_inputs[i]
    }

    pub fn raw_target(&self, i: usize) -> &[f64] {
        &self.raw_targets[i]
    }

    pub fn input_dim(&self) -> usize {
        self.input_norm.width()
    }

    pub fn output_dim(&self) -> usize {
        self.target_norm.width()
    }

    pub fn scorer(&self, metric: ErrorMetric, bound: f64) -> Result<Scorer> {
        Scorer::new(metric, bound, self.target_norm.clone())
    }

    /// Scorer with the benchmark's own metric and bound.
    pub fn default_scorer(&self) -> Result<Scorer> {
        let b = self.benchmark.benchmark();
        self.scorer(b.error_metric, b.error_bound)
    }

    /// Writes `path` (CSV, native units, inputs then targets) and a JSON
    /// sidecar next to it. Returns the sidecar path.
    pub fn write_csv(&self, path: &Path) -> Result<PathBuf> {
        let mut w = csv::Writer::from_path(path)?;
        let header: Vec<String> = (0..self.input_dim())
            .map(|i| format!("x{i}"))
            .chain((0..self.output_dim()).map(|i| format!("y{i}")))
            .collect();
        w.write_record(&header)?;
        for (x, y) in self.raw_inputs.iter().zip(&self.raw_targets) {
            w.write_record(x.iter().chain(y).map(|v| v.to_string()))?;
        }
        w.flush()?;

        let sidecar = Sidecar {
            format_version: SIDECAR_VERSION,
            benchmark: self.benchmark,
            seed: self.seed,
            n_train: self.n_train,
            n_test: self.n_test(),
            input_domain: self.benchmark.benchmark().input_domain,
            input_normalizer: self.input_norm.clone(),
            target_normalizer: self.target_norm.clone(),
        };
        let side = sidecar_path(path);
        fs::write(&side, serde_json::to_string_pretty(&sidecar)?)?;
        Ok(side)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
        if sidecar.format_version != SIDECAR_VERSION {
            return Err(Error::config(format!(
                "unsupported dataset sidecar version {}",
                sidecar.format_version
            )));
        }
        let (nin, nout) = (sidecar.input_normalizer.width(), sidecar.target_normalizer.width());
        let mut r = csv::Reader::from_path(path)?;
        let mut raw_inputs = Vec::new();
        let mut raw_targets = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != nin + nout {
                return Err(Error::DimensionMismatch {
                    what: "dataset CSV columns",
                    expected: nin + nout,
                    got: rec.len(),
                });
            }
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| Error::config(format!("bad number `{f}`: {e}"))))
                .collect::<Result<_>>()?;
            raw_inputs.push(vals[..nin].to_vec());
            raw_targets.push(vals[nin..].to_vec());
        }
        if raw_inputs.len() != sidecar.n_train + sidecar.n_test {
            return Err(Error::config(format!(
                "sidecar promises {} rows, CSV has {}",
                sidecar.n_train + sidecar.n_test,
                raw_inputs.len()
            )));
        }
        Self::with_normalizers(
            sidecar.benchmark,
            sidecar.seed,
            sidecar.n_train,
            raw_inputs,
            raw_targets,
            sidecar.input_normalizer,
            sidecar.target_normalizer,
        )
    }
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}
