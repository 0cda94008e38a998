//! Benchmark kernels, their experimental setup, datasets and error metrics.

pub mod dataset;
pub mod functions;
pub mod metric;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use dataset::{generate_dataset, Dataset, Normalizer};
pub use metric::{error_value, is_safe, ErrorMetric, Scorer};

use crate::error::{Error, Result};
use crate::fusion::PredHead;
use crate::nn::param_count;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkId {
    Inversek2j,
    Sobel,
    Fft,
    Bessel,
    Jpeg,
    Blackscholes,
    Kmeans,
}

impl BenchmarkId {
    pub const ALL: [BenchmarkId; 7] = [
        BenchmarkId::Inversek2j,
        BenchmarkId::Sobel,
        BenchmarkId::Fft,
        BenchmarkId::Bessel,
        BenchmarkId::Jpeg,
        BenchmarkId::Blackscholes,
        BenchmarkId::Kmeans,
    ];

    pub const NAMES: [&'static str; 7] = ["inversek2j", "sobel", "fft", "bessel", "jpeg", "blackscholes", "kmeans"];

    pub fn parse(name: &str) -> Result<Self> {
        Self::NAMES
            .iter()
            .position(|&n| n == name)
            .map(|i| Self::ALL[i])
            .ok_or_else(|| Error::unknown("benchmark", name, &Self::NAMES))
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }

    pub fn benchmark(self) -> Benchmark {
        Benchmark::get(self)
    }
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo - 1e-12 && v <= self.hi + 1e-12
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.gen_range(self.lo..self.hi)
    }
}

/// An AXNet configuration: approximation and prediction subnet widths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusedTopology {
    pub approx: Vec<usize>,
    pub pred: Vec<usize>,
    pub head: PredHead,
    /// Parameter count printed in the experimental-setup table.
    pub reported_params: usize,
}

impl FusedTopology {
    pub fn param_count(&self) -> usize {
        param_count(&self.approx) + param_count(&self.pred)
    }
}

/// A separately trained approximator/predictor configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTopology {
    pub approx: Vec<usize>,
    pub pred: Vec<usize>,
    pub reported_params: usize,
}

impl PairTopology {
    pub fn param_count(&self) -> usize {
        param_count(&self.approx) + param_count(&self.pred)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub id: BenchmarkId,
    pub input_dim: usize,
    pub output_dim: usize,
    pub input_domain: Vec<Interval>,
    /// Attainable range of each output, used for normalization.
    pub output_range: Vec<Interval>,
    pub error_metric: ErrorMetric,
    pub error_bound: f64,
    pub axnet_topologies: Vec<FusedTopology>,
    pub previous_topology: PairTopology,
}

/// Innermost reachable radius for the arm. The origin itself is singular.
pub const ARM_MIN_REACH: f64 = 0.05;

fn axnet(approx: &[usize], pred: &[usize], head: PredHead, reported_params: usize) -> FusedTopology {
    FusedTopology {
        approx: approx.to_vec(),
        pred: pred.to_vec(),
        head,
        reported_params,
    }
}

fn previous(approx: &[usize], pred: &[usize], reported_params: usize) -> PairTopology {
    PairTopology {
        approx: approx.to_vec(),
        pred: pred.to_vec(),
        reported_params,
    }
}

fn unit(n: usize) -> Vec<Interval> {
    vec![Interval::new(0.0, 1.0); n]
}

impl Benchmark {
    pub fn get(id: BenchmarkId) -> Benchmark {
        use functions::*;
        use std::f64::consts::PI;
        use BenchmarkId::*;
        use PredHead::{Sigmoid, Softmax};

        let (input_domain, output_range, metric, bound, axnets, prev) = match id {
            Inversek2j => (
                vec![Interval::new(-1.0, 1.0), Interval::new(0.0, 1.0)],
                vec![Interval::new(-PI / 2.0, PI), Interval::new(0.0, PI)],
                ErrorMetric::Relative,
                0.01,
                vec![axnet(&[2, 6, 2], &[2, 4, 8], Softmax, 84), axnet(&[2, 5, 2], &[2, 3, 7], Softmax, 64)],
                previous(&[2, 8, 2], &[2, 8, 2], 84),
            ),
            Sobel => (
                unit(9),
                unit(1),
                ErrorMetric::ImageDiff,
                0.01,
                vec![axnet(&[9, 8, 1], &[9, 3, 10], Softmax, 159), axnet(&[9, 7, 1], &[9, 3, 9], Softmax, 144)],
                previous(&[9, 8, 1], &[9, 8, 2], 187),
            ),
            Fft => (
                vec![Interval::new(0.0, 1.0)],
                vec![Interval::new(-1.0, 1.0); 2],
                ErrorMetric::Absolute,
                0.05,
                vec![axnet(&[1, 4, 3, 2], &[1, 3, 9], Softmax, 41)],
                previous(&[1, 4, 4, 2], &[1, 4, 2], 56),
            ),
            Bessel => (
                unit(2),
                vec![Interval::new(BESSEL_J0_MIN, 1.0)],
                ErrorMetric::Absolute,
                0.05,
                vec![axnet(&[2, 2, 2, 1], &[2, 4, 6], Softmax, 57), axnet(&[2, 2, 2, 1], &[2, 2, 6], Softmax, 39)],
                previous(&[2, 4, 4, 1], &[2, 4, 2], 59),
            ),
            Jpeg => (
                unit(64),
                dct_coefficient_ranges().into_iter().map(|(lo, hi)| Interval::new(lo, hi)).collect(),
                ErrorMetric::ImageDiff,
                0.001,
                vec![
                    axnet(&[64, 16, 64], &[64, 12, 18], Softmax, 3129),
                    axnet(&[64, 6, 64], &[64, 6, 8], Softmax, 1284),
                ],
                previous(&[64, 16, 64], &[64, 16, 2], 3216),
            ),
            Blackscholes => (
                vec![
                    Interval::new(10.0, 100.0), // spot
                    Interval::new(10.0, 100.0), // strike
                    Interval::new(0.01, 0.1),   // rate
                    Interval::new(0.05, 0.65),  // volatility
                    Interval::new(0.05, 1.0),   // maturity
                    Interval::new(0.0, 1.0),    // 0 = put, 1 = call
                ],
                vec![Interval::new(0.0, 100.0)],
                ErrorMetric::Relative,
                0.001,
                vec![axnet(&[6, 6, 1], &[6, 4, 7], Sigmoid, 112), axnet(&[6, 5, 1], &[6, 3, 7], Softmax, 90)],
                previous(&[6, 8, 1], &[6, 8, 2], 138),
            ),
            Kmeans => (
                unit(6),
                unit(1),
                ErrorMetric::ImageDiff,
                0.01,
                vec![axnet(&[6, 4, 4, 1], &[6, 4, 10], Softmax, 131), axnet(&[6, 3, 2, 1], &[6, 3, 7], Softmax, 81)],
                previous(&[6, 4, 4, 1], &[6, 8, 2], 127),
            ),
        };
        Benchmark {
            id,
            input_dim: input_domain.len(),
            output_dim: output_range.len(),
            input_domain,
            output_range,
            error_metric: metric,
            error_bound: bound,
            axnet_topologies: axnets,
            previous_topology: prev,
        }
    }

    pub fn all() -> Vec<Benchmark> {
        BenchmarkId::ALL.iter().map(|&id| Benchmark::get(id)).collect()
    }

    pub fn name(&self) -> &'static str {
        self.id.name()
    }

    /// Exact output for `x`, in native units.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        use functions::*;
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                what: "benchmark input",
                expected: self.input_dim,
                got: x.len(),
            });
        }
        if let Some(i) = x.iter().zip(&self.input_domain).position(|(v, d)| !d.contains(*v)) {
            return Err(Error::config(format!(
                "{} input {i} = {} lies outside [{}, {}]",
                self.name(),
                x[i],
                self.input_domain[i].lo,
                self.input_domain[i].hi
            )));
        }
        Ok(match self.id {
            BenchmarkId::Inversek2j => {
                let r = x[0].hypot(x[1]);
                if r < ARM_MIN_REACH {
                    return Err(Error::config(format!("arm target ({}, {}) is inside the dead zone", x[0], x[1])));
                }
                inverse_kinematics(x[0], x[1])
                    .ok_or_else(|| Error::config(format!("arm target ({}, {}) is out of reach", x[0], x[1])))?
                    .to_vec()
            }
            BenchmarkId::Sobel => vec![sobel(x)],
            BenchmarkId::Fft => twiddle(x[0]).to_vec(),
            BenchmarkId::Bessel => vec![bessel_surface(x[0], x[1])],
            BenchmarkId::Jpeg => dct8x8(x),
            BenchmarkId::Blackscholes => vec![black_scholes(x[0], x[1], x[2], x[3], x[4], x[5] >= 0.5)],
            BenchmarkId::Kmeans => vec![color_distance(&x[..3], &x[3..])],
        })
    }

    /// One uniform draw from the input domain, or `None` when the draw is
    /// rejected (unreachable arm targets).
    pub fn sample_input<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<f64>> {
        let mut x: Vec<f64> = self.input_domain.iter().map(|d| d.sample(rng)).collect();
        match self.id {
            BenchmarkId::Inversek2j => {
                let r = x[0].hypot(x[1]);
                if !(ARM_MIN_REACH..=functions::ARM_L1 + functions::ARM_L2).contains(&r) {
                    return None;
                }
            }
            BenchmarkId::Blackscholes => x[5] = if x[5] >= 0.5 { 1.0 } else { 0.0 },
            _ => {}
        }
        Some(x)
    }

    /// Placeholder cost in CPU cycles of one exact evaluation.
    ///
    /// Counts arithmetic in the kernels above at one cycle per add/multiply,
    /// four per divide, fifteen per square root and twenty per
    /// transcendental call.
    pub fn cpu_cycles_estimate(&self) -> f64 {
        const DIV: f64 = 4.0;
        const SQRT: f64 = 15.0;
        const TRANS: f64 = 20.0;
        match self.id {
            // r², cos-law (5 arith + 1 div), acos, sin, cos, 2 atan2, 3 arith.
            BenchmarkId::Inversek2j => 10.0 + DIV + 5.0 * TRANS,
            // two 9-tap kernels, two squares, sqrt, clamp.
            BenchmarkId::Sobel => 36.0 + 3.0 + SQRT + 1.0,
            BenchmarkId::Fft => 2.0 + 2.0 * TRANS,
            // hypot + scale, then ~70 recurrence steps of (mul, div, sub, add).
            BenchmarkId::Bessel => 4.0 + SQRT + 70.0 * (3.0 + DIV) + DIV,
            // separable 8×8: two passes of 64 outputs × 8 multiply-adds.
            BenchmarkId::Jpeg => 2.0 * 64.0 * 16.0,
            // ln, sqrt, exp, two erfc, ~20 arith, 3 div.
            BenchmarkId::Blackscholes => 20.0 + 3.0 * DIV + SQRT + 4.0 * TRANS,
            BenchmarkId::Kmeans => 8.0 + SQRT + DIV,
        }
    }
}
