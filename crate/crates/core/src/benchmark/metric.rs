use serde::{Deserialize, Serialize};

use super::dataset::Normalizer;
use crate::error::{Error, Result};

/// Guard against division by zero in the relative error.
pub const RELATIVE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    Relative,
    Absolute,
    ImageDiff,
}

impl ErrorMetric {
    pub const NAMES: [&'static str; 3] = ["relative", "absolute", "image_diff"];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "relative" => Ok(ErrorMetric::Relative),
            "absolute" => Ok(ErrorMetric::Absolute),
            "image_diff" => Ok(ErrorMetric::ImageDiff),
            other => Err(Error::unknown("error metric", other, &Self::NAMES)),
        }
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }
}

/// Mean per-dimension error between an approximation `h` and the exact `y`.
///
/// `image_diff` is the mean absolute difference and expects both vectors on
/// the normalized `[0, 1]` pixel scale.
pub fn error_value(h: &[f64], y: &[f64], metric: ErrorMetric) -> Result<f64> {
    if h.is_empty() {
        return Err(Error::Empty("error metric input"));
    }
    if h.len() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "error metric operands",
            expected: y.len(),
            got: h.len(),
        });
    }
    let n = h.len() as f64;
    let sum: f64 = match metric {
        ErrorMetric::Absolute | ErrorMetric::ImageDiff => h.iter().zip(y).map(|(a, b)| (a - b).abs()).sum(),
        ErrorMetric::Relative => h
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b).abs() / b.abs().max(RELATIVE_EPSILON))
            .sum(),
    };
    Ok(sum / n)
}

/// Safe-to-approximate rule: `Err(H(x) - y) < bound`, strictly.
pub fn is_safe(err: f64, bound: f64) -> bool {
    err < bound
}

/// Binds a metric and bound to a dataset's output scaling so networks that
/// work on normalized values can be scored in the metric's own units.
///
/// Relative and absolute errors are measured on the benchmark's native
/// output values; image diff on the normalized `[0, 1]` scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Scorer {
    pub metric: ErrorMetric,
    pub bound: f64,
    target_norm: Normalizer,
}

impl Scorer {
    pub fn new(metric: ErrorMetric, bound: f64, target_norm: Normalizer) -> Result<Self> {
        if !(bound > 0.0) {
            return Err(Error::config("error bound must be > 0"));
        }
        Ok(Scorer {
            metric,
            bound,
            target_norm,
        })
    }

    /// Scorer whose normalization is the identity.
    pub fn unnormalized(metric: ErrorMetric, bound: f64, width: usize) -> Result<Self> {
        Self::new(metric, bound, Normalizer::identity(width))
    }

    /// Error of a normalized approximation against a normalized target.
    pub fn error(&self, h_norm: &[f64], y_norm: &[f64]) -> f64 {
        match self.metric {
            ErrorMetric::ImageDiff => error_value(h_norm, y_norm, self.metric),
            _ => error_value(
                &self.target_norm.denormalize(h_norm),
                &self.target_norm.denormalize(y_norm),
                self.metric,
            ),
        }
        .unwrap_or(f64::INFINITY)
    }

    pub fn is_safe(&self, h_norm: &[f64], y_norm: &[f64]) -> bool {
        is_safe(self.error(h_norm, y_norm), self.bound)
    }
}
