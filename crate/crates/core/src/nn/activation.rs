use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elementwise (or, for softmax, whole-layer) nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Softmax,
    Linear,
}

impl Activation {
    pub const NAMES: [&'static str; 4] = ["relu", "sigmoid", "softmax", "linear"];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "softmax" => Ok(Activation::Softmax),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::unknown("activation", other, &Self::NAMES)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
            Activation::Linear => "linear",
        }
    }

    pub fn apply(self, pre: &[f64], out: &mut [f64]) {
        debug_assert_eq!(pre.len(), out.len());
        match self {
            Activation::Relu => {
                for (o, &a) in out.iter_mut().zip(pre) {
                    *o = if a > 0.0 { a } else { 0.0 };
                }
            }
            Activation::Sigmoid => {
                for (o, &a) in out.iter_mut().zip(pre) {
                    *o = sigmoid(a);
                }
            }
            Activation::Linear => out.copy_from_slice(pre),
            Activation::Softmax => softmax(pre, out),
        }
    }

    /// Maps `grad_out` (dL/df) to dL/da. `activated` must be `f(pre)`.
    ///
    /// The ReLU derivative at exactly zero is zero.
    pub fn backprop(self, pre: &[f64], activated: &[f64], grad_out: &[f64], grad_pre: &mut [f64]) {
        match self {
            Activation::Relu => {
                for ((g, &a), &d) in grad_pre.iter_mut().zip(pre).zip(grad_out) {
                    *g = if a > 0.0 { d } else { 0.0 };
                }
            }
            Activation::Sigmoid => {
                for ((g, &s), &d) in grad_pre.iter_mut().zip(activated).zip(grad_out) {
                    *g = d * s * (1.0 - s);
                }
            }
            Activation::Linear => grad_pre.copy_from_slice(grad_out),
            Activation::Softmax => {
                let dot: f64 = activated.iter().zip(grad_out).map(|(s, d)| s * d).sum();
                for ((g, &s), &d) in grad_pre.iter_mut().zip(activated).zip(grad_out) {
                    *g = s * (d - dot);
                }
            }
        }
    }
}

pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(pre: &[f64], out: &mut [f64]) {
    let max = pre.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &a) in out.iter_mut().zip(pre) {
        *o = (a - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}
