//! Per-epoch invocation traces recorded during training.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub phase: String,
    pub epoch: usize,
    pub iteration: usize,
    pub true_invocation: f64,
    pub predicted_invocation: f64,
    /// Mean approximation loss over the epoch's minibatches.
    pub loss_approx: f64,
    /// Mean prediction loss over the epoch's minibatches.
    pub loss_pred: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvocationTrace {
    pub points: Vec<TracePoint>,
}

pub const TRACE_CSV_HEADER: [&str; 7] = [
    "phase",
    "epoch",
    "iteration",
    "true_invocation",
    "predicted_invocation",
    "loss_approx",
    "loss_pred",
];

impl InvocationTrace {
    pub fn push(&mut self, p: TracePoint) {
        self.points.push(p);
    }

    pub fn extend(&mut self, other: InvocationTrace) {
        self.points.extend(other.points);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn true_invocations(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.true_invocation).collect()
    }

    /// Population variance of the true invocation over the last `fraction`
    /// of recorded epochs (at least two points when available).
    pub fn tail_variance(&self, fraction: f64) -> f64 {
        let v = self.true_invocations();
        if v.is_empty() {
            return 0.0;
        }
        let n = ((v.len() as f64 * fraction).ceil() as usize).clamp(2.min(v.len()), v.len());
        variance(&v[v.len() - n..])
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(TRACE_CSV_HEADER)?;
        for p in &self.points {
            w.write_record([
                p.phase.clone(),
                p.epoch.to_string(),
                p.iteration.to_string(),
                p.true_invocation.to_string(),
                p.predicted_invocation.to_string(),
                p.loss_approx.to_string(),
                p.loss_pred.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64
}
