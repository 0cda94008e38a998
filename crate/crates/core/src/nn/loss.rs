use crate::error::{Error, Result};

/// Lower clamp on the probability inside `-ln p`.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// Mean of squared componentwise differences.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target)?;
    let n = pred.len() as f64;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n)
}

pub fn mse_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    check_pair(pred, target)?;
    let n = pred.len() as f64;
    Ok(pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect())
}

fn check_pair(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::Empty("loss input"));
    }
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch {
            what: "loss target",
            expected: pred.len(),
            got: target.len(),
        });
    }
    Ok(())
}

/// Probability assigned to `class`. A length-1 input is a sigmoid output
/// read as the probability of class 1.
fn class_probability(probs: &[f64], class: usize) -> Result<f64> {
    match probs.len() {
        0 => Err(Error::Empty("cross-entropy input")),
        1 => match class {
            0 => Ok(1.0 - probs[0]),
            1 => Ok(probs[0]),
            _ => Err(Error::config(format!("class {class} out of range for a sigmoid output"))),
        },
        n => {
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
                return Err(Error::config(format!("cross-entropy input sums to {sum}, not 1")));
            }
            probs
                .get(class)
                .copied()
                .ok_or_else(|| Error::config(format!("class {class} out of range for {n} outputs")))
        }
    }
}

/// `-ln p(class)`, with `p` clamped below by [`PROBABILITY_FLOOR`].
pub fn cross_entropy(probs: &[f64], class: usize) -> Result<f64> {
    Ok(-class_probability(probs, class)?.max(PROBABILITY_FLOOR).ln())
}

/// dL/dprobs. Zero where the floor is active.
pub fn cross_entropy_grad(probs: &[f64], class: usize) -> Result<Vec<f64>> {
    let p = class_probability(probs, class)?;
    let d = if p > PROBABILITY_FLOOR { -1.0 / p } else { 0.0 };
    let mut g = vec![0.0; probs.len()];
    if probs.len() == 1 {
        g[0] = if class == 1 { d } else { -d };
    } else {
        g[class] = d;
    }
    Ok(g)
}
