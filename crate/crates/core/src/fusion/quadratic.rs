use super::FusedNet;
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp};

/// Gated first-layer values computed two ways.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCheck {
    /// `(a(1) ⊙ c)_i` from the fused forward pass.
    pub gated: Vec<f64>,
    /// The same values from the explicit polynomial in `x`.
    pub expanded: Vec<f64>,
}

impl QuadraticCheck {
    pub fn max_abs_diff(&self) -> f64 {
        self.gated
            .iter()
            .zip(&self.expanded)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// With every activation linear, `a(1)_i · c_i` expands into
///
/// ```text
/// Σ_k Σ_j Wa(i,j) Wc(i,k) x_j x_k + Σ_j (bc_i Wa(i,j) + ba_i Wc(i,j)) x_j + bc_i ba_i
/// ```
///
/// where `Wc, bc` is the prediction subnet collapsed to one affine map. This
/// evaluates both sides for every unit of the gated first hidden layer.
pub fn quadratic_expansion_check(net: &FusedNet, x: &[f64]) -> Result<QuadraticCheck> {
    let approx = net.approx();
    if approx.num_layers() != 2 {
        return Err(Error::config("expansion check needs a single-hidden-layer approximation subnet"));
    }
    let linear = |m: &Mlp| m.activations().iter().all(|&a| a == Activation::Linear);
    if !linear(approx) || !linear(net.pred()) || net.control_activation() != Activation::Linear {
        return Err(Error::config("expansion check requires linear activations throughout"));
    }
    let slice = net
        .slices()
        .controls
        .iter()
        .find(|s| s.layer == 1)
        .copied()
        .ok_or_else(|| Error::config("expansion check requires gating on hidden layer 1"))?;

    let fwd = net.fused_forward(x)?;
    let gated = fwd.approx.post_activations[0].clone();

    let (wc, bc) = collapse(net.pred());
    let n = x.len();
    let expanded = (0..slice.len)
        .map(|i| {
            let ic = slice.offset + i;
            let ba = approx.biases(0)[i];
            let mut quad = 0.0;
            for k in 0..n {
                for j in 0..n {
                    quad += approx.weight(0, j, i) * wc[k][ic] * x[j] * x[k];
                }
            }
            let lin: f64 = (0..n)
                .map(|j| (bc[ic] * approx.weight(0, j, i) + ba * wc[j][ic]) * x[j])
                .sum();
            quad + lin + bc[ic] * ba
        })
        .collect();
    Ok(QuadraticCheck { gated, expanded })
}

/// Folds a purely linear network into `(W, b)` with `y = Wᵀx + b`.
fn collapse(net: &Mlp) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut w = net.weight_matrix(0);
    let mut b = net.biases(0).to_vec();
    for k in 1..net.num_layers() {
        let next = net.weight_matrix(k);
        let out = next[0].len();
        w = w
            .iter()
            .map(|row| (0..out).map(|j| row.iter().zip(&next).map(|(r, n)| r * n[j]).sum()).collect())
            .collect();
        b = (0..out)
            .map(|j| b.iter().zip(&next).map(|(bi, n)| bi * n[j]).sum::<f64>() + net.biases(k)[j])
            .collect();
    }
    (w, b)
}
