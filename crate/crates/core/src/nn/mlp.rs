//! Dense multilayer perceptron with hand-written backpropagation.
//!
//! Parameters live in one flat buffer. Layer `k` occupies a contiguous block:
//! its `fan_in × fan_out` weight matrix in row-major order (row = input unit)
//! followed by its `fan_out` biases. Gradients use the same layout, which is
//! what lets Adam, finite differences and fingerprinting treat a network as a
//! plain `&mut [f64]`.
//!
//! The forward and backward passes optionally take per-layer *gates*: vectors
//! multiplied elementwise into a layer's activated output. Ungated callers
//! pass an empty slice.

use std::hash::{Hash, Hasher};

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Initial bias of ReLU units.
pub const RELU_BIAS_INIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    biases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpDoc", into = "MlpDoc")]
pub struct Mlp {
    topology: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
    slots: Vec<Slot>,
}

/// Per-layer values recorded by a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    /// `a^(k) = b^(k) + W^(k)ᵀ h^(k-1)` for every layer.
    pub pre_activations: Vec<Vec<f64>>,
    /// `h^(k)`, after activation and gating.
    pub post_activations: Vec<Vec<f64>>,
    /// `f(a^(k))` before gating, recorded only for gated layers.
    pub ungated: Vec<Option<Vec<f64>>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.post_activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// `f(a^(k))` for layer `k`, whether or not it was gated.
    pub fn activated(&self, k: usize) -> &[f64] {
        self.ungated[k].as_deref().unwrap_or(&self.post_activations[k])
    }
}

/// Gradients laid out like [`Mlp`] parameters, plus the input gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
    slots: Vec<Slot>,
}

impl Gradients {
    pub fn weights(&self, k: usize) -> &[f64] {
        let s = self.slots[k];
        &self.params[s.weights..s.biases]
    }

    pub fn biases(&self, k: usize) -> &[f64] {
        let s = self.slots[k];
        &self.params[s.biases..s.biases + s.fan_out]
    }

    pub fn weight(&self, k: usize, i: usize, j: usize) -> f64 {
        let s = self.slots[k];
        self.params[s.weights + i * s.fan_out + j]
    }

    pub fn scale(&mut self, factor: f64) {
        self.params.iter_mut().for_each(|g| *g *= factor);
        self.input.iter_mut().for_each(|g| *g *= factor);
    }
}

/// Backward-pass knobs for gated layers.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GateOptions {
    /// Multiplier on the gate path of the backward pass. `1.0` is correct;
    /// `-1.0` is a fault injected by gradient-check mutation tests.
    pub hadamard_sign: f64,
}

impl Default for GateOptions {
    fn default() -> Self {
        GateOptions { hadamard_sign: 1.0 }
    }
}

fn layout(topology: &[usize]) -> (Vec<Slot>, usize) {
    let mut slots = Vec::with_capacity(topology.len().saturating_sub(1));
    let mut offset = 0;
    for w in topology.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        slots.push(Slot {
            fan_in,
            fan_out,
            weights: offset,
            biases: offset + fan_in * fan_out,
        });
        offset += fan_in * fan_out + fan_out;
    }
    (slots, offset)
}

/// Weights plus biases for a topology.
pub fn param_count(topology: &[usize]) -> usize {
    topology.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn validate(topology: &[usize], activations: &[Activation]) -> Result<()> {
    if topology.len() < 2 {
        return Err(Error::config("topology needs at least an input and an output width"));
    }
    if topology.iter().any(|&w| w == 0) {
        return Err(Error::config(format!("zero-width layer in topology {topology:?}")));
    }
    if activations.len() != topology.len() - 1 {
        return Err(Error::DimensionMismatch {
            what: "activations per layer",
            expected: topology.len() - 1,
            got: activations.len(),
        });
    }
    if let Some(k) = activations[..activations.len() - 1]
        .iter()
        .position(|&a| a == Activation::Softmax)
    {
        return Err(Error::config(format!("softmax on hidden layer {k}; only the final layer may use it")));
    }
    Ok(())
}

impl Mlp {
    /// Glorot-uniform weights. Biases start at [`RELU_BIAS_INIT`] on ReLU
    /// layers, so narrow layers are not born dead, and at zero elsewhere.
    pub fn new<R: Rng + ?Sized>(topology: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(topology, activations)?;
        for k in 0..net.slots.len() {
            let s = net.slots[k];
            let limit = (6.0 / (s.fan_in + s.fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            for w in &mut net.params[s.weights..s.biases] {
                *w = dist.sample(rng);
            }
            if net.activations[k] == Activation::Relu {
                net.params[s.biases..s.biases + s.fan_out].fill(RELU_BIAS_INIT);
            }
        }
        Ok(net)
    }

    /// `hidden` on every hidden layer and `output` on the last one.
    pub fn with_activations<R: Rng + ?Sized>(
        topology: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let n = topology.len().saturating_sub(1).max(1);
        let mut acts = vec![hidden; n];
        acts[n - 1] = output;
        Self::new(topology, &acts, rng)
    }

    pub fn zeros(topology: &[usize], activations: &[Activation]) -> Result<Self> {
        validate(topology, activations)?;
        let (slots, len) = layout(topology);
        Ok(Mlp {
            topology: topology.to_vec(),
            activations: activations.to_vec(),
            params: vec![0.0; len],
            slots,
        })
    }

    /// Builds a network from explicit `fan_in × fan_out` matrices.
    pub fn from_parts(
        topology: &[usize],
        activations: &[Activation],
        weights: &[Vec<Vec<f64>>],
        biases: &[Vec<f64>],
    ) -> Result<Self> {
        let mut net = Self::zeros(topology, activations)?;
        if weights.len() != net.slots.len() || biases.len() != net.slots.len() {
            return Err(Error::DimensionMismatch {
                what: "layer count",
                expected: net.slots.len(),
                got: weights.len().min(biases.len()),
            });
        }
        for (k, s) in net.slots.clone().into_iter().enumerate() {
            if weights[k].len() != s.fan_in || weights[k].iter().any(|r| r.len() != s.fan_out) {
                return Err(Error::config(format!(
                    "layer {k} weights must be {}×{}",
                    s.fan_in, s.fan_out
                )));
            }
            if biases[k].len() != s.fan_out {
                return Err(Error::DimensionMismatch {
                    what: "bias vector",
                    expected: s.fan_out,
                    got: biases[k].len(),
                });
            }
            for (i, row) in weights[k].iter().enumerate() {
                net.params[s.weights + i * s.fan_out..s.weights + (i + 1) * s.fan_out].copy_from_slice(row);
            }
            net.params[s.biases..s.biases + s.fan_out].copy_from_slice(&biases[k]);
        }
        Ok(net)
    }

    pub fn topology(&self) -> &[usize] {
        &self.topology
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn num_layers(&self) -> usize {
        self.slots.len()
    }

    pub fn input_width(&self) -> usize {
        self.topology[0]
    }

    pub fn output_width(&self) -> usize {
        *self.topology.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weight(&self, k: usize, i: usize, j: usize) -> f64 {
        let s = self.slots[k];
        self.params[s.weights + i * s.fan_out + j]
    }

    pub fn set_weight(&mut self, k: usize, i: usize, j: usize, value: f64) {
        let s = self.slots[k];
        self.params[s.weights + i * s.fan_out + j] = value;
    }

    pub fn biases(&self, k: usize) -> &[f64] {
        let s = self.slots[k];
        &self.params[s.biases..s.biases + s.fan_out]
    }

    pub fn biases_mut(&mut self, k: usize) -> &mut [f64] {
        let s = self.slots[k];
        &mut self.params[s.biases..s.biases + s.fan_out]
    }

    pub fn weights_mut(&mut self, k: usize) -> &mut [f64] {
        let s = self.slots[k];
        &mut self.params[s.weights..s.biases]
    }

    /// Weight matrix of layer `k` as `fan_in` rows of `fan_out` entries.
    pub fn weight_matrix(&self, k: usize) -> Vec<Vec<f64>> {
        let s = self.slots[k];
        self.params[s.weights..s.biases]
            .chunks(s.fan_out)
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            params: vec![0.0; self.params.len()],
            input: vec![0.0; self.input_width()],
            slots: self.slots.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Hash of the exact parameter bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.topology.hash(&mut h);
        for p in &self.params {
            p.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.forward_gated(x, &[])
    }

    /// Output only, ungated.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut trace = self.forward(x)?;
        Ok(trace.post_activations.pop().unwrap_or_default())
    }

    /// Forward pass with `h^(k) = f(a^(k)) ⊙ gates[k]` wherever `gates[k]`
    /// is set. An empty `gates` slice means no gating.
    pub fn forward_gated(&self, x: &[f64], gates: &[Option<Vec<f64>>]) -> Result<ForwardTrace> {
        if x.len() != self.input_width() {
            return Err(Error::DimensionMismatch {
                what: "network input",
                expected: self.input_width(),
                got: x.len(),
            });
        }
        self.check_gates(gates)?;
        let n = self.slots.len();
        let mut pre_activations = Vec::with_capacity(n);
        let mut post_activations: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut ungated = vec![None; n];
        for (k, s) in self.slots.iter().enumerate() {
            let h_prev: &[f64] = if k == 0 { x } else { &post_activations[k - 1] };
            let mut a = self.params[s.biases..s.biases + s.fan_out].to_vec();
            let w = &self.params[s.weights..s.biases];
            for (i, &hi) in h_prev.iter().enumerate() {
                let row = &w[i * s.fan_out..(i + 1) * s.fan_out];
                for (aj, &wij) in a.iter_mut().zip(row) {
                    *aj += wij * hi;
                }
            }
            let mut h = vec![0.0; s.fan_out];
            self.activations[k].apply(&a, &mut h);
            if let Some(Some(c)) = gates.get(k) {
                let f = h.clone();
                for (hj, &cj) in h.iter_mut().zip(c) {
                    *hj *= cj;
                }
                ungated[k] = Some(f);
            }
            pre_activations.push(a);
            post_activations.push(h);
        }
        Ok(ForwardTrace {
            input: x.to_vec(),
            pre_activations,
            post_activations,
            ungated,
        })
    }

    fn check_gates(&self, gates: &[Option<Vec<f64>>]) -> Result<()> {
        if gates.is_empty() {
            return Ok(());
        }
        if gates.len() != self.slots.len() {
            return Err(Error::DimensionMismatch {
                what: "gate list",
                expected: self.slots.len(),
                got: gates.len(),
            });
        }
        for (s, g) in self.slots.iter().zip(gates) {
            if let Some(g) = g {
                if g.len() != s.fan_out {
                    return Err(Error::DimensionMismatch {
                        what: "gate vector",
                        expected: s.fan_out,
                        got: g.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Gradients of a loss with respect to every parameter and the input,
    /// given `loss_grad = dL/d output`.
    pub fn backward(&self, trace: &ForwardTrace, loss_grad: &[f64]) -> Result<Gradients> {
        let mut grads = self.zero_gradients();
        grads.input = self.backward_into(trace, loss_grad, &[], &mut grads.params, None, GateOptions::default())?;
        Ok(grads)
    }

    /// Accumulates parameter gradients into `acc` and returns the input
    /// gradient. When `gate_grads` is given, `dL/dgates[k] = dL/dh^(k) ⊙ f(a^(k))`
    /// is written for every gated layer, treating the gates as inputs.
    pub(crate) fn backward_into(
        &self,
        trace: &ForwardTrace,
        loss_grad: &[f64],
        gates: &[Option<Vec<f64>>],
        acc: &mut [f64],
        mut gate_grads: Option<&mut Vec<Option<Vec<f64>>>>,
        opts: GateOptions,
    ) -> Result<Vec<f64>> {
        if loss_grad.len() != self.output_width() {
            return Err(Error::DimensionMismatch {
                what: "loss gradient",
                expected: self.output_width(),
                got: loss_grad.len(),
            });
        }
        if trace.pre_activations.len() != self.slots.len() || trace.input.len() != self.input_width() {
            return Err(Error::config("forward trace does not belong to this network"));
        }
        self.check_gates(gates)?;
        debug_assert_eq!(acc.len(), self.params.len());

        if let Some(gg) = gate_grads.as_deref_mut() {
            gg.clear();
            gg.resize(self.slots.len(), None);
        }
        let mut g = loss_grad.to_vec();
        for k in (0..self.slots.len()).rev() {
            let s = self.slots[k];
            if let Some(Some(c)) = gates.get(k) {
                if let Some(gg) = gate_grads.as_deref_mut() {
                    let f = trace.activated(k);
                    gg[k] = Some(g.iter().zip(f).map(|(d, fj)| d * fj).collect());
                }
                for (d, &cj) in g.iter_mut().zip(c) {
                    *d *= cj * opts.hadamard_sign;
                }
            }
            let mut ga = vec![0.0; s.fan_out];
            self.activations[k].backprop(&trace.pre_activations[k], trace.activated(k), &g, &mut ga);
            if ga.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "gradient", layer: k });
            }

            let h_prev: &[f64] = if k == 0 { &trace.input } else { &trace.post_activations[k - 1] };
            for (dst, &gj) in acc[s.biases..s.biases + s.fan_out].iter_mut().zip(&ga) {
                *dst += gj;
            }
            let w = &self.params[s.weights..s.biases];
            let mut g_prev = vec![0.0; s.fan_in];
            for (i, &hi) in h_prev.iter().enumerate() {
                let range = s.weights + i * s.fan_out..s.weights + (i + 1) * s.fan_out;
                let row = &w[i * s.fan_out..(i + 1) * s.fan_out];
                let mut sum = 0.0;
                for ((dw, &wij), &gj) in acc[range].iter_mut().zip(row).zip(&ga) {
                    *dw += hi * gj;
                    sum += wij * gj;
                }
                g_prev[i] = sum;
            }
            g = g_prev;
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MlpDoc {
    format_version: u32,
    topology: Vec<usize>,
    activations: Vec<Activation>,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

impl From<Mlp> for MlpDoc {
    fn from(net: Mlp) -> Self {
        MlpDoc {
            format_version: FORMAT_VERSION,
            weights: (0..net.num_layers()).map(|k| net.weight_matrix(k)).collect(),
            biases: (0..net.num_layers()).map(|k| net.biases(k).to_vec()).collect(),
            topology: net.topology,
            activations: net.activations,
        }
    }
}

impl TryFrom<MlpDoc> for Mlp {
    type Error = Error;

    fn try_from(doc: MlpDoc) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::config(format!(
                "unsupported network format_version {} (expected {FORMAT_VERSION})",
                doc.format_version
            )));
        }
        let net = Mlp::from_parts(&doc.topology, &doc.activations, &doc.weights, &doc.biases)?;
        if !net.is_finite() {
            return Err(Error::config("network file contains non-finite parameters"));
        }
        Ok(net)
    }
}
