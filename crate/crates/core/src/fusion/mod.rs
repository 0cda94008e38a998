//! The fused approximator/predictor network.
//!
//! The prediction subnet's output layer is split into one control vector per
//! gated hidden layer of the approximation subnet, followed by the safety
//! prediction `P(x)`:
//!
//! ```text
//! pred(x) = [ c(1) | c(2) | ... | c(l) | P(x) ]
//! h(k)    = f(a(k)) ⊙ c(k)
//! ```
//!
//! The prediction subnet's last layer is linear; the head activation (softmax
//! over two logits or a single sigmoid) is applied to the `P(x)` slice and
//! the control activation to each control slice.

mod quadratic;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use quadratic::{quadratic_expansion_check, QuadraticCheck};
pub use train::train_axnet;

use crate::benchmark::{error_value, is_safe, ErrorMetric, FusedTopology, Scorer};
use crate::error::{Error, Result};
use crate::model::{Inference, QualityModel};
use crate::nn::activation::sigmoid;
use crate::nn::loss::{cross_entropy, cross_entropy_grad, mse, mse_grad};
use crate::nn::mlp::{GateOptions, FORMAT_VERSION};
use crate::nn::{Activation, ForwardTrace, Gradients, Mlp};
use crate::rng::{seeded, Stream};

/// Activation of the safety output `P(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredHead {
    /// Two logits, `[unsafe, safe]`.
    Softmax,
    /// One logit, the probability of `safe`.
    Sigmoid,
}

impl PredHead {
    pub fn width(self) -> usize {
        match self {
            PredHead::Softmax => 2,
            PredHead::Sigmoid => 1,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "softmax" => Ok(PredHead::Softmax),
            "sigmoid" => Ok(PredHead::Sigmoid),
            other => Err(Error::unknown("prediction head", other, &["softmax", "sigmoid"])),
        }
    }
}

/// Which hidden layers of the approximation subnet receive a control vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatingMode {
    AllLayers,
    /// One-based hidden layer index.
    SingleLayer(usize),
}

impl GatingMode {
    pub fn parse(name: &str) -> Result<Self> {
        if name == "all" || name == "all_layers" {
            return Ok(GatingMode::AllLayers);
        }
        name.strip_prefix("single:")
            .or_else(|| name.strip_prefix("single_layer:"))
            .and_then(|k| k.parse().ok())
            .map(GatingMode::SingleLayer)
            .ok_or_else(|| Error::unknown("gating mode", name, &["all", "single:<k>"]))
    }

    /// One-based indices of gated hidden layers, for `hidden` hidden layers.
    pub fn gated_layers(self, hidden: usize) -> Result<Vec<usize>> {
        match self {
            GatingMode::AllLayers => Ok((1..=hidden).collect()),
            GatingMode::SingleLayer(k) if (1..=hidden).contains(&k) => Ok(vec![k]),
            GatingMode::SingleLayer(k) => Err(Error::config(format!(
                "single_layer({k}) needs 1 <= k <= {hidden} (hidden layers in the approximation subnet)"
            ))),
        }
    }
}

/// Prediction-subnet output width: gated widths plus the `P(x)` slice.
pub fn control_width(gated_widths: &[usize], head: PredHead) -> usize {
    gated_widths.iter().sum::<usize>() + head.width()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlSlice {
    /// One-based hidden layer of the approximation subnet.
    pub layer: usize,
    pub offset: usize,
    pub len: usize,
}

/// Partition of the prediction output into control slices and `P(x)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceMap {
    pub controls: Vec<ControlSlice>,
    pub p_offset: usize,
    pub p_len: usize,
}

impl SliceMap {
    pub fn build(approx_topology: &[usize], gating: GatingMode, head: PredHead) -> Result<Self> {
        let hidden = approx_topology.len().saturating_sub(2);
        if hidden == 0 {
            return Err(Error::config("approximation subnet needs at least one hidden layer to gate"));
        }
        let mut offset = 0;
        let mut controls = Vec::new();
        for layer in gating.gated_layers(hidden)? {
            let len = approx_topology[layer];
            controls.push(ControlSlice { layer, offset, len });
            offset += len;
        }
        Ok(SliceMap {
            controls,
            p_offset: offset,
            p_len: head.width(),
        })
    }

    pub fn width(&self) -> usize {
        self.p_offset + self.p_len
    }

    /// Control slice gating approximation layer `layer` (1-based).
    pub fn slice_for(&self, layer: usize) -> Option<&ControlSlice> {
        self.controls.iter().find(|s| s.layer == layer)
    }
}

/// Safe-to-approximate label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SafetyLabel {
    pub safe: bool,
}

impl SafetyLabel {
    pub fn class(self) -> usize {
        self.safe as usize
    }
}

/// `safe ⇔ Err(H - y) < bound`.
pub fn derive_label(h: &[f64], y: &[f64], metric: ErrorMetric, bound: f64) -> Result<SafetyLabel> {
    if !(bound > 0.0) {
        return Err(Error::config("error bound must be > 0"));
    }
    Ok(SafetyLabel {
        safe: is_safe(error_value(h, y, metric)?, bound),
    })
}

/// The label for normalized `h`, `y` under a scorer.
pub fn derive_label_scored(h: &[f64], y: &[f64], scorer: &Scorer) -> SafetyLabel {
    SafetyLabel {
        safe: scorer.is_safe(h, y),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLoss {
    pub total: f64,
    pub approx: f64,
    pub pred: f64,
}

/// `J = L_a + L_p` with `L_a = MSE(H, y)` and `L_p` the cross-entropy of the
/// safety prediction against the label.
///
/// `p` is a two-class distribution `[unsafe, safe]` or a single sigmoid
/// probability of `safe`.
pub fn joint_loss(h: &[f64], y: &[f64], p: &[f64], label: SafetyLabel) -> Result<JointLoss> {
    weighted_joint_loss(h, y, p, label, 1.0)
}

pub fn weighted_joint_loss(h: &[f64], y: &[f64], p: &[f64], label: SafetyLabel, weight: f64) -> Result<JointLoss> {
    let approx = mse(h, y)?;
    let pred = cross_entropy(p, label.class())?;
    Ok(JointLoss {
        total: approx + weight * pred,
        approx,
        pred,
    })
}

/// Everything `fused_backward` needs from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedForward {
    pub approx: ForwardTrace,
    pub pred: ForwardTrace,
    /// Control vector per approximation layer (`None` where ungated).
    pub controls: Vec<Option<Vec<f64>>>,
    /// Head probabilities as the loss sees them: `[unsafe, safe]` for
    /// softmax, `[safe]` for sigmoid.
    pub head_probs: Vec<f64>,
}

impl FusedForward {
    pub fn output(&self) -> &[f64] {
        self.approx.output()
    }

    pub fn p_safe(&self) -> f64 {
        *self.head_probs.last().unwrap()
    }

    /// The `i`-th control vector, counting gated layers from 1.
    pub fn control(&self, layer: usize) -> Option<&[f64]> {
        self.controls.get(layer - 1)?.as_deref()
    }
}

/// Backward-pass switches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackwardOptions {
    pub prediction_loss_weight: f64,
    /// Route `dL_a/dc` into the prediction subnet. Disabling it leaves only
    /// the `L_p` path, which is useful for comparing against ungated nets.
    pub route_control_grad: bool,
    /// Sign applied on the Hadamard path of the approximation backward.
    /// Anything other than `1.0` is a deliberate fault for mutation tests.
    #[doc(hidden)]
    pub hadamard_sign: f64,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        BackwardOptions {
            prediction_loss_weight: 1.0,
            route_control_grad: true,
            hadamard_sign: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedGradients {
    pub approx: Gradients,
    pub pred: Gradients,
    pub loss: JointLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FusedDoc", into = "FusedDoc")]
pub struct FusedNet {
    approx: Mlp,
    pred: Mlp,
    gating: GatingMode,
    head: PredHead,
    control_activation: Activation,
    slices: SliceMap,
}

/// Default nonlinearity applied to control slices.
pub const DEFAULT_CONTROL_ACTIVATION: Activation = Activation::Sigmoid;

impl FusedNet {
    /// Wraps two existing subnets. The approximation subnet must have at
    /// least one hidden layer and the prediction subnet a linear final layer
    /// whose width matches the slice map.
    pub fn from_parts(
        approx: Mlp,
        pred: Mlp,
        gating: GatingMode,
        head: PredHead,
        control_activation: Activation,
    ) -> Result<Self> {
        if approx.input_width() != pred.input_width() {
            return Err(Error::DimensionMismatch {
                what: "prediction subnet input",
                expected: approx.input_width(),
                got: pred.input_width(),
            });
        }
        if *pred.activations().last().unwrap() != Activation::Linear {
            return Err(Error::config("prediction subnet's final layer must be linear; heads are applied per slice"));
        }
        if control_activation == Activation::Softmax {
            return Err(Error::config("softmax is not a valid control activation"));
        }
        let slices = SliceMap::build(approx.topology(), gating, head)?;
        if slices.width() != pred.output_width() {
            return Err(Error::config(format!(
                "prediction subnet emits {} values but the slice map needs {} (gated widths + {})",
                pred.output_width(),
                slices.width(),
                head.width()
            )));
        }
        Ok(FusedNet {
            approx,
            pred,
            gating,
            head,
            control_activation,
            slices,
        })
    }

    /// Fresh network: ReLU hidden layers, linear approximation output,
    /// Glorot-uniform weights.
    pub fn new<R: Rng + ?Sized>(
        approx_topology: &[usize],
        pred_topology: &[usize],
        gating: GatingMode,
        head: PredHead,
        approx_rng: &mut R,
        pred_rng: &mut R,
    ) -> Result<Self> {
        let approx = Mlp::with_activations(approx_topology, Activation::Relu, Activation::Linear, approx_rng)?;
        let pred = Mlp::with_activations(pred_topology, Activation::Relu, Activation::Linear, pred_rng)?;
        Self::from_parts(approx, pred, gating, head, DEFAULT_CONTROL_ACTIVATION)
    }

    /// Fresh network seeded from one experiment seed.
    pub fn seeded(topology: &FusedTopology, gating: GatingMode, seed: u64) -> Result<Self> {
        Self::new(
            &topology.approx,
            &topology.pred,
            gating,
            topology.head,
            &mut seeded(seed, Stream::InitApprox),
            &mut seeded(seed, Stream::InitPred),
        )
    }

    pub fn with_control_activation(mut self, act: Activation) -> Result<Self> {
        if act == Activation::Softmax {
            return Err(Error::config("softmax is not a valid control activation"));
        }
        self.control_activation = act;
        Ok(self)
    }

    pub fn approx(&self) -> &Mlp {
        &self.approx
    }

    pub fn pred(&self) -> &Mlp {
        &self.pred
    }

    pub fn approx_mut(&mut self) -> &mut Mlp {
        &mut self.approx
    }

    pub fn pred_mut(&mut self) -> &mut Mlp {
        &mut self.pred
    }

    pub fn gating(&self) -> GatingMode {
        self.gating
    }

    pub fn head(&self) -> PredHead {
        self.head
    }

    pub fn control_activation(&self) -> Activation {
        self.control_activation
    }

    pub fn slices(&self) -> &SliceMap {
        &self.slices
    }

    pub fn param_count(&self) -> usize {
        self.approx.param_count() + self.pred.param_count()
    }

    pub fn topology(&self) -> FusedTopology {
        FusedTopology {
            approx: self.approx.topology().to_vec(),
            pred: self.pred.topology().to_vec(),
            head: self.head,
            reported_params: self.param_count(),
        }
    }

    pub fn fused_forward(&self, x: &[f64]) -> Result<FusedForward> {
        self.check_input(x)?;
        let pred = self.pred.forward(x)?;
        let z = pred.output();
        let mut controls = vec![None; self.approx.num_layers()];
        for s in &self.slices.controls {
            let mut c = vec![0.0; s.len];
            self.control_activation.apply(&z[s.offset..s.offset + s.len], &mut c);
            controls[s.layer - 1] = Some(c);
        }
        let head_probs = self.head_probs(z);
        let approx = self.approx.forward_gated(x, &controls)?;
        Ok(FusedForward {
            approx,
            pred,
            controls,
            head_probs,
        })
    }

    /// Forward pass with control vectors supplied by the caller instead of
    /// the prediction subnet. `controls[k]` gates approximation layer `k`.
    pub fn forward_with_controls(&self, x: &[f64], controls: &[Option<Vec<f64>>]) -> Result<FusedForward> {
        self.check_input(x)?;
        if controls.len() != self.approx.num_layers() {
            return Err(Error::DimensionMismatch {
                what: "control list",
                expected: self.approx.num_layers(),
                got: controls.len(),
            });
        }
        let pred = self.pred.forward(x)?;
        let head_probs = self.head_probs(pred.output());
        let approx = self.approx.forward_gated(x, controls)?;
        Ok(FusedForward {
            approx,
            pred,
            controls: controls.to_vec(),
            head_probs,
        })
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.approx.input_width() {
            return Err(Error::DimensionMismatch {
                what: "fused network input",
                expected: self.approx.input_width(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn head_probs(&self, z: &[f64]) -> Vec<f64> {
        let p = &z[self.slices.p_offset..self.slices.p_offset + self.slices.p_len];
        match self.head {
            PredHead::Softmax => {
                let mut out = vec![0.0; 2];
                Activation::Softmax.apply(p, &mut out);
                out
            }
            PredHead::Sigmoid => vec![sigmoid(p[0])],
        }
    }

    pub fn loss(&self, fwd: &FusedForward, y: &[f64], label: SafetyLabel, weight: f64) -> Result<JointLoss> {
        weighted_joint_loss(fwd.output(), y, &fwd.head_probs, label, weight)
    }

    /// Gradients of `J = L_a + w·L_p` for both subnets.
    ///
    /// The approximation subnet receives `dL_a/dθ` with the control vectors
    /// held constant. The prediction subnet receives `dL_a/dc(k) =
    /// dL_a/dh(k) ⊙ f(a(k))` through its control slices and `w·dL_p/dz`
    /// through the `P(x)` slice, backpropagated together.
    pub fn fused_backward(
        &self,
        fwd: &FusedForward,
        y: &[f64],
        label: SafetyLabel,
        opts: &BackwardOptions,
    ) -> Result<FusedGradients> {
        let mut approx = self.approx.zero_gradients();
        let mut pred = self.pred.zero_gradients();
        let (loss, approx_in, pred_in) = self.backward_into(fwd, y, label, opts, &mut approx.params, &mut pred.params)?;
        approx.input = approx_in;
        pred.input = pred_in;
        Ok(FusedGradients { approx, pred, loss })
    }

    pub(crate) fn backward_into(
        &self,
        fwd: &FusedForward,
        y: &[f64],
        label: SafetyLabel,
        opts: &BackwardOptions,
        approx_acc: &mut [f64],
        pred_acc: &mut [f64],
    ) -> Result<(JointLoss, Vec<f64>, Vec<f64>)> {
        let loss = self.loss(fwd, y, label, opts.prediction_loss_weight)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFinite { what: "joint loss", layer: self.approx.num_layers() });
        }
        let dh = mse_grad(fwd.output(), y)?;
        let mut gate_grads = Vec::new();
        let approx_in = self.approx.backward_into(
            &fwd.approx,
            &dh,
            &fwd.controls,
            approx_acc,
            Some(&mut gate_grads),
            GateOptions {
                hadamard_sign: opts.hadamard_sign,
            },
        )?;

        let z = fwd.pred.output();
        let mut dz = vec![0.0; z.len()];
        if opts.route_control_grad {
            for s in &self.slices.controls {
                let Some(dc) = gate_grads[s.layer - 1].as_ref() else { continue };
                let zs = &z[s.offset..s.offset + s.len];
                let c = fwd.controls[s.layer - 1].as_deref().unwrap();
                self.control_activation.backprop(zs, c, dc, &mut dz[s.offset..s.offset + s.len]);
            }
        }
        let dp = cross_entropy_grad(&fwd.head_probs, label.class())?;
        let (po, pl) = (self.slices.p_offset, self.slices.p_len);
        let w = opts.prediction_loss_weight;
        match self.head {
            PredHead::Softmax => {
                let mut dzp = vec![0.0; pl];
                Activation::Softmax.backprop(&z[po..po + pl], &fwd.head_probs, &dp, &mut dzp);
                for (d, g) in dz[po..po + pl].iter_mut().zip(dzp) {
                    *d += w * g;
                }
            }
            PredHead::Sigmoid => {
                let s = fwd.head_probs[0];
                dz[po] += w * dp[0] * s * (1.0 - s);
            }
        }
        let pred_in = self.pred.backward_into(&fwd.pred, &dz, &[], pred_acc, None, GateOptions::default())?;
        Ok((loss, approx_in, pred_in))
    }
}

impl QualityModel for FusedNet {
    fn infer(&self, x: &[f64]) -> Result<Inference> {
        let fwd = self.fused_forward(x)?;
        let p_safe = fwd.p_safe();
        Ok(Inference {
            output: fwd.approx.post_activations.last().cloned().unwrap_or_default(),
            p_safe,
        })
    }

    fn param_count(&self) -> usize {
        FusedNet::param_count(self)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FusedDoc {
    format_version: u32,
    gating_mode: GatingMode,
    pred_head: PredHead,
    control_activation: Activation,
    slice_map: SliceMap,
    approx: Mlp,
    pred: Mlp,
}

impl From<FusedNet> for FusedDoc {
    fn from(n: FusedNet) -> Self {
        FusedDoc {
            format_version: FORMAT_VERSION,
            gating_mode: n.gating,
            pred_head: n.head,
            control_activation: n.control_activation,
            slice_map: n.slices,
            approx: n.approx,
            pred: n.pred,
        }
    }
}

impl TryFrom<FusedDoc> for FusedNet {
    type Error = Error;

    fn try_from(d: FusedDoc) -> Result<Self> {
        if d.format_version != FORMAT_VERSION {
            return Err(Error::config(format!("unsupported fused format_version {}", d.format_version)));
        }
        let net = FusedNet::from_parts(d.approx, d.pred, d.gating_mode, d.pred_head, d.control_activation)?;
        if net.slices != d.slice_map {
            return Err(Error::config("stored slice map disagrees with the topology and gating mode"));
        }
        Ok(net)
    }
}
