use serde::{Deserialize, Serialize};

use crate::benchmark::{Dataset, PairTopology, Scorer};
use crate::error::{Error, Result};
use crate::fusion::{derive_label_scored, weighted_joint_loss, JointLoss, SafetyLabel};
use crate::model::{invocation_on, Inference, QualityModel};
use crate::nn::loss::{cross_entropy_grad, mse_grad};
use crate::nn::mlp::GateOptions;
use crate::nn::{adam_step, Activation, AdamState, Gradients, Mlp, TrainConfig};
use crate::rng::{seeded, Stream};
use crate::trace::{InvocationTrace, TracePoint};
use crate::training::{run_schedule, trace_subset, EpochLosses, Session, Stopwatch, Trained};

/// Approximator and predictor that share their first hidden layer.
///
/// `shared` maps the input to the first hidden layer; the two tails start
/// from that representation. The predictor tail ends in a 2-way softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedNet {
    pub shared: Mlp,
    pub approx_tail: Mlp,
    pub pred_tail: Mlp,
}

/// Per-part gradients of the joint loss.
#[derive(Debug, Clone)]
pub struct SharedGradients {
    pub shared: Gradients,
    pub approx_tail: Gradients,
    pub pred_tail: Gradients,
    pub loss: JointLoss,
}

struct SharedForward {
    shared: crate::nn::ForwardTrace,
    approx: crate::nn::ForwardTrace,
    pred: crate::nn::ForwardTrace,
}

impl SharedNet {
    pub fn new(shared: Mlp, approx_tail: Mlp, pred_tail: Mlp) -> Result<Self> {
        if shared.num_layers() != 1 {
            return Err(Error::config("shared part must be a single layer"));
        }
        if approx_tail.input_width() != shared.output_width() || pred_tail.input_width() != shared.output_width() {
            return Err(Error::config("both tails must start at the shared layer width"));
        }
        if pred_tail.output_width() != 2 || *pred_tail.activations().last().unwrap() != Activation::Softmax {
            return Err(Error::config("predictor tail must end in a 2-way softmax"));
        }
        Ok(SharedNet {
            shared,
            approx_tail,
            pred_tail,
        })
    }

    /// Shares the approximator's first hidden layer; the predictor keeps its
    /// own layers after the first.
    pub fn seeded(topology: &PairTopology, seed: u64) -> Result<Self> {
        let (a, p) = (&topology.approx, &topology.pred);
        if a.len() < 3 || p.len() < 2 || a[0] != p[0] {
            return Err(Error::config("weight sharing needs a hidden layer and a common input width"));
        }
        let width = a[1];
        let shared = Mlp::new(&a[..2], &[Activation::Relu], &mut seeded(seed, Stream::InitShared))?;
        let approx_tail =
            Mlp::with_activations(&a[1..], Activation::Relu, Activation::Linear, &mut seeded(seed, Stream::InitApprox))?;
        let mut pred_topo = vec![width];
        pred_topo.extend_from_slice(if p.len() > 2 { &p[2..] } else { &p[1..] });
        let pred_tail =
            Mlp::with_activations(&pred_topo, Activation::Relu, Activation::Softmax, &mut seeded(seed, Stream::InitPred))?;
        Self::new(shared, approx_tail, pred_tail)
    }

    fn forward(&self, x: &[f64]) -> Result<SharedForward> {
        let shared = self.shared.forward(x)?;
        let approx = self.approx_tail.forward(shared.output())?;
        let pred = self.pred_tail.forward(shared.output())?;
        Ok(SharedForward { shared, approx, pred })
    }

    /// Gradients of `L_a + w·L_p` for one sample. Both tails' input
    /// gradients are summed into the shared layer.
    pub fn gradients(&self, x: &[f64], y: &[f64], label: SafetyLabel, weight: f64) -> Result<SharedGradients> {
        let fwd = self.forward(x)?;
        let mut shared = self.shared.zero_gradients();
        let mut approx_tail = self.approx_tail.zero_gradients();
        let mut pred_tail = self.pred_tail.zero_gradients();
        let loss = self.backward_into(
            &fwd,
            y,
            label,
            weight,
            [&mut shared.params, &mut approx_tail.params, &mut pred_tail.params],
        )?;
        Ok(SharedGradients {
            shared,
            approx_tail,
            pred_tail,
            loss,
        })
    }

    fn backward_into(
        &self,
        fwd: &SharedForward,
        y: &[f64],
        label: SafetyLabel,
        weight: f64,
        acc: [&mut [f64]; 3],
    ) -> Result<JointLoss> {
        let [shared_acc, approx_acc, pred_acc] = acc;
        let loss = weighted_joint_loss(fwd.approx.output(), y, fwd.pred.output(), label, weight)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFinite { what: "joint loss", layer: 0 });
        }
        let dh = mse_grad(fwd.approx.output(), y)?;
        let mut dp = cross_entropy_grad(fwd.pred.output(), label.class())?;
        dp.iter_mut().for_each(|g| *g *= weight);
        let opts = GateOptions::default();
        let ga = self.approx_tail.backward_into(&fwd.approx, &dh, &[], approx_acc, None, opts)?;
        let gp = self.pred_tail.backward_into(&fwd.pred, &dp, &[], pred_acc, None, opts)?;
        let g: Vec<f64> = ga.iter().zip(&gp).map(|(a, b)| a + b).collect();
        self.shared.backward_into(&fwd.shared, &g, &[], shared_acc, None, opts)?;
        Ok(loss)
    }
}

impl QualityModel for SharedNet {
    fn infer(&self, x: &[f64]) -> Result<Inference> {
        let fwd = self.forward(x)?;
        Ok(Inference {
            output: fwd.approx.output().to_vec(),
            p_safe: fwd.pred.output()[1],
        })
    }

    fn param_count(&self) -> usize {
        self.shared.param_count() + self.approx_tail.param_count() + self.pred_tail.param_count()
    }
}

/// Joint training of the shared network on `L_a + w·L_p`, labels recomputed
/// from the current approximation every batch.
pub fn train_weight_sharing(net: SharedNet, data: &Dataset, cfg: &TrainConfig) -> Result<Trained<SharedNet>> {
    cfg.validate()?;
    let clock = Stopwatch::start();
    let indices: Vec<usize> = data.train_indices().collect();
    let mut session = SharedSession {
        states: [
            AdamState::new(net.shared.param_count()),
            AdamState::new(net.approx_tail.param_count()),
            AdamState::new(net.pred_tail.param_count()),
        ],
        grads: [
            vec![0.0; net.shared.param_count()],
            vec![0.0; net.approx_tail.param_count()],
            vec![0.0; net.pred_tail.param_count()],
        ],
        scorer: data.scorer(cfg.error_metric, cfg.error_bound)?,
        trace_idx: trace_subset(&indices, cfg),
        losses: EpochLosses::default(),
        net,
        data,
        cfg,
    };
    let mut trace = InvocationTrace::default();
    let iterations = run_schedule("weightshare", &indices, cfg, 7, &mut trace, &mut session)?;
    Ok(Trained {
        net: session.net,
        trace,
        iterations,
        train_time: clock.elapsed(),
    })
}

struct SharedSession<'a> {
    net: SharedNet,
    data: &'a Dataset,
    cfg: &'a TrainConfig,
    scorer: Scorer,
    states: [AdamState; 3],
    grads: [Vec<f64>; 3],
    trace_idx: Vec<usize>,
    losses: EpochLosses,
}

impl Session for SharedSession<'_> {
    fn step(&mut self, batch: &[usize]) -> Result<()> {
        for g in &mut self.grads {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        for &i in batch {
            let (x, y) = (self.data.input(i), self.data.target(i));
            let fwd = self.net.forward(x)?;
            let label = derive_label_scored(fwd.approx.output(), y, &self.scorer);
            let [s, a, p] = &mut self.grads;
            let loss = self
                .net
                .backward_into(&fwd, y, label, self.cfg.prediction_loss_weight, [s, a, p])?;
            self.losses.add(loss.approx, loss.pred);
        }
        let scale = 1.0 / batch.len() as f64;
        let SharedNet {
            shared,
            approx_tail,
            pred_tail,
        } = &mut self.net;
        for ((net, g), st) in [shared, approx_tail, pred_tail]
            .into_iter()
            .zip(&mut self.grads)
            .zip(&mut self.states)
        {
            g.iter_mut().for_each(|v| *v *= scale);
            adam_step(net.params_mut(), g, st, self.cfg)?;
            if !net.is_finite() {
                return Err(Error::NonFinite { what: "parameters", layer: 0 });
            }
        }
        Ok(())
    }

    fn epoch_end(&mut self, epoch: usize, iteration: usize, trace: &mut InvocationTrace) -> Result<()> {
        let (loss_approx, loss_pred) = self.losses.take();
        if !loss_approx.is_finite() || !loss_pred.is_finite() {
            return Err(Error::NonFinite { what: "epoch loss", layer: 0 });
        }
        if self.trace_idx.is_empty() {
            return Ok(());
        }
        let (t, p) = invocation_on(&self.net, self.data, &self.trace_idx, &self.scorer)?;
        trace.push(TracePoint {
            phase: "weightshare".into(),
            epoch,
            iteration,
            true_invocation: t,
            predicted_invocation: p,
            loss_approx,
            loss_pred,
        });
        Ok(())
    }
}
