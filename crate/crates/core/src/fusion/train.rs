use super::{derive_label_scored, BackwardOptions, FusedNet};
use crate::benchmark::{Dataset, Scorer};
use crate::error::{Error, Result};
use crate::model::invocation_on;
use crate::nn::{adam_step, AdamState, TrainConfig};
use crate::trace::{InvocationTrace, TracePoint};
use crate::training::{run_schedule, trace_subset, EpochLosses, Session, Stopwatch, Trained};

/// End-to-end training of both subnets on the joint loss.
///
/// Every minibatch: forward through the prediction subnet and the gated
/// approximation subnet, label each sample from the current approximation
/// error, accumulate the averaged joint-loss gradients and take one Adam step
/// on each subnet.
pub fn train_axnet(net: FusedNet, data: &Dataset, cfg: &TrainConfig) -> Result<Trained<FusedNet>> {
    let indices: Vec<usize> = data.train_indices().collect();
    train_axnet_on(net, data, &indices, cfg)
}

pub(crate) fn train_axnet_on(net: FusedNet, data: &Dataset, indices: &[usize], cfg: &TrainConfig) -> Result<Trained<FusedNet>> {
    cfg.validate()?;
    if data.input_dim() != net.approx().input_width() || data.output_dim() != net.approx().output_width() {
        return Err(Error::config(format!(
            "network {}→{} does not fit dataset {}→{}",
            net.approx().input_width(),
            net.approx().output_width(),
            data.input_dim(),
            data.output_dim()
        )));
    }
    let clock = Stopwatch::start();
    let mut session = AxnetSession {
        approx_state: AdamState::new(net.approx().param_count()),
        pred_state: AdamState::new(net.pred().param_count()),
        approx_grad: vec![0.0; net.approx().param_count()],
        pred_grad: vec![0.0; net.pred().param_count()],
        scorer: data.scorer(cfg.error_metric, cfg.error_bound)?,
        opts: BackwardOptions {
            prediction_loss_weight: cfg.prediction_loss_weight,
            ..BackwardOptions::default()
        },
        trace_idx: trace_subset(indices, cfg),
        losses: EpochLosses::default(),
        net,
        data,
        cfg,
    };
    let mut trace = InvocationTrace::default();
    let iterations = run_schedule("axnet", indices, cfg, 0, &mut trace, &mut session)?;
    Ok(Trained {
        net: session.net,
        trace,
        iterations,
        train_time: clock.elapsed(),
    })
}

struct AxnetSession<'a> {
    net: FusedNet,
    data: &'a Dataset,
    cfg: &'a TrainConfig,
    scorer: Scorer,
    opts: BackwardOptions,
    approx_state: AdamState,
    pred_state: AdamState,
    approx_grad: Vec<f64>,
    pred_grad: Vec<f64>,
    trace_idx: Vec<usize>,
    losses: EpochLosses,
}

impl Session for AxnetSession<'_> {
    fn step(&mut self, batch: &[usize]) -> Result<()> {
        self.approx_grad.iter_mut().for_each(|g| *g = 0.0);
        self.pred_grad.iter_mut().for_each(|g| *g = 0.0);
        for &i in batch {
            let (x, y) = (self.data.input(i), self.data.target(i));
            let fwd = self.net.fused_forward(x)?;
            let label = derive_label_scored(fwd.output(), y, &self.scorer);
            let (loss, _, _) =
                self.net
                    .backward_into(&fwd, y, label, &self.opts, &mut self.approx_grad, &mut self.pred_grad)?;
            self.losses.add(loss.approx, loss.pred);
        }
        let scale = 1.0 / batch.len() as f64;
        self.approx_grad.iter_mut().for_each(|g| *g *= scale);
        self.pred_grad.iter_mut().for_each(|g| *g *= scale);
        adam_step(self.net.approx_mut().params_mut(), &self.approx_grad, &mut self.approx_state, self.cfg)?;
        adam_step(self.net.pred_mut().params_mut(), &self.pred_grad, &mut self.pred_state, self.cfg)?;
        if !self.net.approx().is_finite() || !self.net.pred().is_finite() {
            return Err(Error::NonFinite { what: "parameters", layer: 0 });
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
        let (true_invocation, predicted_invocation) = invocation_on(&self.net, self.data, &self.trace_idx, &self.scorer)?;
        trace.push(TracePoint {
            phase: "joint".into(),
            epoch,
            iteration,
            true_invocation,
            predicted_invocation,
            loss_approx,
            loss_pred,
        });
        Ok(())
    }
}
