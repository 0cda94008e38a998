use serde::{Deserialize, Serialize};

use crate::benchmark::{Dataset, PairTopology, Scorer};
use crate::error::{Error, Result};
use crate::model::{invocation_on, Inference, QualityModel};
use crate::nn::loss::{cross_entropy, cross_entropy_grad, mse, mse_grad};
use crate::nn::mlp::GateOptions;
use crate::nn::{adam_step, Activation, AdamState, Mlp, TrainConfig};
use crate::rng::{seeded, Stream};
use crate::trace::{InvocationTrace, TracePoint};
use crate::training::{run_schedule, trace_subset, EpochLosses, Session, Stopwatch, Trained};

pub const DEFAULT_ROUNDS: usize = 5;

/// Standalone approximator and two-class predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatePair {
    pub approximator: Mlp,
    pub predictor: Mlp,
}

impl SeparatePair {
    pub fn new(approximator: Mlp, predictor: Mlp) -> Result<Self> {
        if approximator.input_width() != predictor.input_width() {
            return Err(Error::config("approximator and predictor must share an input width"));
        }
        if predictor.output_width() != 2 || *predictor.activations().last().unwrap() != Activation::Softmax {
            return Err(Error::config("predictor must end in a 2-way softmax"));
        }
        Ok(SeparatePair {
            approximator,
            predictor,
        })
    }

    pub fn seeded(topology: &PairTopology, seed: u64) -> Result<Self> {
        let approximator = Mlp::with_activations(
            &topology.approx,
            Activation::Relu,
            Activation::Linear,
            &mut seeded(seed, Stream::InitApprox),
        )?;
        let predictor = Mlp::with_activations(
            &topology.pred,
            Activation::Relu,
            Activation::Softmax,
            &mut seeded(seed, Stream::InitPred),
        )?;
        Self::new(approximator, predictor)
    }
}

impl QualityModel for SeparatePair {
    fn infer(&self, x: &[f64]) -> Result<Inference> {
        Ok(Inference {
            output: self.approximator.predict(x)?,
            p_safe: self.predictor.predict(x)?[1],
        })
    }

    fn param_count(&self) -> usize {
        self.approximator.param_count() + self.predictor.param_count()
    }
}

/// What the iterative trainer did.
#[derive(Debug, Clone)]
pub struct IterativeOutcome {
    pub trained: Trained<SeparatePair>,
    /// Size of the approximator's training set in each completed round.
    pub subset_sizes: Vec<usize>,
    pub rounds_completed: usize,
    /// Set when a round found no safe samples and training stopped early.
    pub stopped_early: bool,
}

/// Approximator to convergence on MSE, then the predictor on labels derived
/// from the frozen approximator.
pub fn train_onepass(pair: SeparatePair, data: &Dataset, cfg: &TrainConfig) -> Result<Trained<SeparatePair>> {
    let clock = Stopwatch::start();
    let scorer = data.scorer(cfg.error_metric, cfg.error_bound)?;
    let train: Vec<usize> = data.train_indices().collect();
    let mut trace = InvocationTrace::default();
    let mut pair = pair;
    let iterations = run_round(&mut pair, data, &train, &train, cfg, &scorer, 0, &mut trace)?;
    Ok(Trained {
        net: pair,
        trace,
        iterations,
        train_time: clock.elapsed(),
    })
}

/// Alternating retraining. Round 1 is a one-pass round; each later round
/// retrains the approximator on the training samples that were safe at the
/// end of the previous round, relabels the whole training set and retrains
/// the predictor. The iteration budget is split evenly across rounds.
pub fn train_iterative(pair: SeparatePair, data: &Dataset, cfg: &TrainConfig, rounds: usize) -> Result<IterativeOutcome> {
    if rounds == 0 {
        return Err(Error::config("iterative training needs at least one round"));
    }
    let clock = Stopwatch::start();
    let round_cfg = TrainConfig {
        max_iterations: (cfg.max_iterations / rounds).max(1),
        ..cfg.clone()
    };
    let scorer = data.scorer(cfg.error_metric, cfg.error_bound)?;
    let train: Vec<usize> = data.train_indices().collect();
    let mut trace = InvocationTrace::default();
    let mut pair = pair;
    let mut subset = train.clone();
    let mut subset_sizes = Vec::with_capacity(rounds);
    let mut iterations = 0;
    let mut stopped_early = false;
    for round in 0..rounds {
        if subset.is_empty() {
            stopped_early = true;
            break;
        }
        subset_sizes.push(subset.len());
        iterations += run_round(&mut pair, data, &subset, &train, &round_cfg, &scorer, round, &mut trace)?;
        subset = safe_subset(&pair.approximator, data, &train, &scorer)?;
    }
    Ok(IterativeOutcome {
        rounds_completed: subset_sizes.len(),
        subset_sizes,
        stopped_early,
        trained: Trained {
            net: pair,
            trace,
            iterations,
            train_time: clock.elapsed(),
        },
    })
}

/// Training indices whose current approximation is safe.
pub(crate) fn safe_subset(approx: &Mlp, data: &Dataset, indices: &[usize], scorer: &Scorer) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for &i in indices {
        if scorer.is_safe(&approx.predict(data.input(i))?, data.target(i)) {
            out.push(i);
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn run_round(
    pair: &mut SeparatePair,
    data: &Dataset,
    approx_set: &[usize],
    full_set: &[usize],
    cfg: &TrainConfig,
    scorer: &Scorer,
    round: usize,
    trace: &mut InvocationTrace,
) -> Result<usize> {
    let trace_idx = trace_subset(full_set, cfg);
    let mut it = {
        let mut s = PhaseSession::new(pair, data, cfg, scorer, &trace_idx, Phase::Approximator, round, None);
        run_schedule("approximator", approx_set, cfg, 2 * round as u64 + 1, trace, &mut s)?
    };
    let mut labels = vec![false; data.len()];
    for &i in full_set {
        labels[i] = scorer.is_safe(&pair.approximator.predict(data.input(i))?, data.target(i));
    }
    let mut s = PhaseSession::new(pair, data, cfg, scorer, &trace_idx, Phase::Predictor, round, Some(labels));
    it += run_schedule("predictor", full_set, cfg, 2 * round as u64 + 2, trace, &mut s)?;
    Ok(it)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Approximator,
    Predictor,
}

struct PhaseSession<'a> {
    pair: &'a mut SeparatePair,
    data: &'a Dataset,
    cfg: &'a TrainConfig,
    scorer: &'a Scorer,
    trace_idx: &'a [usize],
    phase: Phase,
    round: usize,
    labels: Option<Vec<bool>>,
    state: AdamState,
    grad: Vec<f64>,
    losses: EpochLosses,
}

impl<'a> PhaseSession<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        pair: &'a mut SeparatePair,
        data: &'a Dataset,
        cfg: &'a TrainConfig,
        scorer: &'a Scorer,
        trace_idx: &'a [usize],
        phase: Phase,
        round: usize,
        labels: Option<Vec<bool>>,
    ) -> Self {
        let n = match phase {
            Phase::Approximator => pair.approximator.param_count(),
            Phase::Predictor => pair.predictor.param_count(),
        };
        PhaseSession {
            pair,
            data,
            cfg,
            scorer,
            trace_idx,
            phase,
            round,
            labels,
            state: AdamState::new(n),
            grad: vec![0.0; n],
            losses: EpochLosses::default(),
        }
    }
}

impl Session for PhaseSession<'_> {
    fn step(&mut self, batch: &[usize]) -> Result<()> {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let net = match self.phase {
            Phase::Approximator => &self.pair.approximator,
            Phase::Predictor => &self.pair.predictor,
        };
        for &i in batch {
            let x = self.data.input(i);
            let tr = net.forward(x)?;
            let grad = match self.phase {
                Phase::Approximator => {
                    let y = self.data.target(i);
                    self.losses.add(mse(tr.output(), y)?, 0.0);
                    mse_grad(tr.output(), y)?
                }
                Phase::Predictor => {
                    let class = self.labels.as_ref().unwrap()[i] as usize;
                    self.losses.add(0.0, cross_entropy(tr.output(), class)?);
                    cross_entropy_grad(tr.output(), class)?
                }
            };
            net.backward_into(&tr, &grad, &[], &mut self.grad, None, GateOptions::default())?;
        }
        let scale = 1.0 / batch.len() as f64;
        self.grad.iter_mut().for_each(|g| *g *= scale);
        let net = match self.phase {
            Phase::Approximator => &mut self.pair.approximator,
            Phase::Predictor => &mut self.pair.predictor,
        };
        adam_step(net.params_mut(), &self.grad, &mut self.state, self.cfg)?;
        if !net.is_finite() {
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
        let (t, p) = invocation_on(&*self.pair, self.data, self.trace_idx, self.scorer)?;
        let name = match self.phase {
            Phase::Approximator => "approximator",
            Phase::Predictor => "predictor",
        };
        trace.push(TracePoint {
            phase: format!("{name}:{}", self.round + 1),
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
