//! Finite-difference checks of every backward pass on random networks.

use rand::Rng as _;

use crate::baselines::SharedNet;
use crate::error::Result;
use crate::fusion::{BackwardOptions, FusedNet, GatingMode, PredHead, SafetyLabel};
use crate::nn::gradcheck::{check_gradient, GradCheck};
use crate::nn::loss::{cross_entropy, cross_entropy_grad, mse, mse_grad};
use crate::nn::{Activation, Mlp};
use crate::rng::{seeded, Rng, Stream};

/// Worst relative error accepted by [`run_suite`].
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentCheck {
    pub component: &'static str,
    pub check: GradCheck,
    pub trials: usize,
}

impl ComponentCheck {
    pub fn passed(&self) -> bool {
        self.check.worst_relative_error < TOLERANCE
    }
}

fn randomize(params: &mut [f64], rng: &mut Rng) {
    for p in params {
        *p = rng.gen_range(-1.0..1.0);
    }
}

fn random_vec(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_widths(len: usize, max: usize, rng: &mut Rng) -> Vec<usize> {
    (0..len).map(|_| rng.gen_range(1..=max)).collect()
}

/// Random fused network with up to three gated hidden layers of at most
/// five units, a random head, gating mode and control activation, and all
/// parameters drawn from `U(-1, 1)`.
pub fn random_fused(rng: &mut Rng) -> FusedNet {
    let n_in = rng.gen_range(1..=4);
    let n_out = rng.gen_range(1..=3);
    let hidden = rng.gen_range(1..=3);
    let mut approx = vec![n_in];
    approx.extend(random_widths(hidden, 5, rng));
    approx.push(n_out);
    let head = if rng.gen_bool(0.5) { PredHead::Softmax } else { PredHead::Sigmoid };
    let gating = if rng.gen_bool(0.5) {
        GatingMode::AllLayers
    } else {
        GatingMode::SingleLayer(rng.gen_range(1..=hidden))
    };
    let control = [Activation::Sigmoid, Activation::Linear, Activation::Relu][rng.gen_range(0..3)];
    let width = crate::fusion::SliceMap::build(&approx, gating, head).unwrap().width();
    let mut pred = vec![n_in];
    pred.extend(random_widths(rng.gen_range(1..=2), 5, rng));
    pred.push(width);
    let mut net = FusedNet::new(&approx, &pred, gating, head, &mut *rng, &mut seeded(0, Stream::Misc))
        .and_then(|n| n.with_control_activation(control))
        .unwrap();
    randomize(net.approx_mut().params_mut(), rng);
    randomize(net.pred_mut().params_mut(), rng);
    net
}

/// Joint loss with both subnets' parameters taken from `params`
/// (approximation subnet first).
fn fused_objective(net: &FusedNet, params: &[f64], x: &[f64], y: &[f64], label: SafetyLabel, w: f64) -> f64 {
    let mut n = net.clone();
    let k = n.approx().param_count();
    n.approx_mut().params_mut().copy_from_slice(&params[..k]);
    n.pred_mut().params_mut().copy_from_slice(&params[k..]);
    let fwd = n.fused_forward(x).unwrap();
    n.loss(&fwd, y, label, w).unwrap().total
}

/// `(approximation subnet, prediction subnet)` checks of the joint-loss
/// gradient for one network and sample.
pub fn check_fused(
    net: &FusedNet,
    x: &[f64],
    y: &[f64],
    label: SafetyLabel,
    opts: &BackwardOptions,
) -> Result<(GradCheck, GradCheck)> {
    let fwd = net.fused_forward(x)?;
    let g = net.fused_backward(&fwd, y, label, opts)?;
    let k = net.approx().param_count();
    let mut params: Vec<f64> = net.approx().params().iter().chain(net.pred().params()).copied().collect();
    let analytic: Vec<f64> = g.approx.params.iter().chain(&g.pred.params).copied().collect();
    let w = opts.prediction_loss_weight;
    let mut run = |range: std::ops::Range<usize>| {
        let full = params.clone();
        check_gradient(&mut params[range.clone()], &analytic[range.clone()], |s| {
            let mut p = full.clone();
            p[range.clone()].copy_from_slice(s);
            fused_objective(net, &p, x, y, label, w)
        })
    };
    let approx = run(0..k);
    let pred = run(k..analytic.len());
    Ok((approx, pred))
}

fn random_mlp(rng: &mut Rng) -> (Mlp, bool) {
    let layers = rng.gen_range(1..=3);
    let topology = random_widths(layers + 1, 5, rng);
    let hidden = [Activation::Relu, Activation::Sigmoid, Activation::Linear][rng.gen_range(0..3)];
    let classify = rng.gen_bool(0.5);
    let mut topology = topology;
    let out = if classify {
        *topology.last_mut().unwrap() = rng.gen_range(2..=4);
        Activation::Softmax
    } else {
        [Activation::Linear, Activation::Sigmoid, Activation::Relu][rng.gen_range(0..3)]
    };
    let mut m = Mlp::with_activations(&topology, hidden, out, rng).unwrap();
    randomize(m.params_mut(), rng);
    (m, classify)
}

fn check_mlp_trial(rng: &mut Rng) -> Result<GradCheck> {
    let (m, classify) = random_mlp(rng);
    let x = random_vec(m.input_width(), rng);
    let tr = m.forward(&x)?;
    if classify {
        let class = rng.gen_range(0..m.output_width());
        let g = m.backward(&tr, &cross_entropy_grad(tr.output(), class)?)?;
        let mut p = m.params().to_vec();
        Ok(check_gradient(&mut p, &g.params, |q| {
            let mut n = m.clone();
            n.params_mut().copy_from_slice(q);
            cross_entropy(&n.predict(&x).unwrap(), class).unwrap()
        }))
    } else {
        let y = random_vec(m.output_width(), rng);
        let g = m.backward(&tr, &mse_grad(tr.output(), &y)?)?;
        let mut p = m.params().to_vec();
        Ok(check_gradient(&mut p, &g.params, |q| {
            let mut n = m.clone();
            n.params_mut().copy_from_slice(q);
            mse(&n.predict(&x).unwrap(), &y).unwrap()
        }))
    }
}

fn check_shared_trial(rng: &mut Rng) -> Result<GradCheck> {
    let n_in = rng.gen_range(1..=4);
    let width = rng.gen_range(1..=5);
    let mut a_tail = vec![width];
    a_tail.extend(random_widths(rng.gen_range(0..=2), 5, rng));
    a_tail.push(rng.gen_range(1..=3));
    let mut p_tail = vec![width];
    p_tail.extend(random_widths(rng.gen_range(0..=1), 5, rng));
    p_tail.push(2);
    let mut net = SharedNet::new(
        Mlp::new(&[n_in, width], &[Activation::Relu], rng)?,
        Mlp::with_activations(&a_tail, Activation::Relu, Activation::Linear, rng)?,
        Mlp::with_activations(&p_tail, Activation::Relu, Activation::Softmax, rng)?,
    )?;
    for m in [&mut net.shared, &mut net.approx_tail, &mut net.pred_tail] {
        randomize(m.params_mut(), rng);
    }
    let x = random_vec(n_in, rng);
    let y = random_vec(*a_tail.last().unwrap(), rng);
    let label = SafetyLabel { safe: rng.gen_bool(0.5) };
    let w = rng.gen_range(0.1..2.0);
    let g = net.gradients(&x, &y, label, w)?;
    let sizes = [net.shared.param_count(), net.approx_tail.param_count()];
    let mut params: Vec<f64> = [&net.shared, &net.approx_tail, &net.pred_tail]
        .iter()
        .flat_map(|m| m.params().to_vec())
        .collect();
    let analytic: Vec<f64> = [&g.shared, &g.approx_tail, &g.pred_tail]
        .iter()
        .flat_map(|m| m.params.clone())
        .collect();
    Ok(check_gradient(&mut params, &analytic, |p| {
        let mut n = net.clone();
        let (a, rest) = p.split_at(sizes[0]);
        let (b, c) = rest.split_at(sizes[1]);
        n.shared.params_mut().copy_from_slice(a);
        n.approx_tail.params_mut().copy_from_slice(b);
        n.pred_tail.params_mut().copy_from_slice(c);
        n.gradients(&x, &y, label, w).unwrap().loss.total
    }))
}

/// Runs `trials` random networks per component. `hadamard_sign` other than
/// `1.0` injects a fault into the gated backward pass.
pub fn run_suite(seed: u64, trials: usize, hadamard_sign: f64) -> Result<Vec<ComponentCheck>> {
    let mut rng = seeded(seed, Stream::Misc);
    let mut mlp = GradCheck::empty();
    let mut approx = GradCheck::empty();
    let mut pred = GradCheck::empty();
    let mut shared = GradCheck::empty();
    let opts = BackwardOptions {
        hadamard_sign,
        ..BackwardOptions::default()
    };
    for _ in 0..trials {
        mlp = mlp.merge(check_mlp_trial(&mut rng)?);
        let net = random_fused(&mut rng);
        let x = random_vec(net.approx().input_width(), &mut rng);
        let y = random_vec(net.approx().output_width(), &mut rng);
        let label = SafetyLabel { safe: rng.gen_bool(0.5) };
        let (a, p) = check_fused(&net, &x, &y, label, &BackwardOptions { prediction_loss_weight: rng.gen_range(0.1..2.0), ..opts })?;
        approx = approx.merge(a);
        pred = pred.merge(p);
        shared = shared.merge(check_shared_trial(&mut rng)?);
    }
    Ok([
        ("mlp", mlp),
        ("fused.approximation", approx),
        ("fused.prediction", pred),
        ("weightshare", shared),
    ]
    .into_iter()
    .map(|(component, check)| ComponentCheck { component, check, trials })
    .collect())
}
