use axnet_core::baselines::{train_iterative, train_onepass, train_weight_sharing, SeparatePair, SharedNet};
use axnet_core::benchmark::{generate_dataset, Benchmark, BenchmarkId, Dataset, PairTopology};
use axnet_core::fusion::SafetyLabel;
use axnet_core::nn::loss::mse_grad;
use axnet_core::nn::{Activation, Mlp, TrainConfig};
use axnet_core::rng::{seeded, Stream};
use axnet_core::{QualityModel, Scorer};
use rand::Rng;

fn cfg(iters: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        max_iterations: iters,
        batch_size: 32,
        learning_rate: 0.01,
        error_bound: 0.05,
        seed,
        trace_samples: 200,
        ..TrainConfig::default()
    }
}

fn topo(approx: &[usize], pred: &[usize]) -> PairTopology {
    PairTopology {
        approx: approx.to_vec(),
        pred: pred.to_vec(),
        reported_params: 0,
    }
}

/// Bessel-shaped dataset with a custom target.
fn synthetic(n_train: usize, n_test: usize, seed: u64, f: impl Fn(&[f64], &mut axnet_core::rng::Rng) -> f64) -> Dataset {
    let b = Benchmark::get(BenchmarkId::Bessel);
    let mut rng = seeded(seed, Stream::Data);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for _ in 0..n_train + n_test {
        let x = vec![rng.gen::<f64>(), rng.gen::<f64>()];
        let y = f(&x, &mut rng);
        xs.push(x);
        ys.push(vec![y]);
    }
    Dataset::from_raw(&b, seed, n_train, xs, ys).unwrap()
}

/// A smooth ramp for `x1 < 0.5`; past the jump, the same ramp buried in
/// zero-mean noise far wider than the error bound.
fn piecewise(seed: u64) -> Dataset {
    synthetic(2000, 400, seed, |x, rng| {
        let ramp = 0.3 + 0.2 * x[1];
        if x[0] < 0.5 {
            ramp
        } else {
            ramp + rng.gen_range(-0.6..0.6)
        }
    })
}

fn safe_labels(approx: &Mlp, data: &Dataset, scorer: &Scorer) -> Vec<bool> {
    data.train_indices()
        .map(|i| scorer.is_safe(&approx.predict(data.input(i)).unwrap(), data.target(i)))
        .collect()
}

#[test]
fn constant_target_is_always_safe_after_onepass() {
    let data = synthetic(500, 100, 1, |_, _| 0.25);
    let pair = SeparatePair::seeded(&topo(&[2, 4, 1], &[2, 4, 2]), 1).unwrap();
    let t = train_onepass(pair, &data, &cfg(1500, 1)).unwrap();
    let scorer = data.default_scorer().unwrap();
    assert!(safe_labels(&t.net.approximator, &data, &scorer).iter().all(|&s| s));
    for i in data.test_indices() {
        assert!(t.net.infer(data.input(i)).unwrap().predicted_safe());
    }
}

#[test]
fn predictor_phase_leaves_approximator_untouched() {
    // The approximator phase only sees its own seed stream and data, so the
    // trained approximator cannot depend on the predictor's shape.
    let data = piecewise(2);
    let a = train_onepass(SeparatePair::seeded(&topo(&[2, 6, 1], &[2, 4, 2]), 2).unwrap(), &data, &cfg(400, 2)).unwrap();
    let b = train_onepass(SeparatePair::seeded(&topo(&[2, 6, 1], &[2, 9, 5, 2]), 2).unwrap(), &data, &cfg(400, 2)).unwrap();
    assert_eq!(a.net.approximator.fingerprint(), b.net.approximator.fingerprint());
    assert_ne!(a.net.predictor.topology(), b.net.predictor.topology());
    // The approximator at the end of the run is what its phase left behind:
    // every predictor-phase trace point reports the same true invocation.
    let pred_points: Vec<f64> = a
        .trace
        .points
        .iter()
        .filter(|p| p.phase.starts_with("predictor"))
        .map(|p| p.true_invocation)
        .collect();
    assert!(!pred_points.is_empty());
    assert!(pred_points.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn onepass_predictor_beats_majority_rate_on_piecewise_data() {
    let data = piecewise(3);
    let pair = SeparatePair::seeded(&topo(&[2, 8, 1], &[2, 8, 2]), 3).unwrap();
    let t = train_onepass(pair, &data, &cfg(3000, 3)).unwrap();
    let scorer = data.default_scorer().unwrap();
    let labels = safe_labels(&t.net.approximator, &data, &scorer);
    let safe = labels.iter().filter(|&&s| s).count() as f64 / labels.len() as f64;
    assert!(safe > 0.05 && safe < 0.95, "labels should be mixed, safe fraction {safe}");
    let correct = data
        .train_indices()
        .zip(&labels)
        .filter(|(i, &l)| t.net.infer(data.input(*i)).unwrap().predicted_safe() == l)
        .count() as f64
        / labels.len() as f64;
    assert!(correct > safe.max(1.0 - safe), "accuracy {correct} vs majority {}", safe.max(1.0 - safe));
}

#[test]
fn single_round_iterative_is_onepass() {
    let data = piecewise(4);
    let t = topo(&[2, 5, 1], &[2, 4, 2]);
    let c = cfg(300, 4);
    let one = train_onepass(SeparatePair::seeded(&t, 4).unwrap(), &data, &c).unwrap();
    let it = train_iterative(SeparatePair::seeded(&t, 4).unwrap(), &data, &c, 1).unwrap();
    assert_eq!(it.rounds_completed, 1);
    assert!(!it.stopped_early);
    assert_eq!(it.trained.net, one.net);
    assert_eq!(it.trained.trace.points, one.trace.points);
}

#[test]
fn round_subsets_come_from_previous_round_labels() {
    let data = piecewise(5);
    let t = topo(&[2, 6, 1], &[2, 4, 2]);
    let c = cfg(600, 5);
    let it = train_iterative(SeparatePair::seeded(&t, 5).unwrap(), &data, &c, 2).unwrap();
    assert_eq!(it.subset_sizes[0], data.n_train());
    // Round one of a two-round run is a onepass run at half the budget.
    let half = TrainConfig {
        max_iterations: 300,
        ..c.clone()
    };
    let first = train_onepass(SeparatePair::seeded(&t, 5).unwrap(), &data, &half).unwrap();
    let labels = safe_labels(&first.net.approximator, &data, &data.default_scorer().unwrap());
    assert_eq!(it.subset_sizes[1], labels.iter().filter(|&&s| s).count());
    assert!(it.subset_sizes.iter().all(|&n| n <= data.n_train()));
}

#[test]
fn constant_target_keeps_the_full_subset_every_round() {
    let data = synthetic(400, 100, 6, |_, _| 0.6);
    let it = train_iterative(SeparatePair::seeded(&topo(&[2, 4, 1], &[2, 4, 2]), 6).unwrap(), &data, &cfg(3000, 6), 3).unwrap();
    assert_eq!(it.subset_sizes, vec![400, 400, 400]);
}

#[test]
fn piecewise_subsets_shrink_across_rounds() {
    let mut monotone = 0;
    for seed in 0..3 {
        let data = piecewise(10 + seed);
        let it = train_iterative(
            SeparatePair::seeded(&topo(&[2, 8, 1], &[2, 8, 2]), seed).unwrap(),
            &data,
            &TrainConfig {
                final_lr_fraction: 0.01,
                ..cfg(6000, seed)
            },
            3,
        )
        .unwrap();
        if it.subset_sizes.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
    }
    assert!(monotone >= 2);
}

#[test]
fn empty_safe_subset_stops_early() {
    // Every target is far outside what a zero-output network produces and
    // a single step cannot close the gap.
    let data = synthetic(200, 50, 7, |_, _| 1.0);
    let mut pair = SeparatePair::seeded(&topo(&[2, 3, 1], &[2, 3, 2]), 7).unwrap();
    pair.approximator.params_mut().iter_mut().for_each(|p| *p = 0.0);
    let c = TrainConfig {
        learning_rate: 1e-6,
        ..cfg(3, 7)
    };
    let it = train_iterative(pair, &data, &c, 3).unwrap();
    assert!(it.stopped_early);
    assert_eq!(it.rounds_completed, 1);
    assert_eq!(it.subset_sizes, vec![200]);
}

#[test]
fn inversek2j_previous_row_has_84_parameters() {
    let b = Benchmark::get(BenchmarkId::Inversek2j);
    let pair = SeparatePair::seeded(&b.previous_topology, 0).unwrap();
    assert_eq!(pair.param_count(), 84);
}

fn shared_fixture(seed: u64) -> SharedNet {
    let mut rng = seeded(seed, Stream::Misc);
    SharedNet::new(
        Mlp::new(&[3, 4], &[Activation::Relu], &mut rng).unwrap(),
        Mlp::with_activations(&[4, 3, 2], Activation::Relu, Activation::Linear, &mut rng).unwrap(),
        Mlp::with_activations(&[4, 3, 2], Activation::Relu, Activation::Softmax, &mut rng).unwrap(),
    )
    .unwrap()
}

#[test]
fn saturated_predictor_leaves_only_the_approximation_gradient() {
    let mut net = shared_fixture(8);
    // Zero final weights and a huge safe bias: P(safe) is 1 and no gradient
    // flows back from the predictor tail.
    let last = net.pred_tail.num_layers() - 1;
    net.pred_tail.weights_mut(last).iter_mut().for_each(|w| *w = 0.0);
    net.pred_tail.biases_mut(last).copy_from_slice(&[-60.0, 60.0]);
    let x = [0.2, 0.9, 0.4];
    let y = [0.3, -0.1];
    let g = net.gradients(&x, &y, SafetyLabel { safe: true }, 1.0).unwrap();

    // Oracle: the approximator alone as one network.
    let mut weights = vec![net.shared.weight_matrix(0)];
    let mut biases = vec![net.shared.biases(0).to_vec()];
    for k in 0..net.approx_tail.num_layers() {
        weights.push(net.approx_tail.weight_matrix(k));
        biases.push(net.approx_tail.biases(k).to_vec());
    }
    let mut acts = vec![Activation::Relu];
    acts.extend_from_slice(net.approx_tail.activations());
    let whole = Mlp::from_parts(&[3, 4, 3, 2], &acts, &weights, &biases).unwrap();
    let tr = whole.forward(&x).unwrap();
    let oracle = whole.backward(&tr, &mse_grad(tr.output(), &y).unwrap()).unwrap();
    let n = net.shared.param_count();
    assert_eq!(g.shared.params, oracle.params[..n]);
    assert_eq!(g.approx_tail.params, oracle.params[n..]);
    assert!(g.loss.pred < 1e-40);
}

#[test]
fn shared_gradient_matches_finite_differences() {
    use axnet_core::nn::gradcheck::check_gradient;
    for seed in 0..10 {
        let net = shared_fixture(20 + seed);
        let x = [0.5, -0.3, 0.8];
        let y = [0.1, 0.7];
        let label = SafetyLabel { safe: seed % 2 == 0 };
        let g = net.gradients(&x, &y, label, 1.0).unwrap();
        let mut p = net.shared.params().to_vec();
        let r = check_gradient(&mut p, &g.shared.params, |q| {
            let mut n = net.clone();
            n.shared.params_mut().copy_from_slice(q);
            n.gradients(&x, &y, label, 1.0).unwrap().loss.total
        });
        assert!(r.worst_relative_error < 1e-4, "seed {seed}: {r:?}");
    }
}

#[test]
fn weight_sharing_records_a_trace_and_is_deterministic() {
    let b = Benchmark::get(BenchmarkId::Bessel);
    let data = generate_dataset(&b, 400, 100, 9).unwrap();
    let run = || {
        let net = SharedNet::seeded(&b.previous_topology, 9).unwrap();
        train_weight_sharing(net, &data, &cfg(130, 9)).unwrap()
    };
    let (a, c) = (run(), run());
    assert_eq!(a.net, c.net);
    assert_eq!(a.iterations, 130);
    // 13 batches per epoch, 10 epochs.
    assert_eq!(a.trace.points.len(), 10);
    assert!(a.trace.points.iter().all(|p| p.phase == "weightshare"));
}
