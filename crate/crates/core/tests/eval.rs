use axnet_core::eval::{confusion, overall_error, predicted_invocation, prediction_accuracy, true_invocation};
use axnet_core::rng::{seeded, Stream};
use axnet_core::{
    generate_dataset, Benchmark, BenchmarkId, Dataset, FusedNet, GatingMode, Inference, QualityModel, Result, Scorer,
};
use rand::Rng;

/// Model whose outputs and safety beliefs are arbitrary closures.
struct Fixed<F, P> {
    output: F,
    p_safe: P,
}

impl<F: Fn(&[f64]) -> Vec<f64>, P: Fn(&[f64], &[f64]) -> f64> QualityModel for Fixed<F, P> {
    fn infer(&self, x: &[f64]) -> Result<Inference> {
        let output = (self.output)(x);
        let p_safe = (self.p_safe)(x, &output);
        Ok(Inference { output, p_safe })
    }

    fn param_count(&self) -> usize {
        0
    }
}

fn frozen(b: &Benchmark, seed: u64) -> FusedNet {
    let mut net = FusedNet::seeded(&b.axnet_topologies[0], GatingMode::AllLayers, seed).unwrap();
    let mut rng = seeded(seed, Stream::Misc);
    for p in net.approx_mut().params_mut() {
        *p = rng.gen_range(-1.5..1.5);
    }
    for p in net.pred_mut().params_mut() {
        *p = rng.gen_range(-1.5..1.5);
    }
    net
}

/// Metric error written out from the definitions, on native units for
/// relative/absolute and on the `[0, 1]` scale for image diff.
fn brute_error(b: &Benchmark, h_norm: &[f64], y_norm: &[f64]) -> f64 {
    let native = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(&b.output_range)
            .map(|(x, iv)| iv.lo + x * (iv.hi - iv.lo))
            .collect()
    };
    let (h, y) = match b.error_metric {
        axnet_core::ErrorMetric::ImageDiff => (h_norm.to_vec(), y_norm.to_vec()),
        _ => (native(h_norm), native(y_norm)),
    };
    let mut sum = 0.0;
    for j in 0..h.len() {
        let d = (h[j] - y[j]).abs();
        sum += match b.error_metric {
            axnet_core::ErrorMetric::Relative => d / y[j].abs().max(1e-6),
            _ => d,
        };
    }
    sum / h.len() as f64
}

struct Brute {
    true_inv: f64,
    pred_inv: f64,
    accuracy: Option<f64>,
    overall: Option<f64>,
}

fn brute<M: QualityModel>(b: &Benchmark, m: &M, data: &Dataset) -> Brute {
    let mut safe = 0usize;
    let mut predicted = 0usize;
    let mut tp = 0usize;
    let mut err_sum = 0.0;
    let mut n = 0usize;
    for i in data.test_indices() {
        let inf = m.infer(data.input(i)).unwrap();
        let e = brute_error(b, &inf.output, data.target(i));
        let is_safe = e < b.error_bound;
        n += 1;
        if is_safe {
            safe += 1;
        }
        if inf.p_safe > 0.5 {
            predicted += 1;
            err_sum += e;
            if is_safe {
                tp += 1;
            }
        }
    }
    Brute {
        true_inv: safe as f64 / n as f64,
        pred_inv: predicted as f64 / n as f64,
        accuracy: (predicted > 0).then(|| tp as f64 / predicted as f64),
        overall: (predicted > 0).then(|| err_sum / predicted as f64),
    }
}

fn check_against_brute(id: BenchmarkId, n_test: usize, seed: u64) {
    let b = Benchmark::get(id);
    let data = generate_dataset(&b, 10, n_test, seed).unwrap();
    let scorer = data.default_scorer().unwrap();
    let net = frozen(&b, seed);
    let want = brute(&b, &net, &data);
    assert_eq!(true_invocation(&net, &data, &scorer).unwrap(), want.true_inv);
    assert_eq!(predicted_invocation(&net, &data, &scorer).unwrap(), want.pred_inv);
    assert_eq!(prediction_accuracy(&net, &data, &scorer).unwrap(), want.accuracy);
    assert_eq!(overall_error(&net, &data, &scorer).unwrap(), want.overall);
}

#[test]
fn metrics_match_enumeration_on_50_samples() {
    for seed in 0..5 {
        check_against_brute(BenchmarkId::Bessel, 50, seed);
    }
}

#[test]
fn metrics_match_enumeration_for_every_metric_kind() {
    // absolute, relative (two outputs) and image diff
    for id in [BenchmarkId::Fft, BenchmarkId::Inversek2j, BenchmarkId::Sobel, BenchmarkId::Blackscholes] {
        check_against_brute(id, 500, 3);
    }
}

fn bessel_data() -> (Benchmark, Dataset, Scorer) {
    let b = Benchmark::get(BenchmarkId::Bessel);
    let data = generate_dataset(&b, 10, 200, 11).unwrap();
    let scorer = data.default_scorer().unwrap();
    (b, data, scorer)
}

/// Looks up the exact normalized target of a test input.
fn exact(data: &Dataset) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
    move |x| {
        let i = data.test_indices().find(|&i| data.input(i) == x).unwrap();
        data.target(i).to_vec()
    }
}

#[test]
fn exact_approximator_is_fully_safe_with_zero_error() {
    let (_, data, scorer) = bessel_data();
    let m = Fixed {
        output: exact(&data),
        p_safe: |_: &[f64], _: &[f64]| 1.0,
    };
    let c = confusion(&m, &data, &scorer).unwrap();
    assert_eq!(c.true_invocation(), 1.0);
    assert_eq!(c.predicted_invocation(), 1.0);
    assert_eq!(c.prediction_accuracy(), Some(1.0));
    assert_eq!(c.overall_error(), Some(0.0));
}

#[test]
fn error_of_exactly_the_bound_is_never_safe() {
    // On the identity scale `(y - 0.5) - y` is exactly -0.5 for y >= 0.5,
    // so those samples sit on the bound; the rest are reproduced exactly.
    let (_, data, _) = bessel_data();
    let scorer = Scorer::unnormalized(axnet_core::ErrorMetric::Absolute, 0.5, 1).unwrap();
    let ex = exact(&data);
    let m = Fixed {
        output: |x: &[f64]| {
            let y = ex(x)[0];
            vec![if y >= 0.5 { y - 0.5 } else { y }]
        },
        p_safe: |_: &[f64], _: &[f64]| 1.0,
    };
    let below = data.test_indices().filter(|&i| data.target(i)[0] < 0.5).count();
    assert!(below < data.n_test());
    let c = confusion(&m, &data, &scorer).unwrap();
    assert_eq!(c.safe, below);
}

#[test]
fn forced_predictors() {
    let (_, data, scorer) = bessel_data();
    let net = frozen(&Benchmark::get(BenchmarkId::Bessel), 2);
    let always = Fixed {
        output: |x: &[f64]| net.infer(x).unwrap().output,
        p_safe: |_: &[f64], _: &[f64]| 1.0,
    };
    let c = confusion(&always, &data, &scorer).unwrap();
    assert_eq!(c.predicted_invocation(), 1.0);
    assert_eq!(c.prediction_accuracy(), Some(c.true_invocation()));

    let never = Fixed {
        output: |x: &[f64]| net.infer(x).unwrap().output,
        p_safe: |_: &[f64], _: &[f64]| 0.0,
    };
    let c = confusion(&never, &data, &scorer).unwrap();
    assert_eq!(c.predicted_invocation(), 0.0);
    assert_eq!(c.prediction_accuracy(), None);
    assert_eq!(c.overall_error(), None);
}

#[test]
fn singleton_admission_reports_that_samples_error() {
    let (b, data, scorer) = bessel_data();
    let width = b.output_range[0].hi - b.output_range[0].lo;
    let first = data.input(data.test_indices().start).to_vec();
    let ex = exact(&data);
    let m = Fixed {
        output: |x: &[f64]| vec![ex(x)[0] + 0.03 / width],
        p_safe: |x: &[f64], _: &[f64]| if x == first.as_slice() { 1.0 } else { 0.0 },
    };
    let c = confusion(&m, &data, &scorer).unwrap();
    assert_eq!(c.predicted, 1);
    assert!((c.overall_error().unwrap() - 0.03).abs() < 1e-12);
}

#[test]
fn label_oracle_keeps_overall_error_under_the_bound() {
    for seed in 0..5 {
        let (_, data, scorer) = bessel_data();
        let net = frozen(&Benchmark::get(BenchmarkId::Bessel), seed);
        let ex = exact(&data);
        let oracle = Fixed {
            output: |x: &[f64]| net.infer(x).unwrap().output,
            p_safe: |x: &[f64], h: &[f64]| scorer.is_safe(h, &ex(x)) as u8 as f64,
        };
        let c = confusion(&oracle, &data, &scorer).unwrap();
        assert_eq!(c.true_positive, c.predicted);
        assert_eq!(c.predicted, c.safe);
        if c.predicted > 0 {
            assert!(c.overall_error().unwrap() < scorer.bound);
            assert_eq!(c.prediction_accuracy(), Some(1.0));
        }
    }
}

#[test]
fn true_positives_never_exceed_safe_samples() {
    for seed in 0..20 {
        let b = Benchmark::get(BenchmarkId::Kmeans);
        let data = generate_dataset(&b, 10, 100, seed).unwrap();
        let net = frozen(&b, seed);
        let c = confusion(&net, &data, &data.default_scorer().unwrap()).unwrap();
        assert!(c.true_positive <= c.safe);
        assert!(c.true_positive <= c.predicted);
        for f in [c.true_invocation(), c.predicted_invocation()] {
            assert!((0.0..=1.0).contains(&f));
        }
    }
}
