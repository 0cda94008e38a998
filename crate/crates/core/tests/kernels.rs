use axnet_core::benchmark::functions::{
    bessel_j0, bessel_surface, black_scholes, color_distance, dct8x8, forward_kinematics, idct8x8, inverse_kinematics,
    normal_cdf, sobel, twiddle, ARM_L1, ARM_L2,
};
use axnet_core::benchmark::{error_value, Normalizer};
use axnet_core::rng::{seeded, Stream};
use axnet_core::{generate_dataset, Benchmark, BenchmarkId, ErrorMetric};
use rand::Rng;

/// `Σ (-1)^k (z/2)^{2k} / (k!)^2`, summed until the terms vanish.
fn j0_series(z: f64) -> f64 {
    let q = -(z * z) / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term.abs() < 1e-300 {
            break;
        }
    }
    sum
}

#[test]
fn j0_matches_the_ascending_series() {
    let mut rng = seeded(1, Stream::Misc);
    for _ in 0..500 {
        let z = rng.gen_range(0.0..10.0 * 2f64.sqrt());
        let (got, want) = (bessel_j0(z), j0_series(z));
        assert!((got - want).abs() < 1e-9, "J0({z}) = {got}, series {want}");
    }
    assert_eq!(bessel_j0(0.0), 1.0);
    assert_eq!(bessel_surface(0.0, 0.0), 1.0);
}

/// `1/2 + ∫_0^x φ(t) dt` by composite Simpson.
fn cdf_simpson(x: f64) -> f64 {
    let n = 2000;
    let h = x / n as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(0.0) + pdf(x);
    for i in 1..n {
        s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    0.5 + s * h / 3.0
}

#[test]
fn normal_cdf_matches_quadrature() {
    let mut rng = seeded(2, Stream::Misc);
    for _ in 0..300 {
        let x = rng.gen_range(-6.0..6.0);
        assert!((normal_cdf(x) - cdf_simpson(x)).abs() < 1e-10, "x = {x}");
    }
}

#[test]
fn black_scholes_known_values_and_limits() {
    // Textbook case: S = K = 100, r = 5%, σ = 20%, T = 1.
    let call = black_scholes(100.0, 100.0, 0.05, 0.2, 1.0, true);
    assert!((call - 10.450_583_572_185_565).abs() < 1e-9, "{call}");
    let put = black_scholes(100.0, 100.0, 0.05, 0.2, 1.0, false);
    // put-call parity
    assert!((call - put - (100.0 - 100.0 * (-0.05f64).exp())).abs() < 1e-9);
    // deterministic payoff: σ → 0, T → 0, in-the-money call
    let limit = black_scholes(80.0, 50.0, 0.05, 1e-9, 1e-12, true);
    assert!((limit - 30.0).abs() < 1e-9);
    assert_eq!(black_scholes(80.0, 50.0, 0.05, 0.0, 0.0, true), 30.0);
}

fn dct_direct(block: &[f64]) -> Vec<f64> {
    use std::f64::consts::PI;
    let alpha = |k: usize| if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
    let mut out = vec![0.0; 64];
    for u in 0..8 {
        for v in 0..8 {
            let mut s = 0.0;
            for x in 0..8 {
                for y in 0..8 {
                    s += block[x * 8 + y]
                        * ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos()
                        * ((2 * y + 1) as f64 * v as f64 * PI / 16.0).cos();
                }
            }
            out[u * 8 + v] = alpha(u) * alpha(v) * s;
        }
    }
    out
}

#[test]
fn dct_matches_the_direct_sum_and_inverts() {
    let mut rng = seeded(3, Stream::Misc);
    for _ in 0..50 {
        let block: Vec<f64> = (0..64).map(|_| rng.gen::<f64>()).collect();
        let fast = dct8x8(&block);
        for (a, b) in fast.iter().zip(dct_direct(&block)) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in idct8x8(&fast).iter().zip(&block) {
            assert!((a - b).abs() < 1e-9);
        }
    }
    assert!(dct8x8(&[0.0; 64]).iter().all(|&c| c == 0.0));
    // DC coefficient of a constant block is 8 × its value.
    assert!((dct8x8(&[0.5; 64])[0] - 4.0).abs() < 1e-12);
}

#[test]
fn generated_inversek2j_targets_reproduce_their_points() {
    let b = Benchmark::get(BenchmarkId::Inversek2j);
    let data = generate_dataset(&b, 2000, 500, 4).unwrap();
    for i in 0..data.len() {
        let (x, t) = (data.raw_input(i), data.raw_target(i));
        let p = [
            ARM_L1 * t[0].cos() + ARM_L2 * (t[0] + t[1]).cos(),
            ARM_L1 * t[0].sin() + ARM_L2 * (t[0] + t[1]).sin(),
        ];
        assert!((p[0] - x[0]).abs() < 1e-9 && (p[1] - x[1]).abs() < 1e-9, "{x:?} -> {t:?}");
        assert_eq!(forward_kinematics(t[0], t[1]), p);
    }
    let t = inverse_kinematics(ARM_L1 + ARM_L2, 0.0).unwrap();
    assert!(t[0].abs() < 1e-12 && t[1].abs() < 1e-12);
}

#[test]
fn small_kernels() {
    assert_eq!(twiddle(0.0), [1.0, 0.0]);
    assert!((twiddle(0.25)[1] - 1.0).abs() < 1e-15);
    assert_eq!(color_distance(&[0.2, 0.4, 0.6], &[0.2, 0.4, 0.6]), 0.0);
    assert!((color_distance(&[0.0; 3], &[1.0; 3]) - 1.0).abs() < 1e-15);
    assert!(sobel(&[0.3; 9]).abs() < 1e-12);
    // a hard vertical edge saturates the clamp
    assert_eq!(sobel(&[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]), 1.0);
}

#[test]
fn targets_equal_the_kernel_on_every_sample() {
    for b in Benchmark::all() {
        let data = generate_dataset(&b, 50, 20, 5).unwrap();
        for i in 0..data.len() {
            assert_eq!(b.eval(data.raw_input(i)).unwrap(), data.raw_target(i));
        }
        assert!(data.train_indices().end == data.test_indices().start);
    }
}

#[test]
fn datasets_are_deterministic_and_normalized() {
    for b in Benchmark::all() {
        let a = generate_dataset(&b, 10, 5, 6).unwrap();
        assert_eq!(a, generate_dataset(&b, 10, 5, 6).unwrap());
        assert_ne!(a, generate_dataset(&b, 10, 5, 7).unwrap());
        for i in 0..a.len() {
            assert!(a.input(i).iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)), "{} input {i}", b.name());
            assert!(a.target(i).iter().all(|v| (-1e-9..=1.0 + 1e-9).contains(v)), "{} target {i}", b.name());
            let back = a.input_norm.denormalize(a.input(i));
            for (x, y) in back.iter().zip(a.raw_input(i)) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }
}

#[test]
fn normalization_round_trips() {
    let n = Normalizer::new(vec![-3.0, 10.0], vec![5.0, 100.0]).unwrap();
    let mut rng = seeded(8, Stream::Misc);
    for _ in 0..200 {
        let x = vec![rng.gen_range(-3.0..5.0), rng.gen_range(10.0..100.0)];
        let back = n.denormalize(&n.normalize(&x));
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }
}

#[test]
fn metrics_are_nonnegative_and_zero_only_on_equality() {
    let mut rng = seeded(9, Stream::Misc);
    for _ in 0..500 {
        let n = rng.gen_range(1..5);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut h = y.clone();
        for m in [ErrorMetric::Relative, ErrorMetric::Absolute, ErrorMetric::ImageDiff] {
            assert_eq!(error_value(&h, &y, m).unwrap(), 0.0);
        }
        h[rng.gen_range(0..n)] += rng.gen_range(1e-3..1.0);
        for m in [ErrorMetric::Relative, ErrorMetric::Absolute, ErrorMetric::ImageDiff] {
            assert!(error_value(&h, &y, m).unwrap() > 0.0);
        }
    }
    assert!((error_value(&[0.001], &[0.0], ErrorMetric::Relative).unwrap() - 1000.0).abs() < 1e-9);
    assert!(error_value(&[1.0], &[1.0, 2.0], ErrorMetric::Absolute).is_err());
}
