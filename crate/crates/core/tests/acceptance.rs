//! Acceptance criteria 1-10, run in order with one PASS/FAIL line each.
//!
//! `cargo test -p axnet-core --test acceptance -- 5 7` runs a subset.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use axnet_core::eval::{confusion, median, run_cell, CellSpec, Confusion};
use axnet_core::fusion::quadratic_expansion_check;
use axnet_core::fusion::BackwardOptions;
use axnet_core::npu::{layer_cycles, network_cost, ModelCost};
use axnet_core::rng::{seeded, Rng, Stream};
use axnet_core::selfcheck::{check_fused, random_fused};
use axnet_core::{
    compare_matched, control_width, generate_dataset, Activation, Benchmark, BenchmarkId, BudgetMode,
    CompareOptions, Dataset, ErrorMetric, FusedNet, FusedTopology, GatingMode, Method, Mlp, NpuConfig, PredHead,
    QualityModel, SafetyLabel,
};
use rand::Rng as _;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn first_row(id: BenchmarkId) -> FusedTopology {
    Benchmark::get(id).axnet_topologies[0].clone()
}

// 1. control widths of the seven first rows
fn control_widths() -> Outcome {
    let t0 = Instant::now();
    let expected = [
        (BenchmarkId::Inversek2j, 8),
        (BenchmarkId::Sobel, 10),
        (BenchmarkId::Fft, 9),
        (BenchmarkId::Bessel, 6),
        (BenchmarkId::Jpeg, 18),
        (BenchmarkId::Blackscholes, 7),
        (BenchmarkId::Kmeans, 10),
    ];
    let mut bad = Vec::new();
    for (id, want) in expected {
        let t = first_row(id);
        let hidden = &t.approx[1..t.approx.len() - 1];
        let got = control_width(hidden, t.head);
        if got != want || *t.pred.last().unwrap() != want {
            bad.push(format!("{id}: {got} vs {want}"));
        }
    }
    let ok = bad.is_empty() && within(t0.elapsed(), 1.0);
    outcome(ok, if bad.is_empty() { "7/7 widths match".into() } else { bad.join("; ") })
}

// 2. parameter counts, with the inconsistent rows reported as exceptions
fn parameter_counts() -> Outcome {
    let t0 = Instant::now();
    let consistent = [
        (BenchmarkId::Inversek2j, 0, 84),
        (BenchmarkId::Inversek2j, 1, 64),
        (BenchmarkId::Sobel, 0, 159),
        (BenchmarkId::Bessel, 0, 57),
        (BenchmarkId::Blackscholes, 0, 112),
        (BenchmarkId::Kmeans, 0, 131),
    ];
    let mut bad = Vec::new();
    for (id, row, want) in consistent {
        let got = Benchmark::get(id).axnet_topologies[row].param_count();
        if got != want {
            bad.push(format!("{id} row {}: {got} vs {want}", row + 1));
        }
    }
    let mut exceptions = Vec::new();
    for b in Benchmark::all() {
        for (k, t) in b.axnet_topologies.iter().enumerate() {
            if t.param_count() != t.reported_params {
                exceptions.push(format!("{} row {} ({} vs printed {})", b.name(), k + 1, t.param_count(), t.reported_params));
            }
        }
    }
    let expected_exceptions = ["fft row 1 (73 vs printed 41)", "jpeg row 1 (3142 vs printed 3129)"];
    let ok = bad.is_empty() && exceptions == expected_exceptions && within(t0.elapsed(), 1.0);
    outcome(ok, format!("{} mismatches; known exceptions: {}", bad.len(), exceptions.join(", ")))
}

// 3. fused-graph finite differences on 50 random nets
fn fused_gradients() -> Outcome {
    let t0 = Instant::now();
    let mut rng = seeded(2024, Stream::Misc);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let net = random_fused(&mut rng);
        let x: Vec<f64> = (0..net.approx().input_width()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..net.approx().output_width()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let label = SafetyLabel { safe: rng.gen_bool(0.5) };
        let opts = BackwardOptions {
            prediction_loss_weight: rng.gen_range(0.1..2.0),
            ..BackwardOptions::default()
        };
        let (a, p) = check_fused(&net, &x, &y, label, &opts).unwrap();
        worst = worst.max(a.worst_relative_error).max(p.worst_relative_error);
    }
    outcome(worst < 1e-4 && within(t0.elapsed(), 30.0), format!("worst relative error {worst:.2e}"))
}

fn linear_fused(rng: &mut Rng) -> FusedNet {
    let n = rng.gen_range(1..=5);
    let m = rng.gen_range(1..=5);
    let o = rng.gen_range(1..=3);
    let q = rng.gen_range(1..=5);
    let head = if rng.gen_bool(0.5) { PredHead::Softmax } else { PredHead::Sigmoid };
    let lin = [Activation::Linear, Activation::Linear];
    let mut approx = Mlp::zeros(&[n, m, o], &lin).unwrap();
    let mut pred = Mlp::zeros(&[n, q, m + head.width()], &lin).unwrap();
    for p in approx.params_mut().iter_mut().chain(pred.params_mut().iter_mut()) {
        *p = rng.gen_range(-2.0..2.0);
    }
    FusedNet::from_parts(approx, pred, GatingMode::AllLayers, head, Activation::Linear).unwrap()
}

// 4. gated linear layer against its quadratic expansion
fn quadratic_identity() -> Outcome {
    let t0 = Instant::now();
    let mut rng = seeded(4, Stream::Misc);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let net = linear_fused(&mut rng);
        let x: Vec<f64> = (0..net.approx().input_width()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        worst = worst.max(quadratic_expansion_check(&net, &x).unwrap().max_abs_diff());
    }
    outcome(worst < 1e-9 && within(t0.elapsed(), 5.0), format!("max |gated - expanded| {worst:.2e}"))
}

fn defined_median(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    median(&v.flatten().collect::<Vec<_>>())
}

// 5. bessel training quality
fn bessel_quality() -> Outcome {
    let b = Benchmark::get(BenchmarkId::Bessel);
    let opts = CompareOptions::default();
    let mut rows = Vec::new();
    let mut slowest: f64 = 0.0;
    for seed in SEEDS {
        let data = generate_dataset(&b, 10_000, 2_000, seed).unwrap();
        let t0 = Instant::now();
        let out = run_cell(&CellSpec::new(&b, Method::Axnet, seed, &opts), &data).unwrap();
        slowest = slowest.max(t0.elapsed().as_secs_f64());
        rows.push(out.report);
    }
    let inv = median(&rows.iter().map(|r| r.true_invocation).collect::<Vec<_>>()).unwrap();
    let err = defined_median(rows.iter().map(|r| r.overall_error));
    let per_seed: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.3}/{}", r.true_invocation, r.overall_error.map_or("-".into(), |e| format!("{e:.3}"))))
        .collect();
    let ok = inv > 0.5 && err.is_some_and(|e| e < 0.05) && slowest < 60.0;
    outcome(
        ok,
        format!(
            "median true invocation {inv:.3}, median overall error {}, slowest run {slowest:.1}s [{}]",
            err.map_or("undefined".into(), |e| format!("{e:.4}")),
            per_seed.join(" ")
        ),
    )
}

// 6. AXNet vs onepass under matched parameter budgets
fn comparative_invocation() -> Outcome {
    let t0 = Instant::now();
    let opts = CompareOptions::default();
    let mut wins = 0;
    let mut notes = Vec::new();
    for id in [BenchmarkId::Bessel, BenchmarkId::Inversek2j, BenchmarkId::Blackscholes, BenchmarkId::Kmeans] {
        let b = Benchmark::get(id);
        let c = compare_matched(&b, &[Method::Axnet, Method::Onepass], BudgetMode::MatchParams, &SEEDS, &opts).unwrap();
        let ax = c.median(Method::Axnet).unwrap().true_invocation;
        let one = c.median(Method::Onepass).unwrap().true_invocation;
        if ax >= one {
            wins += 1;
        }
        notes.push(format!("{id} {ax:.3} vs {one:.3}"));
    }
    let elapsed = t0.elapsed().as_secs_f64();
    outcome(
        wins >= 3 && elapsed < 30.0 * 60.0,
        format!("axnet >= onepass on {wins}/4 [{}], {elapsed:.0}s", notes.join(", ")),
    )
}

// 7. invocation-trace stability, weight sharing vs AXNet
fn trace_stability() -> Outcome {
    let t0 = Instant::now();
    let b = Benchmark::get(BenchmarkId::Bessel);
    let opts = CompareOptions::default();
    let mut count = 0;
    let mut notes = Vec::new();
    for seed in SEEDS {
        let data = generate_dataset(&b, opts.n_train, opts.n_test, seed).unwrap();
        let var = |m| run_cell(&CellSpec::new(&b, m, seed, &opts), &data).unwrap().trace.tail_variance(0.2);
        let (shared, axnet) = (var(Method::Weightshare), var(Method::Axnet));
        if shared > axnet {
            count += 1;
        }
        notes.push(format!("{shared:.2e}/{axnet:.2e}"));
    }
    let elapsed = t0.elapsed().as_secs_f64();
    outcome(
        count >= 3 && elapsed < 600.0,
        format!("weightshare variance above axnet in {count}/5 seeds [{}], {elapsed:.0}s", notes.join(" ")),
    )
}

// 8. single-layer gating on sobel
fn single_layer_gating() -> Outcome {
    let t0 = Instant::now();
    let b = Benchmark::get(BenchmarkId::Sobel);
    let opts = CompareOptions::default();
    // The setup row has one hidden layer, where both modes coincide; two are
    // needed for the comparison to mean anything.
    let approx = vec![9, 6, 6, 1];
    let run = |gating: GatingMode| {
        let hidden = gating.gated_layers(2).unwrap().len() * 6;
        let fused = FusedTopology {
            approx: approx.clone(),
            pred: vec![9, 8, hidden + 2],
            head: PredHead::Softmax,
            reported_params: 0,
        };
        let inv: Vec<f64> = SEEDS
            .iter()
            .map(|&seed| {
                let data = generate_dataset(&b, opts.n_train, opts.n_test, seed).unwrap();
                let mut spec = CellSpec::new(&b, Method::Axnet, seed, &opts);
                spec.fused = fused.clone();
                spec.gating = gating;
                run_cell(&spec, &data).unwrap().report.true_invocation
            })
            .collect();
        (median(&inv).unwrap(), inv)
    };
    let (all, all_runs) = run(GatingMode::AllLayers);
    let (single, single_runs) = run(GatingMode::SingleLayer(1));
    let elapsed = t0.elapsed().as_secs_f64();
    let runs: Vec<String> = single_runs.iter().zip(&all_runs).map(|(s, a)| format!("{s:.3}/{a:.3}")).collect();
    outcome(
        (single - all).abs() <= 0.05 && elapsed < 900.0,
        format!(
            "median true invocation single {single:.3} vs all {all:.3}, {elapsed:.0}s [{}]",
            runs.join(" ")
        ),
    )
}

/// Per-sample error from the metric definitions, on native units except
/// image diff.
fn brute_error(b: &Benchmark, h: &[f64], y: &[f64]) -> f64 {
    let native = |v: &[f64]| -> Vec<f64> { v.iter().zip(&b.output_range).map(|(x, r)| r.lo + x * (r.hi - r.lo)).collect() };
    let (h, y) = match b.error_metric {
        ErrorMetric::ImageDiff => (h.to_vec(), y.to_vec()),
        _ => (native(h), native(y)),
    };
    let terms = h.iter().zip(&y).map(|(a, t)| match b.error_metric {
        ErrorMetric::Relative => (a - t).abs() / t.abs().max(1e-6),
        _ => (a - t).abs(),
    });
    terms.sum::<f64>() / h.len() as f64
}

fn enumerate(b: &Benchmark, m: &impl QualityModel, data: &Dataset) -> (f64, f64, Option<f64>, Option<f64>) {
    let (mut safe, mut admitted, mut tp, mut err) = (0usize, 0usize, 0usize, 0.0);
    for i in data.test_indices() {
        let inf = m.infer(data.input(i)).unwrap();
        let e = brute_error(b, &inf.output, data.target(i));
        safe += (e < b.error_bound) as usize;
        if inf.p_safe > 0.5 {
            admitted += 1;
            tp += (e < b.error_bound) as usize;
            err += e;
        }
    }
    let n = data.n_test() as f64;
    let per_admitted = |v: f64| (admitted > 0).then(|| v / admitted as f64);
    (safe as f64 / n, admitted as f64 / n, per_admitted(tp as f64), per_admitted(err))
}

// 9. metrics equal brute-force enumeration
fn metric_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut mismatches = Vec::new();
    for id in [BenchmarkId::Bessel, BenchmarkId::Inversek2j, BenchmarkId::Sobel, BenchmarkId::Fft] {
        let b = Benchmark::get(id);
        let data = generate_dataset(&b, 10, 500, 9).unwrap();
        let mut net = FusedNet::seeded(&b.axnet_topologies[0], GatingMode::AllLayers, 9).unwrap();
        let mut rng = seeded(9, Stream::Misc);
        for p in net.approx_mut().params_mut() {
            *p = rng.gen_range(-1.5..1.5);
        }
        for p in net.pred_mut().params_mut() {
            *p = rng.gen_range(-1.5..1.5);
        }
        let c: Confusion = confusion(&net, &data, &data.default_scorer().unwrap()).unwrap();
        let got = (c.true_invocation(), c.predicted_invocation(), c.prediction_accuracy(), c.overall_error());
        if got != enumerate(&b, &net, &data) {
            mismatches.push(id.name());
        }
    }
    let ok = mismatches.is_empty() && within(t0.elapsed(), 5.0);
    outcome(ok, format!("4 metrics x 4 benchmarks on 500 samples, mismatches: [{}]", mismatches.join(", ")))
}

fn random_npu(rng: &mut Rng) -> NpuConfig {
    NpuConfig {
        pe_count: rng.gen_range(1..16),
        tile_count: rng.gen_range(1..8),
        mac_cycles: rng.gen_range(1..8) as f64,
        hadamard_cycles: rng.gen_range(1..8) as f64,
        activation_cycles: rng.gen_range(1..16) as f64,
        bus_words_per_cycle: if rng.gen_bool(0.3) { f64::INFINITY } else { rng.gen_range(1..8) as f64 },
        dispatch_cycles: rng.gen_range(1..32) as f64,
        cpu_cycles_per_sample: rng.gen_range(100..5000) as f64,
        ..NpuConfig::default()
    }
}

// 10. cost-model identities
fn npu_properties() -> Outcome {
    let t0 = Instant::now();
    let mut rng = seeded(10, Stream::Misc);
    let mut failures = Vec::new();
    for trial in 0..1000 {
        let cfg = random_npu(&mut rng);
        let (i, o): (usize, usize) = (rng.gen_range(1..64), rng.gen_range(1..64));
        let waves = o.div_ceil(cfg.total_pes()) as f64;
        if layer_cycles(i, o, true, &cfg) - layer_cycles(i, o, false, &cfg) != waves * cfg.hadamard_cycles {
            failures.push(format!("surcharge #{trial}"));
        }
        if layer_cycles(i + 1, o, true, &cfg) < layer_cycles(i, o, true, &cfg)
            || layer_cycles(i, o + 1, false, &cfg) < layer_cycles(i, o, false, &cfg)
        {
            failures.push(format!("width #{trial}"));
        }
        let approx: Vec<usize> = (0..rng.gen_range(2..5)).map(|_| rng.gen_range(1..40)).collect();
        let pred: Vec<usize> = (0..rng.gen_range(2..5)).map(|_| rng.gen_range(1..40)).collect();
        let gated = vec![true; approx.len() - 1];
        let mut slower = cfg.clone();
        slower.mac_cycles += 1.0;
        slower.activation_cycles += 1.0;
        if network_cost(&approx, &gated, &slower).0 < network_cost(&approx, &gated, &cfg).0 {
            failures.push(format!("per-op #{trial}"));
        }
        let (approx_cycles, approx_mults) = network_cost(&approx, &gated, &cfg);
        let (pred_cycles, pred_mults) = network_cost(&pred, &[], &cfg);
        let cost = ModelCost {
            pred_cycles,
            pred_mults,
            approx_cycles,
            approx_mults,
        };
        let inv = rng.gen_range(0.0..=1.0);
        let at = |v: f64| cost.report(v, &cfg).unwrap().expected_cycles_per_sample;
        let (c0, c1, c) = (at(0.0), at(1.0), at(inv));
        let slack = 1e-9 * c0.max(c1);
        if c < c0.min(c1) - slack || c > c0.max(c1) + slack {
            failures.push(format!("mixing #{trial}"));
        }
    }
    let ok = failures.is_empty() && within(t0.elapsed(), 5.0);
    outcome(ok, format!("1000 configurations, {} violations {:?}", failures.len(), &failures[..failures.len().min(5)]))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "control widths", control_widths),
        (2, "parameter counts", parameter_counts),
        (3, "fused gradients", fused_gradients),
        (4, "quadratic identity", quadratic_identity),
        (5, "bessel quality", bessel_quality),
        (6, "comparative invocation", comparative_invocation),
        (7, "trace stability", trace_stability),
        (8, "single-layer gating", single_layer_gating),
        (9, "metric oracle", metric_oracle),
        (10, "npu properties", npu_properties),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t0 = Instant::now();
        let o = f();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {verdict} {name} ({:.1}s): {}", t0.elapsed().as_secs_f64(), o.detail);
        failed += !o.pass as usize;
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
