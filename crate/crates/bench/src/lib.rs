//! Fixtures shared by the benchmarks.

use axnet_core::{generate_dataset, Benchmark, BenchmarkId, Dataset, FusedNet, GatingMode, TrainConfig};

pub fn bessel() -> Benchmark {
    Benchmark::get(BenchmarkId::Bessel)
}

/// First-row fused network of `id` with seeded parameters.
pub fn fused(id: BenchmarkId) -> FusedNet {
    FusedNet::seeded(&Benchmark::get(id).axnet_topologies[0], GatingMode::AllLayers, 1).unwrap()
}

pub fn dataset(id: BenchmarkId, n_train: usize, n_test: usize) -> Dataset {
    generate_dataset(&Benchmark::get(id), n_train, n_test, 1).unwrap()
}

/// A short run with tracing off.
pub fn short_run(b: &Benchmark, iterations: usize) -> TrainConfig {
    TrainConfig {
        max_iterations: iterations,
        error_bound: b.error_bound,
        error_metric: b.error_metric,
        trace_samples: 0,
        ..TrainConfig::default()
    }
}
