//! Fused approximator/predictor networks for approximate computing, the
//! baseline training schemes they are compared against, a benchmark suite of
//! exact kernels, evaluation metrics and an analytic accelerator cost model.
//!
//! ```
//! use axnet_core::{generate_dataset, train_axnet, Benchmark, BenchmarkId, FusedNet, GatingMode, TrainConfig};
//!
//! let bench = Benchmark::get(BenchmarkId::Bessel);
//! let data = generate_dataset(&bench, 200, 50, 7).unwrap();
//! let net = FusedNet::seeded(&bench.axnet_topologies[0], GatingMode::AllLayers, 7).unwrap();
//! let cfg = TrainConfig { max_iterations: 20, error_bound: bench.error_bound, ..TrainConfig::default() };
//! let trained = train_axnet(net, &data, &cfg).unwrap();
//! assert_eq!(trained.iterations, 20);
//! ```

pub mod baselines;
pub mod benchmark;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod model;
pub mod nn;
pub mod npu;
pub mod rng;
pub mod selfcheck;
pub mod trace;
pub mod training;

pub use baselines::{train_iterative, train_onepass, train_weight_sharing, SeparatePair, SharedNet};
pub use benchmark::{
    generate_dataset, Benchmark, BenchmarkId, Dataset, ErrorMetric, FusedTopology, PairTopology, Scorer,
};
pub use error::{Divergence, Error, Result};
pub use eval::{compare_matched, BudgetMode, CompareOptions, Comparison, EvalReport, Method};
pub use fusion::{control_width, derive_label, train_axnet, FusedNet, GatingMode, PredHead, SafetyLabel};
pub use model::{Inference, ModelFile, QualityModel};
pub use nn::{Activation, Mlp, TrainConfig};
pub use npu::{expected_cost, layer_cycles, CostReport, NpuConfig};
pub use trace::{InvocationTrace, TracePoint};
pub use training::Trained;
