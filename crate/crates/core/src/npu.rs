//! Analytic latency and energy model of a tiled neural accelerator running
//! the prediction subnet, then either the approximation subnet or the exact
//! CPU fallback.
//!
//! All constants are parametric. [`NpuConfig::default`] holds placeholder
//! values chosen only to be plausible; override them from a JSON file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::benchmark::Benchmark;
use crate::error::{Error, Result};
use crate::fusion::FusedNet;
use crate::model::ModelFile;
use crate::nn::Mlp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NpuConfig {
    /// Processing engines per tile; each computes one neuron per wave.
    pub pe_count: usize,
    pub tile_count: usize,
    pub mac_cycles: f64,
    pub hadamard_cycles: f64,
    pub activation_cycles: f64,
    /// `null` in JSON means an unlimited bus (zero transfer cycles).
    #[serde(serialize_with = "ser_bus", deserialize_with = "de_bus")]
    pub bus_words_per_cycle: f64,
    /// Controller cost of choosing between the accelerator and the CPU.
    pub dispatch_cycles: f64,
    pub cpu_cycles_per_sample: f64,
    pub energy_per_mac: f64,
    pub energy_per_cpu_cycle: f64,
}

fn ser_bus<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_none()
    } else {
        s.serialize_some(v)
    }
}

fn de_bus<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl Default for NpuConfig {
    /// Placeholders: 8 PEs × 4 tiles, single-cycle MAC and gating multiply,
    /// 4-cycle activation lookup, 2 words per cycle on the bus, 4 dispatch
    /// cycles, 1000 CPU cycles per exact evaluation, and a MAC costing a
    /// tenth of a CPU cycle's energy.
    fn default() -> Self {
        NpuConfig {
            pe_count: 8,
            tile_count: 4,
            mac_cycles: 1.0,
            hadamard_cycles: 1.0,
            activation_cycles: 4.0,
            bus_words_per_cycle: 2.0,
            dispatch_cycles: 4.0,
            cpu_cycles_per_sample: 1000.0,
            energy_per_mac: 0.1e-9,
            energy_per_cpu_cycle: 1e-9,
        }
    }
}

impl NpuConfig {
    /// Default placeholders with the CPU cost of `b`'s exact kernel.
    pub fn for_benchmark(b: &Benchmark) -> Self {
        NpuConfig {
            cpu_cycles_per_sample: b.cpu_cycles_estimate(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pe_count == 0 || self.tile_count == 0 {
            return Err(Error::config("pe_count and tile_count must be positive"));
        }
        let reals = [
            ("mac_cycles", self.mac_cycles),
            ("hadamard_cycles", self.hadamard_cycles),
            ("activation_cycles", self.activation_cycles),
            ("bus_words_per_cycle", self.bus_words_per_cycle),
            ("dispatch_cycles", self.dispatch_cycles),
            ("cpu_cycles_per_sample", self.cpu_cycles_per_sample),
            ("energy_per_mac", self.energy_per_mac),
            ("energy_per_cpu_cycle", self.energy_per_cpu_cycle),
        ];
        for (name, v) in reals {
            if v.is_nan() || v <= 0.0 || (v.is_infinite() && name != "bus_words_per_cycle") {
                return Err(Error::config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: NpuConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn total_pes(&self) -> usize {
        self.pe_count * self.tile_count
    }
}

/// Cycles for one dense layer: waves of neurons across all PEs, each wave
/// costing one MAC per input plus the activation and, when gated, the
/// Hadamard multiply; then input/output transfer over the bus.
pub fn layer_cycles(in_width: usize, out_width: usize, gated: bool, cfg: &NpuConfig) -> f64 {
    let waves = out_width.div_ceil(cfg.total_pes()) as f64;
    let per_wave = in_width as f64 * cfg.mac_cycles + cfg.activation_cycles + if gated { cfg.hadamard_cycles } else { 0.0 };
    let transfer = if cfg.bus_words_per_cycle.is_infinite() {
        0.0
    } else {
        ((in_width + out_width) as f64 / cfg.bus_words_per_cycle).ceil()
    };
    waves * per_wave + transfer
}

/// Cycles and multiply count of a whole MLP; `gated[k]` marks layer `k`.
pub fn network_cost(topology: &[usize], gated: &[bool], cfg: &NpuConfig) -> (f64, f64) {
    let mut cycles = 0.0;
    let mut mults = 0.0;
    for (k, w) in topology.windows(2).enumerate() {
        let g = gated.get(k).copied().unwrap_or(false);
        cycles += layer_cycles(w[0], w[1], g, cfg);
        mults += (w[0] * w[1] + if g { w[1] } else { 0 }) as f64;
    }
    (cycles, mults)
}

/// Per-sample cost of a quality-controlled accelerator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub invocation: f64,
    pub npu_cycles_pred: f64,
    pub npu_cycles_approx: f64,
    pub cpu_cycles_per_sample: f64,
    pub expected_cycles_per_sample: f64,
    pub speedup: f64,
    /// Expected energy relative to always running the CPU (below 1 saves).
    pub energy_reduction: f64,
    /// `speedup / energy_reduction`.
    pub energy_efficiency: f64,
}

impl CostReport {
    pub const COLUMNS: [&'static str; 8] = [
        "invocation",
        "npu_cycles_pred",
        "npu_cycles_approx",
        "cpu_cycles_per_sample",
        "expected_cycles_per_sample",
        "speedup",
        "energy_reduction",
        "energy_efficiency",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.invocation,
            self.npu_cycles_pred,
            self.npu_cycles_approx,
            self.cpu_cycles_per_sample,
            self.expected_cycles_per_sample,
            self.speedup,
            self.energy_reduction,
            self.energy_efficiency,
        ]
    }
}

/// Component costs `(pred cycles, pred mults, approx cycles, approx mults)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelCost {
    pub pred_cycles: f64,
    pub pred_mults: f64,
    pub approx_cycles: f64,
    pub approx_mults: f64,
}

fn ungated(m: &Mlp, cfg: &NpuConfig) -> (f64, f64) {
    network_cost(m.topology(), &[], cfg)
}

impl ModelCost {
    pub fn of_fused(net: &FusedNet, cfg: &NpuConfig) -> Self {
        let layers = net.approx().num_layers();
        let mut gated = vec![false; layers];
        for s in &net.slices().controls {
            gated[s.layer - 1] = true;
        }
        let (approx_cycles, approx_mults) = network_cost(net.approx().topology(), &gated, cfg);
        let (pred_cycles, pred_mults) = ungated(net.pred(), cfg);
        ModelCost {
            pred_cycles,
            pred_mults,
            approx_cycles,
            approx_mults,
        }
    }

    /// The shared layer of a weight-sharing net is billed to the predictor,
    /// which always runs.
    pub fn of_model(model: &ModelFile, cfg: &NpuConfig) -> Self {
        match model {
            ModelFile::Axnet { net } => Self::of_fused(net, cfg),
            ModelFile::Pair { net } => {
                let (pred_cycles, pred_mults) = ungated(&net.predictor, cfg);
                let (approx_cycles, approx_mults) = ungated(&net.approximator, cfg);
                ModelCost {
                    pred_cycles,
                    pred_mults,
                    approx_cycles,
                    approx_mults,
                }
            }
            ModelFile::Shared { net } => {
                let (sc, sm) = ungated(&net.shared, cfg);
                let (pc, pm) = ungated(&net.pred_tail, cfg);
                let (approx_cycles, approx_mults) = ungated(&net.approx_tail, cfg);
                ModelCost {
                    pred_cycles: sc + pc,
                    pred_mults: sm + pm,
                    approx_cycles,
                    approx_mults,
                }
            }
        }
    }

    pub fn report(&self, invocation: f64, cfg: &NpuConfig) -> Result<CostReport> {
        if !(0.0..=1.0).contains(&invocation) {
            return Err(Error::config(format!("invocation must lie in [0, 1], got {invocation}")));
        }
        cfg.validate()?;
        let cpu = cfg.cpu_cycles_per_sample;
        let expected = self.pred_cycles + cfg.dispatch_cycles + invocation * self.approx_cycles + (1.0 - invocation) * cpu;
        let cpu_energy = cpu * cfg.energy_per_cpu_cycle;
        let expected_energy = (self.pred_mults + invocation * self.approx_mults) * cfg.energy_per_mac
            + (cfg.dispatch_cycles + (1.0 - invocation) * cpu) * cfg.energy_per_cpu_cycle;
        let speedup = cpu / expected;
        let energy_reduction = expected_energy / cpu_energy;
        Ok(CostReport {
            invocation,
            npu_cycles_pred: self.pred_cycles,
            npu_cycles_approx: self.approx_cycles,
            cpu_cycles_per_sample: cpu,
            expected_cycles_per_sample: expected,
            speedup,
            energy_reduction,
            energy_efficiency: speedup / energy_reduction,
        })
    }
}

/// Expected per-sample cost of `net` when a fraction `invocation` of inputs
/// is approximated and the rest fall back to the CPU.
pub fn expected_cost(net: &FusedNet, invocation: f64, cfg: &NpuConfig) -> Result<CostReport> {
    ModelCost::of_fused(net, cfg).report(invocation, cfg)
}
