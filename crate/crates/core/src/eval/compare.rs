use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{median_report, EvalReport};
use super::{confusion, median};
use crate::baselines::{train_iterative, train_onepass, train_weight_sharing, SeparatePair, SharedNet, DEFAULT_ROUNDS};
use crate::benchmark::{generate_dataset, Benchmark, BenchmarkId, Dataset, FusedTopology, PairTopology};
use crate::error::{Error, Result};
use crate::fusion::{train_axnet, FusedNet, GatingMode, PredHead, SliceMap, DEFAULT_CONTROL_ACTIVATION};
use crate::model::ModelFile;
use crate::nn::{param_count, Activation, TrainConfig};
use crate::trace::InvocationTrace;

/// Largest accepted relative parameter-count difference.
pub const PARAM_TOLERANCE: f64 = 0.03;
/// Largest accepted shortfall in median true invocation.
pub const INVOCATION_TOLERANCE: f64 = 0.05;
/// AXNet sizes tried when matching invocation.
const INVOCATION_TRIALS: usize = 8;
/// Hidden widths explored on either side of a reference row.
const WIDTH_RADIUS: i64 = 2;
const MIN_WIDTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Axnet,
    Onepass,
    Iterative,
    Weightshare,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Axnet, Method::Onepass, Method::Iterative, Method::Weightshare];
    pub const NAMES: [&'static str; 4] = ["axnet", "onepass", "iterative", "weightshare"];

    pub fn parse(name: &str) -> Result<Self> {
        Self::NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| Self::ALL[i])
            .ok_or_else(|| Error::unknown("method", name, &Self::NAMES))
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    MatchParams,
    MatchInvocation,
}

impl BudgetMode {
    pub const NAMES: [&'static str; 2] = ["match_params", "match_invocation"];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "match_params" => Ok(BudgetMode::MatchParams),
            "match_invocation" => Ok(BudgetMode::MatchInvocation),
            other => Err(Error::unknown("budget mode", other, &Self::NAMES)),
        }
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }
}

/// A fused topology near one of the benchmark's reference rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub topology: FusedTopology,
    pub params: usize,
    /// Summed hidden-width change from the nearest reference row, plus one
    /// if the head differs.
    pub distance: usize,
}

fn width_variants(widths: &[usize]) -> Vec<(Vec<usize>, usize)> {
    let mut out = vec![(Vec::new(), 0)];
    for &w in widths {
        let mut next = Vec::new();
        for (prefix, dist) in &out {
            for d in -WIDTH_RADIUS..=WIDTH_RADIUS {
                let v = w as i64 + d;
                if v < MIN_WIDTH.min(w) as i64 {
                    continue;
                }
                let mut p = prefix.clone();
                p.push(v as usize);
                next.push((p, dist + d.unsigned_abs() as usize));
            }
        }
        out = next;
    }
    out
}

/// Every fused topology within the width radius of a reference row, under
/// `gating`, deduplicated by shape with its smallest distance.
pub fn neighbor_candidates(b: &Benchmark, gating: GatingMode) -> Vec<Candidate> {
    let mut best: BTreeMap<(Vec<usize>, Vec<usize>, bool), Candidate> = BTreeMap::new();
    for row in &b.axnet_topologies {
        let a_hidden = &row.approx[1..row.approx.len() - 1];
        let p_hidden = &row.pred[1..row.pred.len() - 1];
        for (ah, ad) in width_variants(a_hidden) {
            let mut approx = vec![b.input_dim];
            approx.extend(&ah);
            approx.push(b.output_dim);
            for (ph, pd) in width_variants(p_hidden) {
                for head in [PredHead::Softmax, PredHead::Sigmoid] {
                    let Ok(slices) = SliceMap::build(&approx, gating, head) else { continue };
                    let mut pred = vec![b.input_dim];
                    pred.extend(&ph);
                    pred.push(slices.width());
                    let params = param_count(&approx) + param_count(&pred);
                    let distance = ad + pd + (head != row.head) as usize;
                    let key = (approx.clone(), pred.clone(), head == PredHead::Sigmoid);
                    let cand = Candidate {
                        topology: FusedTopology {
                            approx: approx.clone(),
                            pred,
                            head,
                            reported_params: params,
                        },
                        params,
                        distance,
                    };
                    match best.get(&key) {
                        Some(c) if c.distance <= distance => {}
                        _ => {
                            best.insert(key, cand);
                        }
                    }
                }
            }
        }
    }
    best.into_values().collect()
}

fn nearest_listing(cands: &[Candidate], target: usize) -> String {
    let mut v: Vec<&Candidate> = cands.iter().collect();
    v.sort_by_key(|c| (c.params.abs_diff(target), c.distance));
    v.iter()
        .take(3)
        .map(|c| format!("{:?}+{:?} {:?} ({} params)", c.topology.approx, c.topology.pred, c.topology.head, c.params))
        .collect::<Vec<_>>()
        .join("; ")
}

/// The fused topology closest to a reference row whose parameter count is
/// within [`PARAM_TOLERANCE`] of `target`; ties go to the closer count.
pub fn match_params(b: &Benchmark, gating: GatingMode, target: usize) -> Result<Candidate> {
    let cands = neighbor_candidates(b, gating);
    let limit = PARAM_TOLERANCE * target as f64;
    cands
        .iter()
        .filter(|c| c.params.abs_diff(target) as f64 <= limit)
        .min_by_key(|c| (c.distance, c.params.abs_diff(target), c.params))
        .cloned()
        .ok_or_else(|| {
            Error::config(format!(
                "no {} topology within {:.0}% of {target} parameters; nearest: {}",
                b.name(),
                PARAM_TOLERANCE * 100.0,
                nearest_listing(&cands, target)
            ))
        })
}

#[derive(Debug, Clone)]
pub struct CompareOptions {
    /// Optimizer settings; metric and bound are taken from the benchmark
    /// unless `error_bound` overrides the bound.
    pub train: TrainConfig,
    pub error_bound: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub gating: GatingMode,
    pub rounds: usize,
    pub control_activation: Activation,
    /// Worker cap; `AXNET_THREADS` applies when unset.
    pub threads: Option<usize>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            train: TrainConfig::default(),
            error_bound: None,
            n_train: 10_000,
            n_test: 2_000,
            gating: GatingMode::AllLayers,
            rounds: DEFAULT_ROUNDS,
            control_activation: DEFAULT_CONTROL_ACTIVATION,
            threads: None,
        }
    }
}

impl CompareOptions {
    pub fn train_config(&self, b: &Benchmark, seed: u64) -> TrainConfig {
        TrainConfig {
            error_metric: b.error_metric,
            error_bound: self.error_bound.unwrap_or(b.error_bound),
            seed,
            ..self.train.clone()
        }
    }
}

/// One fully specified training run.
#[derive(Debug, Clone)]
pub struct CellSpec {
    pub benchmark: BenchmarkId,
    pub method: Method,
    pub seed: u64,
    pub cfg: TrainConfig,
    pub fused: FusedTopology,
    pub pair: PairTopology,
    pub gating: GatingMode,
    pub rounds: usize,
    pub control_activation: Activation,
}

impl CellSpec {
    /// Reference topologies of `b` (first rows) with options from `opts`.
    pub fn new(b: &Benchmark, method: Method, seed: u64, opts: &CompareOptions) -> Self {
        CellSpec {
            benchmark: b.id,
            method,
            seed,
            cfg: opts.train_config(b, seed),
            fused: b.axnet_topologies[0].clone(),
            pair: b.previous_topology.clone(),
            gating: opts.gating,
            rounds: opts.rounds,
            control_activation: opts.control_activation,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub report: EvalReport,
    pub model: ModelFile,
    pub trace: InvocationTrace,
    pub iterations: usize,
}

/// Trains one cell on `data` and evaluates it on the test split.
pub fn run_cell(spec: &CellSpec, data: &Dataset) -> Result<CellOutcome> {
    if data.benchmark != spec.benchmark {
        return Err(Error::config(format!("dataset is {} but the cell is {}", data.benchmark, spec.benchmark)));
    }
    let cfg = &spec.cfg;
    let (model, trace, iterations, time) = match spec.method {
        Method::Axnet => {
            let net = FusedNet::seeded(&spec.fused, spec.gating, spec.seed)?.with_control_activation(spec.control_activation)?;
            let t = train_axnet(net, data, cfg)?;
            (ModelFile::Axnet { net: t.net }, t.trace, t.iterations, t.train_time)
        }
        Method::Onepass => {
            let t = train_onepass(SeparatePair::seeded(&spec.pair, spec.seed)?, data, cfg)?;
            (ModelFile::Pair { net: t.net }, t.trace, t.iterations, t.train_time)
        }
        Method::Iterative => {
            let t = train_iterative(SeparatePair::seeded(&spec.pair, spec.seed)?, data, cfg, spec.rounds)?.trained;
            (ModelFile::Pair { net: t.net }, t.trace, t.iterations, t.train_time)
        }
        Method::Weightshare => {
            let t = train_weight_sharing(SharedNet::seeded(&spec.pair, spec.seed)?, data, cfg)?;
            (ModelFile::Shared { net: t.net }, t.trace, t.iterations, t.train_time)
        }
    };
    let scorer = data.scorer(cfg.error_metric, cfg.error_bound)?;
    let m = model.as_model();
    let c = confusion(m, data, &scorer)?;
    let report = EvalReport::from_confusion(
        spec.benchmark.name(),
        spec.method.name(),
        spec.seed,
        m.param_count(),
        &c,
        time.as_secs_f64(),
    );
    Ok(CellOutcome {
        report,
        model,
        trace,
        iterations,
    })
}

/// Worker count: explicit cap, else `AXNET_THREADS`, else rayon's default.
pub fn thread_count(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var("AXNET_THREADS").ok().and_then(|v| v.parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

fn run_cells(cells: &[CellSpec], data: &BTreeMap<u64, Dataset>, threads: Option<usize>) -> Result<Vec<CellOutcome>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(threads))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    pool.install(|| cells.par_iter().map(|c| run_cell(c, &data[&c.seed])).collect())
}

/// Per-seed and per-method median reports of one matched comparison.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub benchmark: BenchmarkId,
    pub mode: BudgetMode,
    /// Parameter count of the reference (previous-work) pair.
    pub reference_params: usize,
    /// Fused topology chosen for AXNet, if it took part.
    pub axnet_topology: Option<FusedTopology>,
    /// Ordered by method, then seed.
    pub cells: Vec<CellOutcome>,
    pub medians: Vec<EvalReport>,
}

impl Comparison {
    pub fn rows(&self) -> Vec<EvalReport> {
        self.cells.iter().map(|c| c.report.clone()).collect()
    }

    pub fn median(&self, method: Method) -> Option<&EvalReport> {
        self.medians.iter().find(|r| r.method == method.name())
    }

    /// Per-seed rows followed by the median rows.
    pub fn table(&self) -> Vec<EvalReport> {
        let mut t = self.rows();
        t.extend(self.medians.iter().cloned());
        t
    }
}

fn medians_of(cells: &[CellOutcome], methods: &[Method]) -> Vec<EvalReport> {
    methods
        .iter()
        .filter_map(|m| {
            let rows: Vec<EvalReport> = cells.iter().filter(|c| c.report.method == m.name()).map(|c| c.report.clone()).collect();
            median_report(&rows)
        })
        .collect()
}

fn median_true_invocation(cells: &[CellOutcome]) -> f64 {
    median(&cells.iter().map(|c| c.report.true_invocation).collect::<Vec<_>>()).unwrap_or(0.0)
}

/// Trains every method on every seed under a matched budget.
///
/// Baselines always use the benchmark's reference pair topology.
/// `match_params` picks the AXNet topology with [`match_params`] against the
/// pair's parameter count. `match_invocation` trains the baselines first and
/// then tries AXNet topologies from smallest to largest until its median
/// true invocation is within [`INVOCATION_TOLERANCE`] of the reference
/// baseline (onepass if present, else the first baseline listed).
pub fn compare_matched(
    b: &Benchmark,
    methods: &[Method],
    mode: BudgetMode,
    seeds: &[u64],
    opts: &CompareOptions,
) -> Result<Comparison> {
    if methods.is_empty() {
        return Err(Error::config("comparison needs at least one method"));
    }
    if seeds.is_empty() {
        return Err(Error::config("comparison needs at least one seed"));
    }
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    let reference = b.previous_topology.clone();
    let reference_params = reference.param_count();

    let data: BTreeMap<u64, Dataset> = seeds
        .iter()
        .map(|&s| Ok((s, generate_dataset(b, opts.n_train, opts.n_test, s)?)))
        .collect::<Result<_>>()?;
    let cell = |method: Method, seed: u64, fused: Option<&FusedTopology>| {
        let mut c = CellSpec::new(b, method, seed, opts);
        c.pair = reference.clone();
        if let Some(f) = fused {
            c.fused = f.clone();
        }
        c
    };
    let baselines: Vec<Method> = methods.iter().copied().filter(|&m| m != Method::Axnet).collect();
    let with_axnet = methods.contains(&Method::Axnet);

    let (axnet_topology, mut cells) = match mode {
        BudgetMode::MatchParams => {
            let chosen = if with_axnet {
                Some(match_params(b, opts.gating, reference_params)?.topology)
            } else {
                None
            };
            let specs: Vec<CellSpec> = methods
                .iter()
                .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
                .map(|(m, s)| cell(m, s, chosen.as_ref()))
                .collect();
            (chosen, run_cells(&specs, &data, opts.threads)?)
        }
        BudgetMode::MatchInvocation => {
            let &reference_method = baselines
                .iter()
                .find(|&&m| m == Method::Onepass)
                .or(baselines.first())
                .ok_or_else(|| Error::config("match_invocation needs at least one baseline method"))?;
            let specs: Vec<CellSpec> = baselines
                .iter()
                .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
                .map(|(m, s)| cell(m, s, None))
                .collect();
            let mut cells = run_cells(&specs, &data, opts.threads)?;
            let chosen = if with_axnet {
                let ref_cells: Vec<CellOutcome> =
                    cells.iter().filter(|c| c.report.method == reference_method.name()).cloned().collect();
                let target = median_true_invocation(&ref_cells);
                let (topo, axnet_cells) = match_invocation(b, seeds, &data, opts, target, &cell)?;
                cells.extend(axnet_cells);
                Some(topo)
            } else {
                None
            };
            (chosen, cells)
        }
    };
    cells.sort_by_key(|c| (Method::parse(&c.report.method).ok(), c.report.seed));
    let medians = medians_of(&cells, &methods);
    Ok(Comparison {
        benchmark: b.id,
        mode,
        reference_params,
        axnet_topology,
        cells,
        medians,
    })
}

fn match_invocation(
    b: &Benchmark,
    seeds: &[u64],
    data: &BTreeMap<u64, Dataset>,
    opts: &CompareOptions,
    target: f64,
    cell: &dyn Fn(Method, u64, Option<&FusedTopology>) -> CellSpec,
) -> Result<(FusedTopology, Vec<CellOutcome>)> {
    let mut cands = neighbor_candidates(b, opts.gating);
    let ceiling = b.axnet_topologies.iter().map(|t| t.param_count()).max().unwrap_or(0);
    cands.retain(|c| c.params <= ceiling);
    cands.sort_by_key(|c| (c.params, c.distance));
    let trials: Vec<&Candidate> = if cands.len() <= INVOCATION_TRIALS {
        cands.iter().collect()
    } else {
        (0..INVOCATION_TRIALS)
            .map(|i| &cands[i * (cands.len() - 1) / (INVOCATION_TRIALS - 1)])
            .collect()
    };
    let mut tried = Vec::new();
    for cand in trials {
        let specs: Vec<CellSpec> = seeds.iter().map(|&s| cell(Method::Axnet, s, Some(&cand.topology))).collect();
        let cells = run_cells(&specs, data, opts.threads)?;
        let inv = median_true_invocation(&cells);
        if inv >= target - INVOCATION_TOLERANCE {
            return Ok((cand.topology.clone(), cells));
        }
        tried.push(format!("{} params → {:.3}", cand.params, inv));
    }
    Err(Error::config(format!(
        "no {} topology reached median true invocation {:.3} within {:.0} points; tried {}",
        b.name(),
        target,
        INVOCATION_TOLERANCE * 100.0,
        tried.join(", ")
    )))
}

/// Aggregate gain of one method over a baseline across benchmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub baseline: String,
    pub benchmarks: usize,
    /// Mean of `(method − baseline) / baseline` median true invocations,
    /// over benchmarks where the baseline's median is positive.
    pub mean_relative_invocation_gain: Option<f64>,
    /// Median over benchmarks of the difference in median true invocation.
    pub median_invocation_delta: f64,
    /// Benchmarks where the method's median is at least the baseline's.
    pub wins: usize,
}

pub fn summarize(comparisons: &[Comparison], baseline: Method) -> Vec<SummaryRow> {
    Method::ALL
        .iter()
        .filter(|&&m| m != baseline)
        .filter_map(|&m| {
            let pairs: Vec<(f64, f64)> = comparisons
                .iter()
                .filter_map(|c| Some((c.median(m)?.true_invocation, c.median(baseline)?.true_invocation)))
                .collect();
            if pairs.is_empty() {
                return None;
            }
            let gains: Vec<f64> = pairs.iter().filter(|p| p.1 > 0.0).map(|(a, b)| (a - b) / b).collect();
            let deltas: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
            Some(SummaryRow {
                method: m.name().into(),
                baseline: baseline.name().into(),
                benchmarks: pairs.len(),
                mean_relative_invocation_gain: (!gains.is_empty()).then(|| gains.iter().sum::<f64>() / gains.len() as f64),
                median_invocation_delta: median(&deltas).unwrap(),
                wins: pairs.iter().filter(|(a, b)| a >= b).count(),
            })
        })
        .collect()
}
