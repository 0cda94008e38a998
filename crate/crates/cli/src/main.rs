use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use axnet_core::eval::{run_cell, summarize, CellSpec, SummaryRow};
use axnet_core::eval::{append_report_csv, write_reports_csv, write_reports_json};
use axnet_core::npu::ModelCost;
use axnet_core::selfcheck::run_suite;
use axnet_core::{
    compare_matched, generate_dataset, Error, FusedTopology, InvocationTrace, Method, ModelFile, NpuConfig,
    PairTopology, TracePoint,
};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

mod config;

use config::{parse_widths, ExperimentConfig, RunFlags, Widths};

/// Training, comparison and cost-model experiments for fused
/// approximator/predictor networks.
#[derive(Debug, Parser)]
#[command(name = "axnet", version)]
struct Cli {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON experiment config; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Train one model and evaluate it on the test split.
    Train(TrainArgs),
    /// Matched-budget comparison of several methods.
    Compare(CompareArgs),
    /// Finite-difference check of every backward pass.
    Gradcheck(GradcheckArgs),
    /// Expected accelerator cost of a saved model.
    Npu(NpuArgs),
    /// Write a benchmark dataset as CSV.
    GenData(GenDataArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    benchmark: Option<String>,
    #[arg(long)]
    method: Option<String>,
    /// Approximation-subnet topology override, e.g. 2-4-1.
    #[arg(long, value_parser = parse_widths)]
    approx: Option<Widths>,
    /// Prediction-subnet topology override.
    #[arg(long, value_parser = parse_widths)]
    pred: Option<Widths>,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Comma-separated benchmark names.
    #[arg(long, value_delimiter = ',')]
    benchmarks: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long)]
    budget_mode: Option<String>,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Worker cap; defaults to AXNET_THREADS, then the core count.
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Test hook: sign applied to the gated backward product.
    #[arg(long, default_value_t = 1.0, hide = true, allow_negative_numbers = true)]
    hadamard_sign: f64,
}

#[derive(Debug, Args)]
struct NpuArgs {
    #[arg(long)]
    model: PathBuf,
    /// Fraction of inputs sent to the approximation subnet.
    #[arg(long, required_unless_present = "sweep")]
    invocation: Option<f64>,
    /// Evaluate invocation 0, 0.1, ..., 1 instead.
    #[arg(long)]
    sweep: bool,
    /// Accelerator parameters as JSON.
    #[arg(long)]
    npu_config: Option<PathBuf>,
    /// Use this benchmark's exact-kernel CPU cost.
    #[arg(long)]
    benchmark: Option<String>,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long)]
    benchmark: Option<String>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
}

/// A check or run that failed on numerical grounds (exit code 2).
#[derive(Debug)]
struct NumericalFailure(String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_numerical(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn is_numerical(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<NumericalFailure>().is_some() || c.downcast_ref::<Error>().is_some_and(Error::is_numerical)
    })
}

struct Globals {
    file: ExperimentConfig,
    seed: Option<u64>,
    out: PathBuf,
}

fn run(cli: Cli) -> Result<()> {
    let file = ExperimentConfig::load(cli.config.as_deref())?;
    let g = Globals {
        seed: cli.seed.or(file.seed),
        out: cli.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from(".")),
        file,
    };
    match cli.cmd {
        Cmd::Train(a) => train(&g, a),
        Cmd::Compare(a) => compare(&g, a),
        Cmd::Gradcheck(a) => gradcheck(&g, a),
        Cmd::Npu(a) => npu(&g, a),
        Cmd::GenData(a) => gen_data(&g, a),
    }
}

fn out_dir(g: &Globals) -> Result<&Path> {
    fs::create_dir_all(&g.out).with_context(|| format!("creating {}", g.out.display()))?;
    Ok(&g.out)
}

fn required<'a>(flag: Option<&'a String>, file: Option<&'a String>, what: &str) -> Result<&'a str> {
    flag.or(file)
        .map(String::as_str)
        .ok_or_else(|| anyhow!("missing --{what} (or `{what}` in the config file)"))
}

fn write_trace(path: &Path, points: &[TracePoint]) -> Result<()> {
    let trace = InvocationTrace { points: points.to_vec() };
    trace.write_csv(BufWriter::new(File::create(path)?))?;
    Ok(())
}

fn train(g: &Globals, a: TrainArgs) -> Result<()> {
    let b = config::benchmark(required(a.benchmark.as_ref(), g.file.benchmark.as_ref(), "benchmark")?)?;
    let method = match a.method.as_ref().or(g.file.method.as_ref()) {
        Some(m) => config::method(m)?,
        None => Method::Axnet,
    };
    let seed = g.seed.unwrap_or(0);
    let opts = a.run.options(&g.file)?;
    let mut spec = CellSpec::new(&b, method, seed, &opts);
    let approx = a.approx.map(|w| w.0).or_else(|| g.file.approx.clone());
    let pred = a.pred.map(|w| w.0).or_else(|| g.file.pred.clone());
    if approx.is_some() || pred.is_some() {
        if method == Method::Axnet {
            spec.fused = FusedTopology {
                approx: approx.unwrap_or_else(|| spec.fused.approx.clone()),
                pred: pred.unwrap_or_else(|| spec.fused.pred.clone()),
                reported_params: 0,
                ..spec.fused.clone()
            };
        } else {
            spec.pair = PairTopology {
                approx: approx.unwrap_or_else(|| spec.pair.approx.clone()),
                pred: pred.unwrap_or_else(|| spec.pair.pred.clone()),
                reported_params: 0,
            };
        }
    }
    let data = generate_dataset(&b, opts.n_train, opts.n_test, seed)?;
    let dir = out_dir(g)?;
    let stem = format!("{}_{}_{}", b.name(), method.name(), seed);
    let trace_path = dir.join(format!("{stem}.trace.csv"));
    let outcome = match run_cell(&spec, &data) {
        Ok(o) => o,
        Err(Error::Diverged(d)) => {
            write_trace(&trace_path, &d.trace)?;
            eprintln!("partial trace written to {}", trace_path.display());
            return Err(Error::Diverged(d).into());
        }
        Err(e) => return Err(e.into()),
    };
    outcome.model.save(&dir.join(format!("{stem}.model.json")))?;
    write_trace(&trace_path, &outcome.trace.points)?;
    append_report_csv(&dir.join("reports.csv"), &outcome.report)?;
    println!("{}", serde_json::to_string_pretty(&outcome.report)?);
    Ok(())
}

const SMALL_BENCHMARKS: [&str; 4] = ["bessel", "inversek2j", "blackscholes", "kmeans"];

fn or_file<T: Clone>(flag: Vec<T>, file: &Option<Vec<T>>, default: impl FnOnce() -> Vec<T>) -> Vec<T> {
    if !flag.is_empty() {
        flag
    } else {
        file.clone().unwrap_or_else(default)
    }
}

fn compare(g: &Globals, a: CompareArgs) -> Result<()> {
    let benches = or_file(a.benchmarks, &g.file.benchmarks, || {
        match &g.file.benchmark {
            Some(b) => vec![b.clone()],
            None => SMALL_BENCHMARKS.iter().map(|s| s.to_string()).collect(),
        }
    });
    let benches = benches.iter().map(|n| config::benchmark(n)).collect::<Result<Vec<_>>>()?;
    let methods = or_file(a.methods, &g.file.methods, || vec!["axnet".into(), "onepass".into()]);
    let methods = methods.iter().map(|m| config::method(m)).collect::<Result<Vec<_>>>()?;
    let mode = config::budget_mode(a.budget_mode.as_ref().or(g.file.budget_mode.as_ref()).map_or("match_params", |s| s))?;
    let seeds = or_file(a.seeds, &g.file.seeds, || match g.seed {
        Some(s) => vec![s],
        None => (0..5).collect(),
    });
    if seeds.is_empty() {
        bail!("seed list is empty");
    }
    let mut opts = a.run.options(&g.file)?;
    opts.threads = a.threads;

    let dir = out_dir(g)?;
    let mut comparisons = Vec::new();
    for b in &benches {
        let c = compare_matched(b, &methods, mode, &seeds, &opts)?;
        let name = format!("compare_{}_{}", b.name(), mode.name());
        write_reports_csv(File::create(dir.join(format!("{name}.csv")))?, &c.rows())?;
        write_reports_csv(File::create(dir.join(format!("{name}_medians.csv")))?, &c.medians)?;
        write_reports_json(&dir.join(format!("{name}.json")), &c.table())?;
        if let Some(t) = &c.axnet_topology {
            eprintln!(
                "{}: axnet {} / {} ({} params) vs reference pair {} params",
                b.name(),
                join(&t.approx),
                join(&t.pred),
                t.param_count(),
                c.reference_params
            );
        }
        comparisons.push(c);
    }
    let baseline = methods.iter().copied().find(|&m| m == Method::Onepass).or_else(|| {
        methods.iter().copied().find(|&m| m != Method::Axnet)
    });
    if let Some(base) = baseline {
        let rows = summarize(&comparisons, base);
        write_summary(&dir.join(format!("summary_{}.csv", mode.name())), &rows)?;
        for r in &rows {
            println!(
                "{} vs {}: mean relative invocation gain {}, median invocation delta {:+.4}, wins {}/{}",
                r.method,
                r.baseline,
                r.mean_relative_invocation_gain.map_or("n/a".into(), |v| format!("{:+.1}%", v * 100.0)),
                r.median_invocation_delta,
                r.wins,
                r.benchmarks
            );
        }
    }
    Ok(())
}

fn join(w: &[usize]) -> String {
    w.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
}

const SUMMARY_COLUMNS: [&str; 6] = [
    "method",
    "baseline",
    "benchmarks",
    "mean_relative_invocation_gain",
    "median_invocation_delta",
    "wins",
];

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", SUMMARY_COLUMNS.join(","))?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.method,
            r.baseline,
            r.benchmarks,
            r.mean_relative_invocation_gain.map_or(String::new(), |v| v.to_string()),
            r.median_invocation_delta,
            r.wins
        )?;
    }
    w.flush()?;
    Ok(())
}

fn gradcheck(g: &Globals, a: GradcheckArgs) -> Result<()> {
    if a.trials == 0 {
        eprintln!("warning: 0 trials requested; nothing was checked");
        println!("PASS (vacuous)");
        return Ok(());
    }
    let results = run_suite(g.seed.unwrap_or(0), a.trials, a.hadamard_sign)?;
    let mut failed = Vec::new();
    for r in &results {
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        println!(
            "{:<22} worst relative error {:.3e} over {} trials  {verdict}",
            r.component, r.check.worst_relative_error, r.trials
        );
        if !r.passed() {
            failed.push(r.component);
        }
    }
    if !failed.is_empty() {
        return Err(NumericalFailure(format!("gradient check failed in {}", failed.join(", "))).into());
    }
    Ok(())
}

fn npu(g: &Globals, a: NpuArgs) -> Result<()> {
    let model = ModelFile::load(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let cfg = match (&a.npu_config, a.benchmark.as_ref().or(g.file.benchmark.as_ref())) {
        (Some(p), _) => NpuConfig::load(p).with_context(|| format!("loading npu config {}", p.display()))?,
        (None, Some(b)) => NpuConfig::for_benchmark(&config::benchmark(b)?),
        (None, None) => NpuConfig::default(),
    };
    let cost = ModelCost::of_model(&model, &cfg);
    let stdout = io::stdout();
    let mut out = stdout.lock();
    if a.sweep {
        let reports = (0..=10)
            .map(|k| cost.report(k as f64 / 10.0, &cfg))
            .collect::<axnet_core::Result<Vec<_>>>()?;
        serde_json::to_writer_pretty(&mut out, &reports)?;
    } else {
        let inv = a.invocation.expect("clap requires --invocation without --sweep");
        serde_json::to_writer_pretty(&mut out, &cost.report(inv, &cfg)?)?;
    }
    writeln!(out)?;
    Ok(())
}

fn gen_data(g: &Globals, a: GenDataArgs) -> Result<()> {
    let b = config::benchmark(required(a.benchmark.as_ref(), g.file.benchmark.as_ref(), "benchmark")?)?;
    let n_train = a.n_train.or(g.file.n_train).unwrap_or(10_000);
    let n_test = a.n_test.or(g.file.n_test).unwrap_or(2_000);
    let seed = g.seed.unwrap_or(0);
    let data = generate_dataset(&b, n_train, n_test, seed)?;
    let path = out_dir(g)?.join(format!("{}_{seed}.csv", b.name()));
    let side = data.write_csv(&path)?;
    println!("{}", path.display());
    println!("{}", side.display());
    Ok(())
}
