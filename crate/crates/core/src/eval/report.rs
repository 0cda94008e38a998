use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{median, Confusion};
use crate::error::{Error, Result};
use crate::npu::CostReport;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const REPORT_COLUMNS: [&str; 9] = [
    "benchmark",
    "method",
    "seed",
    "param_count",
    "true_invocation",
    "predicted_invocation",
    "prediction_accuracy",
    "overall_error",
    "train_time_s",
];

/// Written in the `seed` column of a per-method median row.
const MEDIAN_SEED: &str = "median";

/// One evaluated (benchmark, method, seed) cell, or a per-method median when
/// `seed` is `None`. Undefined metrics are `None` and written as empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub benchmark: String,
    pub method: String,
    pub seed: Option<u64>,
    pub param_count: usize,
    pub true_invocation: f64,
    pub predicted_invocation: f64,
    pub prediction_accuracy: Option<f64>,
    pub overall_error: Option<f64>,
    pub train_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostReport>,
}

impl EvalReport {
    pub fn from_confusion(
        benchmark: &str,
        method: &str,
        seed: u64,
        param_count: usize,
        c: &Confusion,
        train_time_s: f64,
    ) -> Self {
        EvalReport {
            benchmark: benchmark.to_owned(),
            method: method.to_owned(),
            seed: Some(seed),
            param_count,
            true_invocation: c.true_invocation(),
            predicted_invocation: c.predicted_invocation(),
            prediction_accuracy: c.prediction_accuracy(),
            overall_error: c.overall_error(),
            train_time_s,
            cost: None,
        }
    }

    fn record(&self, with_cost: bool) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut r = vec![
            self.benchmark.clone(),
            self.method.clone(),
            self.seed.map(|s| s.to_string()).unwrap_or_else(|| MEDIAN_SEED.into()),
            self.param_count.to_string(),
            self.true_invocation.to_string(),
            self.predicted_invocation.to_string(),
            opt(self.prediction_accuracy),
            opt(self.overall_error),
            self.train_time_s.to_string(),
        ];
        if with_cost {
            match &self.cost {
                Some(c) => r.extend(c.values().iter().map(|v| v.to_string())),
                None => r.extend(std::iter::repeat_n(String::new(), CostReport::COLUMNS.len())),
            }
        }
        r
    }
}

fn header(with_cost: bool) -> Vec<&'static str> {
    let mut h = REPORT_COLUMNS.to_vec();
    if with_cost {
        h.extend(CostReport::COLUMNS);
    }
    h
}

/// Median of every numeric column over `rows`, which must share a
/// benchmark and method. Optional metrics take the median of the defined
/// values; cost columns are dropped.
pub fn median_report(rows: &[EvalReport]) -> Option<EvalReport> {
    let first = rows.first()?;
    let col = |f: &dyn Fn(&EvalReport) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>()).unwrap();
    let opt_col = |f: &dyn Fn(&EvalReport) -> Option<f64>| median(&rows.iter().filter_map(f).collect::<Vec<_>>());
    Some(EvalReport {
        benchmark: first.benchmark.clone(),
        method: first.method.clone(),
        seed: None,
        param_count: col(&|r| r.param_count as f64).round() as usize,
        true_invocation: col(&|r| r.true_invocation),
        predicted_invocation: col(&|r| r.predicted_invocation),
        prediction_accuracy: opt_col(&|r| r.prediction_accuracy),
        overall_error: opt_col(&|r| r.overall_error),
        train_time_s: col(&|r| r.train_time_s),
        cost: None,
    })
}

pub fn write_reports_csv<W: Write>(w: W, rows: &[EvalReport]) -> Result<()> {
    let with_cost = rows.iter().any(|r| r.cost.is_some());
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header(with_cost))?;
    for r in rows {
        out.write_record(r.record(with_cost))?;
    }
    out.flush()?;
    Ok(())
}

/// Appends one row, writing the header first if the file is new or empty.
/// An existing header must match the row's column set.
pub fn append_report_csv(path: &Path, row: &EvalReport) -> Result<()> {
    let with_cost = row.cost.is_some();
    let expected = header(with_cost).join(",");
    let existing = fs::read_to_string(path).unwrap_or_default();
    let fresh = existing.trim().is_empty();
    if !fresh {
        let found = existing.lines().next().unwrap_or_default();
        if found != expected {
            return Err(Error::config(format!(
                "{} has header `{found}`, expected `{expected}`",
                path.display()
            )));
        }
    }
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        out.write_record(header(with_cost))?;
    }
    out.write_record(row.record(with_cost))?;
    out.flush()?;
    Ok(())
}

pub fn read_reports_csv(path: &Path) -> Result<Vec<EvalReport>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let head: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let with_cost = head.len() == REPORT_COLUMNS.len() + CostReport::COLUMNS.len();
    if head.iter().map(String::as_str).collect::<Vec<_>>() != header(with_cost) {
        return Err(Error::config(format!("unexpected report header {head:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::config(format!("column {} is not a number: `{}`", head[i], &rec[i])))
        };
        let opt = |i: usize| -> Result<Option<f64>> { if rec[i].is_empty() { Ok(None) } else { num(i).map(Some) } };
        let seed = match &rec[2] {
            MEDIAN_SEED => None,
            s => Some(s.parse().map_err(|_| Error::config(format!("bad seed `{s}`")))?),
        };
        let cost = if with_cost && !rec[REPORT_COLUMNS.len()].is_empty() {
            let v: Vec<f64> = (0..CostReport::COLUMNS.len())
                .map(|k| num(REPORT_COLUMNS.len() + k))
                .collect::<Result<_>>()?;
            Some(CostReport {
                invocation: v[0],
                npu_cycles_pred: v[1],
                npu_cycles_approx: v[2],
                cpu_cycles_per_sample: v[3],
                expected_cycles_per_sample: v[4],
                speedup: v[5],
                energy_reduction: v[6],
                energy_efficiency: v[7],
            })
        } else {
            None
        };
        rows.push(EvalReport {
            benchmark: rec[0].to_owned(),
            method: rec[1].to_owned(),
            seed,
            param_count: num(3)? as usize,
            true_invocation: num(4)?,
            predicted_invocation: num(5)?,
            prediction_accuracy: opt(6)?,
            overall_error: opt(7)?,
            train_time_s: num(8)?,
            cost,
        });
    }
    Ok(rows)
}

#[derive(Serialize, Deserialize)]
struct ReportDoc {
    schema_version: u32,
    rows: Vec<EvalReport>,
}

/// JSON mirror of the CSV report.
pub fn write_reports_json(path: &Path, rows: &[EvalReport]) -> Result<()> {
    let doc = ReportDoc {
        schema_version: REPORT_SCHEMA_VERSION,
        rows: rows.to_vec(),
    };
    fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}
