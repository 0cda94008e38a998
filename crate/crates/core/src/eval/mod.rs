//! Test-split evaluation metrics, report rows and the matched-budget
//! comparison harness.

mod compare;
mod report;

pub use compare::{
    compare_matched, match_params, neighbor_candidates, run_cell, summarize, BudgetMode, Candidate, CellOutcome,
    CellSpec, CompareOptions, Comparison, Method, SummaryRow, PARAM_TOLERANCE, INVOCATION_TOLERANCE,
};
pub use report::{
    append_report_csv, median_report, read_reports_csv, write_reports_csv, write_reports_json, EvalReport,
    REPORT_COLUMNS, REPORT_SCHEMA_VERSION,
};

use crate::benchmark::{Dataset, Scorer};
use crate::error::{Error, Result};
use crate::model::QualityModel;

/// Per-sample outcome counts over the test split.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Confusion {
    pub samples: usize,
    /// Truly safe samples.
    pub safe: usize,
    /// Samples with `P(safe) > 0.5`.
    pub predicted: usize,
    /// Predicted safe and truly safe.
    pub true_positive: usize,
    /// Sum of the metric error over predicted-safe samples.
    pub predicted_error_sum: f64,
}

impl Confusion {
    pub fn true_invocation(&self) -> f64 {
        self.safe as f64 / self.samples as f64
    }

    pub fn predicted_invocation(&self) -> f64 {
        self.predicted as f64 / self.samples as f64
    }

    /// `None` when nothing is predicted safe.
    pub fn prediction_accuracy(&self) -> Option<f64> {
        (self.predicted > 0).then(|| self.true_positive as f64 / self.predicted as f64)
    }

    /// `None` when nothing is predicted safe.
    pub fn overall_error(&self) -> Option<f64> {
        (self.predicted > 0).then(|| self.predicted_error_sum / self.predicted as f64)
    }
}

/// Scores every test sample once.
pub fn confusion<M: QualityModel + ?Sized>(model: &M, data: &Dataset, scorer: &Scorer) -> Result<Confusion> {
    if data.n_test() == 0 {
        return Err(Error::Empty("test split"));
    }
    let mut c = Confusion::default();
    for i in data.test_indices() {
        let inf = model.infer(data.input(i))?;
        let err = scorer.error(&inf.output, data.target(i));
        let safe = crate::benchmark::is_safe(err, scorer.bound);
        let predicted = inf.predicted_safe();
        c.samples += 1;
        c.safe += safe as usize;
        if predicted {
            c.predicted += 1;
            c.true_positive += safe as usize;
            c.predicted_error_sum += err;
        }
    }
    Ok(c)
}

pub fn true_invocation<M: QualityModel + ?Sized>(model: &M, data: &Dataset, scorer: &Scorer) -> Result<f64> {
    Ok(confusion(model, data, scorer)?.true_invocation())
}

pub fn predicted_invocation<M: QualityModel + ?Sized>(model: &M, data: &Dataset, scorer: &Scorer) -> Result<f64> {
    Ok(confusion(model, data, scorer)?.predicted_invocation())
}

pub fn prediction_accuracy<M: QualityModel + ?Sized>(model: &M, data: &Dataset, scorer: &Scorer) -> Result<Option<f64>> {
    Ok(confusion(model, data, scorer)?.prediction_accuracy())
}

pub fn overall_error<M: QualityModel + ?Sized>(model: &M, data: &Dataset, scorer: &Scorer) -> Result<Option<f64>> {
    Ok(confusion(model, data, scorer)?.overall_error())
}

/// Median of a nonempty list; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
