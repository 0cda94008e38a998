//! Common inference surface and the on-disk model format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{SeparatePair, SharedNet};
use crate::benchmark::{Dataset, Scorer};
use crate::error::Result;
use crate::fusion::FusedNet;

/// Approximate output plus the predictor's belief that it is safe to use.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub output: Vec<f64>,
    pub p_safe: f64,
}

/// Decision threshold on `P(safe)`.
pub const SAFE_THRESHOLD: f64 = 0.5;

impl Inference {
    pub fn predicted_safe(&self) -> bool {
        self.p_safe > SAFE_THRESHOLD
    }
}

/// Anything that approximates a benchmark and predicts its own safety.
pub trait QualityModel {
    fn infer(&self, x: &[f64]) -> Result<Inference>;
    fn param_count(&self) -> usize;
}

impl<M: QualityModel + ?Sized> QualityModel for &M {
    fn infer(&self, x: &[f64]) -> Result<Inference> {
        (**self).infer(x)
    }

    fn param_count(&self) -> usize {
        (**self).param_count()
    }
}

/// `(true invocation, predicted invocation)` over `indices`.
pub(crate) fn invocation_on<M: QualityModel + ?Sized>(
    model: &M,
    data: &Dataset,
    indices: &[usize],
    scorer: &Scorer,
) -> Result<(f64, f64)> {
    if indices.is_empty() {
        return Ok((0.0, 0.0));
    }
    let (mut safe, mut predicted) = (0usize, 0usize);
    for &i in indices {
        let inf = model.infer(data.input(i))?;
        safe += scorer.is_safe(&inf.output, data.target(i)) as usize;
        predicted += inf.predicted_safe() as usize;
    }
    let n = indices.len() as f64;
    Ok((safe as f64 / n, predicted as f64 / n))
}

/// Serialized model of any trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelFile {
    Axnet { net: FusedNet },
    Pair { net: SeparatePair },
    Shared { net: SharedNet },
}

impl ModelFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn as_model(&self) -> &dyn QualityModel {
        match self {
            ModelFile::Axnet { net } => net,
            ModelFile::Pair { net } => net,
            ModelFile::Shared { net } => net,
        }
    }
}
