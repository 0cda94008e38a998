//! Central finite-difference gradient checking.

/// Perturbation used for every finite-difference estimate.
pub const FD_STEP: f64 = 1e-6;

/// Denominator floor for the relative error. Round-off in a central
/// difference at `FD_STEP` is around `1e-10` absolute, so gradients smaller
/// than this are compared on an absolute scale instead.
pub const RELATIVE_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub worst_relative_error: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
}

impl GradCheck {
    pub fn empty() -> Self {
        GradCheck {
            worst_relative_error: 0.0,
            worst_index: None,
            checked: 0,
        }
    }

    pub fn merge(self, other: GradCheck) -> GradCheck {
        let checked = self.checked + other.checked;
        if other.worst_relative_error > self.worst_relative_error {
            GradCheck { checked, ..other }
        } else {
            GradCheck { checked, ..self }
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares `analytic[i]` with `(f(p + h e_i) - f(p - h e_i)) / 2h` for every
/// coordinate. `params` is restored before returning.
pub fn check_gradient(params: &mut [f64], analytic: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> GradCheck {
    assert_eq!(params.len(), analytic.len());
    let mut out = GradCheck::empty();
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + FD_STEP;
        let up = loss(params);
        params[i] = orig - FD_STEP;
        let down = loss(params);
        params[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let rel = relative_error(analytic[i], numeric);
        if rel > out.worst_relative_error || out.worst_index.is_none() {
            out.worst_relative_error = rel;
            out.worst_index = Some(i);
        }
        out.checked += 1;
    }
    out
}
