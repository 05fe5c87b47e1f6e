//! Central-difference gradient verification.

/// Denominator floor for the relative error, so that gradients that are
/// essentially zero are compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Index of the worst parameter.
    pub worst_index: Option<usize>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn new(tolerance: f64) -> Self {
        GradCheckReport {
            checked: 0,
            max_rel_error: 0.0,
            worst_index: None,
            worst_analytic: 0.0,
            worst_numeric: 0.0,
            tolerance,
            passed: true,
        }
    }

    /// Adds one analytic/numeric comparison.
    pub fn record(&mut self, index: usize, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if self.worst_index.is_none() || err > self.max_rel_error || !err.is_finite() {
            self.max_rel_error = err;
            self.worst_index = Some(index);
            self.worst_analytic = analytic;
            self.worst_numeric = numeric;
        }
        // NaN fails
        if !(err <= self.tolerance) {
            self.passed = false;
        }
    }

    /// Folds another report into this one, keeping the worst entry.
    pub fn merge(&mut self, other: &GradCheckReport) {
        self.checked += other.checked;
        if other.max_rel_error > self.max_rel_error || self.worst_index.is_none() {
            self.max_rel_error = other.max_rel_error;
            self.worst_index = other.worst_index;
            self.worst_analytic = other.worst_analytic;
            self.worst_numeric = other.worst_numeric;
        }
        self.passed &= other.passed;
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `analytic` against central differences of `loss_fn` at every index.
pub fn finite_difference_check<F>(loss_fn: F, params: &[f64], analytic: &[f64], step: f64, tolerance: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    let all: Vec<usize> = (0..params.len()).collect();
    finite_difference_check_at(loss_fn, params, analytic, &all, step, tolerance)
}

/// Like [`finite_difference_check`] but only probes the listed indices.
pub fn finite_difference_check_at<F>(
    mut loss_fn: F,
    params: &[f64],
    analytic: &[f64],
    indices: &[usize],
    step: f64,
    tolerance: f64,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let mut report = GradCheckReport::new(tolerance);
    let mut probe = params.to_vec();
    for &i in indices {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = loss_fn(&probe);
        probe[i] = orig - step;
        let minus = loss_fn(&probe);
        probe[i] = orig;
        report.record(i, analytic[i], (plus - minus) / (2.0 * step));
    }
    report
}
