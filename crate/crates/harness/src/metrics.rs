//! Per-trial records and their aggregation into sweep rows.

use sbl_core::limits::wilson_interval;

use crate::error::{HarnessError, Result};

/// A noiseless trial succeeds when its NMSE is at most this.
pub const SUCCESS_NMSE: f64 = 1e-6;

/// `||estimate - truth||^2 / ||truth||^2` over matching flat storage.
pub fn nmse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(HarnessError::Metric(format!(
            "shape mismatch: {} vs {} entries",
            estimate.len(),
            truth.len()
        )));
    }
    let energy: f64 = truth.iter().map(|t| t * t).sum();
    if energy == 0.0 {
        return Err(HarnessError::Metric("truth is all zero".into()));
    }
    let err: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t) * (e - t))
        .sum();
    Ok(err / energy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub experiment: String,
    pub solver: String,
    pub param_name: String,
    pub param_value: f64,
    pub seed: u64,
    pub nmse: f64,
    pub success: bool,
    pub wall_time: f64,
    /// The solver returned an error; counted as a non-success with NMSE 1
    /// (the all-zero estimate).
    pub failed: bool,
}

/// Aggregate of all trials at one (solver, parameter value).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub experiment: String,
    pub solver: String,
    pub param_name: String,
    pub param_value: f64,
    pub trials: usize,
    pub successes: usize,
    pub failures: usize,
    pub mean_nmse: f64,
    pub success_rate: f64,
    /// Half-width of the 95% Wilson interval on the success rate.
    pub ci_halfwidth: f64,
    pub mean_wall_time_s: f64,
}

impl SweepRow {
    /// Reduce records in the order given; all must share experiment, solver
    /// and parameter.
    pub fn aggregate(records: &[TrialRecord]) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| HarnessError::Metric("no trials to aggregate".into()))?;
        if records.iter().any(|r| {
            r.experiment != first.experiment
                || r.solver != first.solver
                || r.param_name != first.param_name
                || r.param_value.to_bits() != first.param_value.to_bits()
        }) {
            return Err(HarnessError::Metric(
                "records from different sweep points".into(),
            ));
        }
        let n = records.len();
        let successes = records.iter().filter(|r| r.success).count();
        let failures = records.iter().filter(|r| r.failed).count();
        let (lo, hi) = wilson_interval(successes, n);
        Ok(Self {
            experiment: first.experiment.clone(),
            solver: first.solver.clone(),
            param_name: first.param_name.clone(),
            param_value: first.param_value,
            trials: n,
            successes,
            failures,
            mean_nmse: records.iter().map(|r| r.nmse).sum::<f64>() / n as f64,
            success_rate: successes as f64 / n as f64,
            ci_halfwidth: 0.5 * (hi - lo),
            mean_wall_time_s: records.iter().map(|r| r.wall_time).sum::<f64>() / n as f64,
        })
    }
}
