//! Time-varying sparsity: the measurement sequence `y_t = Phi x_t + v_t` is cut
//! into consecutive non-overlapping windows and each window is solved as an
//! independent MMV problem. Nothing is carried across windows.

use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::bsbl::BsblOptions;
use crate::error::{Result, SblError};
use crate::linmodel::Dictionary;
use crate::mmv::{msbl, tmsbl, MmvProblem, MmvResult};

#[derive(Debug, Clone, PartialEq)]
pub struct TvProblem {
    dict: Dictionary,
    y: DMatrix<f64>,
    window: usize,
}

impl TvProblem {
    pub fn new(dict: Dictionary, y: DMatrix<f64>, window: usize) -> Result<Self> {
        if y.nrows() != dict.rows() {
            return Err(SblError::DimensionMismatch(format!(
                "Y has {} rows, dictionary has {}",
                y.nrows(),
                dict.rows()
            )));
        }
        if window == 0 || window > y.ncols() {
            return Err(SblError::InvalidArgument(format!(
                "window {window} must lie in 1..={}",
                y.ncols()
            )));
        }
        Ok(Self { dict, y, window })
    }

    pub fn dict(&self) -> &Dictionary {
        &self.dict
    }

    pub fn measurements(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn windows(&self) -> Vec<Range<usize>> {
        window_partition(self.y.ncols(), self.window).expect("window validated")
    }
}

/// Consecutive ranges of `w` columns covering `0..t`; a remainder becomes a
/// shorter final range.
pub fn window_partition(t: usize, w: usize) -> Result<Vec<Range<usize>>> {
    if w == 0 {
        return Err(SblError::InvalidArgument("window must be positive".into()));
    }
    Ok((0..t).step_by(w).map(|s| s..(s + w).min(t)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TvSolver {
    #[default]
    Tmsbl,
    Msbl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowReport {
    pub columns: Range<usize>,
    /// The window's MMV fit (its `x_hat` is already placed in the output), or
    /// the error that stopped it.
    pub outcome: std::result::Result<MmvResult, SblError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvResult {
    /// `M x T`; columns of failed windows are zero.
    pub x_hat: DMatrix<f64>,
    pub windows: Vec<WindowReport>,
}

impl TvResult {
    pub fn failed_windows(&self) -> impl Iterator<Item = &WindowReport> {
        self.windows.iter().filter(|w| w.outcome.is_err())
    }
}

/// Solve every window independently (concurrently when a rayon pool is
/// available) and assemble the column-wise concatenation.
pub fn solve_time_varying(
    problem: &TvProblem,
    solver: TvSolver,
    options: &BsblOptions,
) -> TvResult {
    let ranges = problem.windows();
    let windows: Vec<WindowReport> = ranges
        .into_par_iter()
        .map(|cols| {
            let y = problem.y.columns(cols.start, cols.len()).into_owned();
            let outcome = MmvProblem::new(problem.dict.clone(), y).and_then(|p| match solver {
                TvSolver::Tmsbl => tmsbl(&p, options),
                TvSolver::Msbl => msbl(&p, options),
            });
            WindowReport {
                columns: cols,
                outcome,
            }
        })
        .collect();

    let mut x_hat = DMatrix::zeros(problem.dict.cols(), problem.y.ncols());
    for w in &windows {
        if let Ok(fit) = &w.outcome {
            x_hat
                .columns_mut(w.columns.start, w.columns.len())
                .copy_from(&fit.x_hat);
        }
    }
    TvResult { x_hat, windows }
}
