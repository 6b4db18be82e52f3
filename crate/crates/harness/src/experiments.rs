//! Seeded Monte-Carlo sweeps.
//!
//! Every trial draws its data from a seed mixed out of (master seed,
//! experiment id, parameter index, trial index), never from the solver, so
//! all solvers at a sweep point see identical problems and adding trials
//! leaves existing ones untouched. Trials run on the rayon pool and are
//! reduced in trial order, so the thread count never changes the output.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use sbl_core::datagen::{
    add_noise, derive_seed, gen_block_signal, gen_dictionary, gen_mmv_signal, gen_tv_signal,
    RowSet, TvEvent, TvSignalSpec,
};
use sbl_core::limits::{c_of_w, mc_error_rate, threshold_measurements, SignalValueMatrix};
use sbl_core::tvs::{solve_time_varying, TvProblem, TvSolver};
use sbl_core::{bsbl_em, msbl, tmsbl, BlockPartition, BsblOptions, LambdaDenominator, MmvProblem};

use crate::config::KvConfig;
use crate::error::{HarnessError, Result};
use crate::metrics::{nmse, SweepRow, TrialRecord, SUCCESS_NMSE};

pub const EXP1_ID: u64 = 1;
pub const EXP2_ID: u64 = 2;
pub const EXP3_ID: u64 = 3;
pub const LIMITS_ID: u64 = 4;

// Sub-streams inside one trial.
const DICT_STREAM: u64 = 0;
const SIGNAL_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

pub fn trial_seed(master: u64, experiment: u64, param_index: usize, trial: usize) -> u64 {
    derive_seed(master, &[experiment, param_index as u64, trial as u64])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Record per-trial wall time. Off by default: timings are the only
    /// nondeterministic output, and with them off the CSV is bit-reproducible.
    pub timing: bool,
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

/// Solver keys shared by the SBL experiments.
fn take_solver_keys(kv: &mut KvConfig, opts: &mut BsblOptions) -> Result<()> {
    kv.take("max_iters", &mut opts.max_iters)?;
    kv.take("tol", &mut opts.tol)?;
    kv.take("prune_gamma", &mut opts.prune_gamma)?;
    let mut den = String::new();
    kv.take("lambda_denominator", &mut den)?;
    match den.as_str() {
        "" => {}
        "M" | "m" => opts.lambda_denominator = LambdaDenominator::M,
        "N" | "n" => opts.lambda_denominator = LambdaDenominator::N,
        other => {
            return Err(config_err(format!(
                "lambda_denominator must be M or N, got `{other}`"
            )))
        }
    }
    opts.validate()?;
    Ok(())
}

fn timed<T>(timing: bool, f: impl FnOnce() -> T) -> (T, f64) {
    if timing {
        let t0 = Instant::now();
        let out = f();
        (out, t0.elapsed().as_secs_f64())
    } else {
        (f(), 0.0)
    }
}

struct Point<'a> {
    experiment: &'a str,
    param_name: &'a str,
    param_value: f64,
}

impl Point<'_> {
    fn record(&self, solver: &str, seed: u64, outcome: Result<f64>, wall_time: f64) -> TrialRecord {
        let (nmse, failed) = match outcome {
            Ok(e) => (e, false),
            Err(_) => (1.0, true),
        };
        TrialRecord {
            experiment: self.experiment.into(),
            solver: solver.into(),
            param_name: self.param_name.into(),
            param_value: self.param_value,
            seed,
            nmse,
            success: !failed && nmse <= SUCCESS_NMSE,
            wall_time,
            failed,
        }
    }
}

/// Aggregate `per_trial[t][s]` into one row per solver `s`.
fn reduce(per_trial: Vec<Vec<TrialRecord>>) -> Result<Vec<SweepRow>> {
    let solvers = per_trial.first().map_or(0, |r| r.len());
    (0..solvers)
        .map(|s| {
            let recs: Vec<TrialRecord> = per_trial.iter().map(|r| r[s].clone()).collect();
            SweepRow::aggregate(&recs)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp1Config {
    pub n: usize,
    pub m: usize,
    pub block_size: usize,
    pub active_blocks: usize,
    pub betas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub solver: BsblOptions,
}

pub const DEFAULT_CORR_GRID: [f64; 12] = [
    -0.99, -0.9, -0.7, -0.5, -0.3, 0.0, 0.3, 0.5, 0.7, 0.9, 0.95, 0.99,
];

impl Default for Exp1Config {
    fn default() -> Self {
        Self {
            n: 100,
            m: 300,
            block_size: 4,
            active_blocks: 20,
            betas: DEFAULT_CORR_GRID.to_vec(),
            trials: 100,
            seed: 1,
            solver: BsblOptions::noiseless(),
        }
    }
}

impl Exp1Config {
    pub fn from_kv(mut kv: KvConfig) -> Result<Self> {
        let mut c = Self::default();
        kv.take("n", &mut c.n)?;
        kv.take("m", &mut c.m)?;
        kv.take("block_size", &mut c.block_size)?;
        kv.take("active_blocks", &mut c.active_blocks)?;
        kv.take_list("betas", &mut c.betas)?;
        kv.take("trials", &mut c.trials)?;
        kv.take("seed", &mut c.seed)?;
        take_solver_keys(&mut kv, &mut c.solver)?;
        kv.finish()?;
        if c.block_size == 0 || c.m % c.block_size != 0 {
            return Err(config_err(format!(
                "block_size {} must divide m = {}",
                c.block_size, c.m
            )));
        }
        Ok(c)
    }
}

/// BSBL-EM with and without intra-block correlation learning over a grid of
/// block AR(1) coefficients.
pub fn run_experiment1(cfg: &Exp1Config, run: RunOptions) -> Result<Vec<SweepRow>> {
    let part = BlockPartition::uniform(cfg.m / cfg.block_size, cfg.block_size)?;
    let modes = [("bsbl-em", true), ("bsbl-em-nocorr", false)];
    let mut rows = Vec::new();
    for (pi, &beta) in cfg.betas.iter().enumerate() {
        let point = Point {
            experiment: "exp1",
            param_name: "beta",
            param_value: beta,
        };
        let per_trial = (0..cfg.trials)
            .into_par_iter()
            .map(|t| -> Result<Vec<TrialRecord>> {
                let seed = trial_seed(cfg.seed, EXP1_ID, pi, t);
                let dict = gen_dictionary(cfg.n, cfg.m, derive_seed(seed, &[DICT_STREAM]))?;
                let (x, _) = gen_block_signal(
                    &part,
                    cfg.active_blocks,
                    beta,
                    1.0,
                    derive_seed(seed, &[SIGNAL_STREAM]),
                )?;
                let y = dict.matrix() * &x;
                Ok(modes
                    .iter()
                    .map(|&(name, learn)| {
                        let opts = cfg.solver.clone().with_learn_corr(learn);
                        let (res, dt) = timed(run.timing, || bsbl_em(&dict, &y, &part, &opts));
                        let e = res
                            .map_err(HarnessError::from)
                            .and_then(|r| nmse(r.x_hat.as_slice(), x.as_slice()));
                        point.record(name, seed, e, dt)
                    })
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(reduce(per_trial)?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp2Config {
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub k: usize,
    pub rhos: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub solver: BsblOptions,
}

impl Default for Exp2Config {
    fn default() -> Self {
        Self {
            n: 25,
            m: 125,
            l: 4,
            k: 18,
            rhos: DEFAULT_CORR_GRID.to_vec(),
            trials: 100,
            seed: 1,
            solver: BsblOptions::noiseless(),
        }
    }
}

impl Exp2Config {
    pub fn from_kv(mut kv: KvConfig) -> Result<Self> {
        let mut c = Self::default();
        kv.take("n", &mut c.n)?;
        kv.take("m", &mut c.m)?;
        kv.take("l", &mut c.l)?;
        kv.take("k", &mut c.k)?;
        kv.take_list("rhos", &mut c.rhos)?;
        kv.take("trials", &mut c.trials)?;
        kv.take("seed", &mut c.seed)?;
        take_solver_keys(&mut kv, &mut c.solver)?;
        kv.finish()?;
        Ok(c)
    }
}

/// T-MSBL against M-SBL over a grid of inter-vector AR(1) coefficients.
pub fn run_experiment2(cfg: &Exp2Config, run: RunOptions) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (pi, &rho) in cfg.rhos.iter().enumerate() {
        let point = Point {
            experiment: "exp2",
            param_name: "rho",
            param_value: rho,
        };
        let per_trial = (0..cfg.trials)
            .into_par_iter()
            .map(|t| -> Result<Vec<TrialRecord>> {
                let seed = trial_seed(cfg.seed, EXP2_ID, pi, t);
                let dict = gen_dictionary(cfg.n, cfg.m, derive_seed(seed, &[DICT_STREAM]))?;
                let (x, _) = gen_mmv_signal(
                    cfg.m,
                    cfg.l,
                    cfg.k,
                    rho,
                    derive_seed(seed, &[SIGNAL_STREAM]),
                )?;
                let y = dict.matrix() * &x;
                let problem = MmvProblem::new(dict, y)?;
                let solvers: [(&str, fn(&MmvProblem, &BsblOptions) -> sbl_core::Result<_>); 2] =
                    [("tmsbl", tmsbl), ("msbl", msbl)];
                Ok(solvers
                    .iter()
                    .map(|(name, solve)| {
                        let (res, dt) = timed(run.timing, || solve(&problem, &cfg.solver));
                        let e = res
                            .map_err(HarnessError::from)
                            .and_then(|r| nmse(r.x_hat.as_slice(), x.as_slice()));
                        point.record(name, seed, e, dt)
                    })
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(reduce(per_trial)?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp3Config {
    pub n: usize,
    pub signal: TvSignalSpec,
    pub windows: Vec<usize>,
    pub snr_db: f64,
    pub trials: usize,
    pub seed: u64,
    pub solver: BsblOptions,
}

impl Default for Exp3Config {
    fn default() -> Self {
        Self {
            n: 60,
            signal: TvSignalSpec::default(),
            windows: vec![2, 5],
            snr_db: 20.0,
            trials: 100,
            seed: 1,
            // Noisy data: normalizing the noise update by M (256 per column)
            // rather than the measurement count biases lambda low by M/N.
            solver: BsblOptions {
                lambda_denominator: LambdaDenominator::N,
                ..BsblOptions::default()
            },
        }
    }
}

impl Exp3Config {
    /// Besides the generic keys, the support schedule is described by
    /// `k_initial`, `add_count`/`add_at` and `remove_count`/`remove_at`
    /// (0-based columns; a count of 0 drops the event).
    pub fn from_kv(mut kv: KvConfig) -> Result<Self> {
        let mut c = Self::default();
        kv.take("n", &mut c.n)?;
        kv.take("m", &mut c.signal.m)?;
        kv.take("t", &mut c.signal.t)?;
        let (mut k0, mut add, mut add_at, mut rem, mut rem_at) =
            (15usize, 10usize, 15usize, 5usize, 25usize);
        kv.take("k_initial", &mut k0)?;
        kv.take("add_count", &mut add)?;
        kv.take("add_at", &mut add_at)?;
        kv.take("remove_count", &mut rem)?;
        kv.take("remove_at", &mut rem_at)?;
        c.signal.initial = RowSet::Random(k0);
        c.signal.events = [(add_at, add, 0), (rem_at, 0, rem)]
            .into_iter()
            .filter(|&(_, a, r)| a + r > 0)
            .map(|(start, a, r)| TvEvent {
                start,
                added: RowSet::Random(a),
                removed: RowSet::Random(r),
            })
            .collect();
        c.signal.events.sort_by_key(|e| e.start);
        kv.take("ar_min", &mut c.signal.ar_coeff_range.0)?;
        kv.take("ar_max", &mut c.signal.ar_coeff_range.1)?;
        kv.take("max_duration", &mut c.signal.max_duration)?;
        kv.take_list("windows", &mut c.windows)?;
        kv.take("snr_db", &mut c.snr_db)?;
        kv.take("trials", &mut c.trials)?;
        kv.take("seed", &mut c.seed)?;
        take_solver_keys(&mut kv, &mut c.solver)?;
        kv.finish()?;
        c.signal.validate()?;
        if c.windows.iter().any(|&w| w == 0 || w > c.signal.t) {
            return Err(config_err(format!(
                "windows must lie in 1..={}",
                c.signal.t
            )));
        }
        Ok(c)
    }
}

/// Windowed T-MSBL and M-SBL on signals with time-varying support. The data
/// of a trial is shared by every (window, solver) configuration.
pub fn run_experiment3(cfg: &Exp3Config, run: RunOptions) -> Result<Vec<SweepRow>> {
    let solvers = [("tmsbl", TvSolver::Tmsbl), ("msbl", TvSolver::Msbl)];
    let per_trial = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<TrialRecord>> {
            let seed = trial_seed(cfg.seed, EXP3_ID, 0, t);
            let dict = gen_dictionary(cfg.n, cfg.signal.m, derive_seed(seed, &[DICT_STREAM]))?;
            let sig = gen_tv_signal(&cfg.signal, derive_seed(seed, &[SIGNAL_STREAM]))?;
            let clean = dict.matrix() * &sig.x;
            let (y, _) = add_noise(&clean, cfg.snr_db, derive_seed(seed, &[NOISE_STREAM]))?;
            let mut recs = Vec::with_capacity(cfg.windows.len() * solvers.len());
            for &w in &cfg.windows {
                let point = Point {
                    experiment: "exp3",
                    param_name: "window",
                    param_value: w as f64,
                };
                let problem = TvProblem::new(dict.clone(), y.clone(), w)?;
                for &(name, solver) in &solvers {
                    let (res, dt) = timed(run.timing, || {
                        solve_time_varying(&problem, solver, &cfg.solver)
                    });
                    let e = match res.failed_windows().next() {
                        Some(f) => Err(f.outcome.clone().unwrap_err().into()),
                        None => nmse(res.x_hat.as_slice(), sig.x.as_slice()),
                    };
                    recs.push(point.record(name, seed, e, dt));
                }
            }
            Ok(recs)
        })
        .collect::<Result<Vec<_>>>()?;
    reduce(per_trial)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitsConfig {
    pub m: usize,
    /// Nonzero values of the active rows (`K x L`).
    pub w: DMatrix<f64>,
    pub sigma_phi_sq: f64,
    pub sigma_v_sq: f64,
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for LimitsConfig {
    /// `M = 32`, `K = 2`, `L = 1` with unit entries at 10 dB per-entry SNR.
    fn default() -> Self {
        Self {
            m: 32,
            w: DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
            sigma_phi_sq: 1.0,
            sigma_v_sq: 0.1,
            n_values: (2..=16).collect(),
            trials: 500,
            seed: 1,
        }
    }
}

impl LimitsConfig {
    pub fn from_kv(mut kv: KvConfig) -> Result<Self> {
        let mut c = Self::default();
        kv.take("m", &mut c.m)?;
        kv.take_matrix("w", &mut c.w)?;
        kv.take("sigma_phi_sq", &mut c.sigma_phi_sq)?;
        kv.take("sigma_v_sq", &mut c.sigma_v_sq)?;
        kv.take_list("n_values", &mut c.n_values)?;
        kv.take("trials", &mut c.trials)?;
        kv.take("seed", &mut c.seed)?;
        kv.finish()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitsRow {
    pub n: usize,
    pub error_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `ceil(ln M / c(W))`, identical on every row.
    pub threshold: usize,
}

/// Empirical support-error rate of the exhaustive ML decoder against `N`.
pub fn run_limits_sweep(cfg: &LimitsConfig) -> Result<Vec<LimitsRow>> {
    let w = SignalValueMatrix::new(cfg.w.clone())?;
    let report = c_of_w(&w, cfg.sigma_phi_sq, cfg.sigma_v_sq)?;
    let threshold = threshold_measurements(cfg.m, &report, 0.0)?;
    cfg.n_values
        .iter()
        .enumerate()
        .map(|(pi, &n)| {
            let seed = derive_seed(cfg.seed, &[LIMITS_ID, pi as u64]);
            let est = mc_error_rate(
                &w,
                cfg.m,
                n,
                cfg.sigma_phi_sq,
                cfg.sigma_v_sq,
                cfg.trials,
                seed,
            )?;
            Ok(LimitsRow {
                n,
                error_rate: est.rate,
                ci_low: est.ci_low,
                ci_high: est.ci_high,
                threshold,
            })
        })
        .collect()
}
