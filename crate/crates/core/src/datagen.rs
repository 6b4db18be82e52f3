//! Seeded synthetic data: unit-norm Gaussian dictionaries, block-sparse and
//! row-sparse signals with AR(1) correlated entries, signals with time-varying
//! support, and additive noise at a prescribed SNR.
//!
//! Every generator is a pure function of its parameters and a `u64` seed.
//! AR(1) sequences are stationary with unit marginal variance:
//! `x_1 ~ N(0, 1)`, `x_{j+1} = beta x_j + sqrt(1 - beta^2) e_j`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SblError};
use crate::linmodel::{BlockPartition, Dictionary};

pub(crate) fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a master seed with a path of indices (experiment, parameter, trial,
/// ...) into a well-spread child seed. Distinct paths give unrelated streams.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &p| {
        splitmix64(acc ^ splitmix64(p))
    })
}

/// Stationary unit-variance AR(1) sequence of length `len`.
pub fn ar1_sequence<R: Rng + ?Sized>(rng: &mut R, len: usize, coeff: f64) -> Vec<f64> {
    let innov = (1.0 - coeff * coeff).sqrt();
    let mut out = Vec::with_capacity(len);
    let mut prev: f64 = 0.0;
    for j in 0..len {
        let e: f64 = rng.sample(StandardNormal);
        prev = if j == 0 { e } else { coeff * prev + innov * e };
        out.push(prev);
    }
    out
}

/// Uniformly random `k`-subset of `0..n`, ascending.
pub(crate) fn random_subset<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let mut s = sample(rng, n, k).into_vec();
    s.sort_unstable();
    s
}

fn check_coeff(c: f64, name: &str) -> Result<()> {
    if !(c.abs() < 1.0) {
        return Err(SblError::InvalidArgument(format!(
            "{name} = {c} must lie in (-1, 1)"
        )));
    }
    Ok(())
}

/// `N x M` i.i.d. standard Gaussian matrix with every column scaled to unit
/// Euclidean norm.
pub fn gen_dictionary(n: usize, m: usize, seed: u64) -> Result<Dictionary> {
    if n == 0 || m == 0 {
        return Err(SblError::InvalidArgument(
            "dictionary dimensions must be positive".into(),
        ));
    }
    let mut rng = rng_from(seed);
    let mut phi = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut col in phi.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }
    Dictionary::new(phi)
}

/// Block-sparse vector: `k_active` blocks chosen uniformly, each filled with
/// an AR(1) sequence of coefficient `beta` scaled by `amplitude`.
///
/// Returns the signal and the ascending indices of the active blocks.
pub fn gen_block_signal(
    partition: &BlockPartition,
    k_active: usize,
    beta: f64,
    amplitude: f64,
    seed: u64,
) -> Result<(DVector<f64>, Vec<usize>)> {
    if k_active > partition.len() {
        return Err(SblError::InvalidArgument(format!(
            "{k_active} active blocks requested out of {}",
            partition.len()
        )));
    }
    check_coeff(beta, "beta")?;
    let mut rng = rng_from(seed);
    let support = random_subset(&mut rng, partition.len(), k_active);
    let mut x = DVector::zeros(partition.dim());
    for &b in &support {
        let r = partition.range(b);
        for (k, v) in r.clone().zip(ar1_sequence(&mut rng, r.len(), beta)) {
            x[k] = amplitude * v;
        }
    }
    Ok((x, support))
}

/// Row-sparse `M x L` matrix: `k` rows chosen uniformly, each an independent
/// AR(1) sequence of length `L` with coefficient `rho`.
pub fn gen_mmv_signal(
    m: usize,
    l: usize,
    k: usize,
    rho: f64,
    seed: u64,
) -> Result<(DMatrix<f64>, Vec<usize>)> {
    if k > m {
        return Err(SblError::InvalidArgument(format!(
            "{k} rows requested out of {m}"
        )));
    }
    check_coeff(rho, "rho")?;
    let mut rng = rng_from(seed);
    let support = random_subset(&mut rng, m, k);
    let mut x = DMatrix::zeros(m, l);
    for &r in &support {
        for (j, v) in ar1_sequence(&mut rng, l, rho).into_iter().enumerate() {
            x[(r, j)] = v;
        }
    }
    Ok((x, support))
}

/// Rows affected by a support event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowSet {
    /// These exact row indices.
    Rows(Vec<usize>),
    /// This many rows drawn uniformly at generation time: additions from the
    /// currently inactive rows, removals from the currently active ones.
    Random(usize),
}

impl RowSet {
    fn explicit(&self) -> Option<&[usize]> {
        match self {
            RowSet::Rows(r) => Some(r),
            RowSet::Random(_) => None,
        }
    }

    fn count(&self) -> usize {
        match self {
            RowSet::Rows(r) => r.len(),
            RowSet::Random(k) => *k,
        }
    }
}

/// A support change taking effect at column `start` (0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TvEvent {
    pub start: usize,
    pub added: RowSet,
    pub removed: RowSet,
}

/// Piecewise-stationary support schedule for a time-varying sparse signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TvSignalSpec {
    pub m: usize,
    pub t: usize,
    /// Rows active from column 0.
    pub initial: RowSet,
    /// Support changes in strictly increasing column order, all in `1..t`.
    pub events: Vec<TvEvent>,
    /// Each AR(1) segment draws its coefficient uniformly from this range.
    pub ar_coeff_range: (f64, f64),
    /// Longest AR(1) segment; longer activity runs are split into fresh
    /// segments of at most this many columns.
    pub max_duration: usize,
}

impl Default for TvSignalSpec {
    /// 256 rows, 50 columns: 15 rows active from the start, 10 more from
    /// column 15, and 5 of the active rows switched off from column 25.
    fn default() -> Self {
        Self {
            m: 256,
            t: 50,
            initial: RowSet::Random(15),
            events: vec![
                TvEvent {
                    start: 15,
                    added: RowSet::Random(10),
                    removed: RowSet::Rows(vec![]),
                },
                TvEvent {
                    start: 25,
                    added: RowSet::Rows(vec![]),
                    removed: RowSet::Random(5),
                },
            ],
            ar_coeff_range: (0.7, 0.99),
            max_duration: 20,
        }
    }
}

impl TvSignalSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SblError::InvalidSpec(msg));
        if self.m == 0 || self.t == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.max_duration == 0 {
            return bad("max_duration must be positive".into());
        }
        let (lo, hi) = self.ar_coeff_range;
        if !(lo <= hi) || !(lo > -1.0) || !(hi < 1.0) {
            return bad(format!(
                "AR coefficient range [{lo}, {hi}] must lie inside (-1, 1)"
            ));
        }
        let mut prev = 0;
        for ev in &self.events {
            if ev.start <= prev || ev.start >= self.t {
                return bad(format!(
                    "event columns must be strictly increasing within 1..{}, got {}",
                    self.t, ev.start
                ));
            }
            prev = ev.start;
            if let (Some(a), Some(r)) = (ev.added.explicit(), ev.removed.explicit()) {
                if a.iter().any(|x| r.contains(x)) {
                    return bad(format!(
                        "event at column {} adds and removes the same row",
                        ev.start
                    ));
                }
            }
        }
        if self.initial.count() == 0 {
            return bad("initial support is empty".into());
        }
        Ok(())
    }
}

/// Signal with time-varying support and the per-column true supports.
#[derive(Debug, Clone, PartialEq)]
pub struct TvSignal {
    pub x: DMatrix<f64>,
    pub supports: Vec<Vec<usize>>,
}

fn resolve_add<R: Rng + ?Sized>(
    rng: &mut R,
    set: &RowSet,
    active: &BTreeSet<usize>,
    m: usize,
) -> Result<Vec<usize>> {
    match set {
        RowSet::Rows(rows) => {
            for &r in rows {
                if r >= m || active.contains(&r) {
                    return Err(SblError::InvalidSpec(format!(
                        "row {r} cannot be activated"
                    )));
                }
            }
            Ok(rows.clone())
        }
        RowSet::Random(k) => {
            let pool: Vec<usize> = (0..m).filter(|r| !active.contains(r)).collect();
            if *k > pool.len() {
                return Err(SblError::InvalidSpec(format!(
                    "cannot activate {k} more rows"
                )));
            }
            Ok(random_subset(rng, pool.len(), *k)
                .into_iter()
                .map(|i| pool[i])
                .collect())
        }
    }
}

fn resolve_remove<R: Rng + ?Sized>(
    rng: &mut R,
    set: &RowSet,
    active: &BTreeSet<usize>,
) -> Result<Vec<usize>> {
    match set {
        RowSet::Rows(rows) => {
            if let Some(r) = rows.iter().find(|r| !active.contains(r)) {
                return Err(SblError::InvalidSpec(format!("row {r} is not active")));
            }
            Ok(rows.clone())
        }
        RowSet::Random(k) => {
            let pool: Vec<usize> = active.iter().copied().collect();
            if *k > pool.len() {
                return Err(SblError::InvalidSpec(format!("cannot remove {k} rows")));
            }
            Ok(random_subset(rng, pool.len(), *k)
                .into_iter()
                .map(|i| pool[i])
                .collect())
        }
    }
}

/// Generate an `M x T` signal following `spec`'s support schedule.
pub fn gen_tv_signal(spec: &TvSignalSpec, seed: u64) -> Result<TvSignal> {
    spec.validate()?;
    let mut rng = rng_from(seed);
    let (m, t) = (spec.m, spec.t);

    // Activity runs per row as [start, end) column intervals.
    let mut runs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m];
    let mut since = vec![0usize; m];
    let mut active = BTreeSet::new();
    for r in resolve_add(&mut rng, &spec.initial, &active, m)? {
        active.insert(r);
    }
    for ev in &spec.events {
        let removed = resolve_remove(&mut rng, &ev.removed, &active)?;
        let added = resolve_add(&mut rng, &ev.added, &active, m)?;
        if added.iter().any(|r| removed.contains(r)) {
            return Err(SblError::InvalidSpec("row both added and removed".into()));
        }
        for r in removed {
            active.remove(&r);
            runs[r].push((since[r], ev.start));
        }
        for r in added {
            active.insert(r);
            since[r] = ev.start;
        }
        if active.is_empty() {
            return Err(SblError::InvalidSpec(format!(
                "no active rows from column {}",
                ev.start
            )));
        }
    }
    for &r in &active {
        runs[r].push((since[r], t));
    }

    let (lo, hi) = spec.ar_coeff_range;
    let mut x = DMatrix::zeros(m, t);
    let mut supports = vec![Vec::new(); t];
    for (r, row_runs) in runs.iter().enumerate() {
        for &(start, end) in row_runs {
            let mut seg = start;
            while seg < end {
                let seg_end = (seg + spec.max_duration).min(end);
                let coeff = if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..=hi)
                };
                for (c, v) in (seg..seg_end).zip(ar1_sequence(&mut rng, seg_end - seg, coeff)) {
                    x[(r, c)] = v;
                }
                seg = seg_end;
            }
            for col in &mut supports[start..end] {
                col.push(r);
            }
        }
    }
    Ok(TvSignal { x, supports })
}

/// Add i.i.d. Gaussian noise with variance `mean(clean^2) * 10^(-snr_db/10)`.
///
/// `snr_db = +inf` returns the input unchanged with zero noise variance.
pub fn add_noise(clean: &DMatrix<f64>, snr_db: f64, seed: u64) -> Result<(DMatrix<f64>, f64)> {
    if snr_db == f64::INFINITY {
        return Ok((clean.clone(), 0.0));
    }
    if !snr_db.is_finite() {
        return Err(SblError::InvalidArgument(format!(
            "SNR {snr_db} dB is not usable"
        )));
    }
    let power = clean.norm_squared() / clean.len() as f64;
    if power == 0.0 {
        return Err(SblError::InvalidArgument(
            "cannot set a finite SNR on an all-zero signal".into(),
        ));
    }
    let var = power * 10f64.powf(-snr_db / 10.0);
    let sd = var.sqrt();
    let mut rng = rng_from(seed);
    let noisy = clean.map(|v| v + sd * rng.sample::<f64, _>(StandardNormal));
    Ok((noisy, var))
}
