//! Information-theoretic limits of support recovery for row-sparse signals.
//!
//! For a fixed `K x L` nonzero-value matrix `W`, dictionary entries of
//! variance `sigma_phi^2` and noise variance `sigma_v^2`,
//!
//! ```text
//! c(W) = min over nonempty T of  1/(2|T|) * ln det(I + (sigma_phi^2/sigma_v^2) W_T^T W_T)
//! ```
//!
//! and roughly `ln M / c(W)` measurements per vector are both necessary and
//! sufficient for asymptotically reliable support recovery. At desk scale the
//! claim is checked empirically with an exhaustive least-squares support
//! decoder.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::datagen::{derive_seed, random_subset, rng_from};
use crate::error::{Result, SblError};

/// Largest `K` handled by exhaustive subset enumeration.
pub const MAX_ENUM_K: usize = 20;
/// Largest number of candidate supports the ML decoder will score.
pub const MAX_DECODE_CANDIDATES: u128 = 2_000_000;
/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Nonzero values of the active rows (`K x L`, no zero entry).
#[derive(Debug, Clone, PartialEq)]
pub struct SignalValueMatrix(DMatrix<f64>);

impl SignalValueMatrix {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() == 0 || w.ncols() == 0 {
            return Err(SblError::InvalidArgument("W must be nonempty".into()));
        }
        if w.iter().any(|&v| v == 0.0 || !v.is_finite()) {
            return Err(SblError::InvalidArgument(
                "W must have finite nonzero entries".into(),
            ));
        }
        Ok(Self(w))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.nrows()
    }

    pub fn l(&self) -> usize {
        self.0.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitsReport {
    pub c_value: f64,
    /// Minimizing row subset, ascending.
    pub argmin_subset: Vec<usize>,
    pub sigma_phi_sq: f64,
    pub sigma_v_sq: f64,
}

impl LimitsReport {
    /// `ln M / c(W)`, the measurement count the limit predicts for `M` columns.
    pub fn threshold(&self, m: usize) -> f64 {
        (m as f64).ln() / self.c_value
    }
}

/// `1/(2|T|) ln det(I + s W_T^T W_T)`, evaluated through the smaller of the
/// two Gram matrices (Sylvester's determinant identity).
fn subset_term(w: &DMatrix<f64>, rows: &[usize], snr: f64) -> f64 {
    let wt = w.select_rows(rows);
    let gram = if wt.nrows() <= wt.ncols() {
        &wt * wt.transpose()
    } else {
        wt.transpose() * &wt
    };
    let n = gram.nrows();
    let a = DMatrix::identity(n, n) + gram * snr;
    let chol = a.cholesky().expect("I + sPSD is positive definite");
    let log_det = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>();
    log_det / (2.0 * rows.len() as f64)
}

fn mask_rows(mask: u32, k: usize) -> Vec<usize> {
    (0..k).filter(|&i| mask & (1 << i) != 0).collect()
}

/// `c(W)` by exhaustive enumeration of the `2^K - 1` nonempty row subsets.
///
/// Ties (relative 1e-12) go to the smaller subset, then to the
/// lexicographically smaller one.
pub fn c_of_w(w: &SignalValueMatrix, sigma_phi_sq: f64, sigma_v_sq: f64) -> Result<LimitsReport> {
    if !(sigma_phi_sq > 0.0) || !(sigma_v_sq > 0.0) {
        return Err(SblError::InvalidArgument(
            "variances must be positive".into(),
        ));
    }
    let k = w.k();
    if k > MAX_ENUM_K {
        return Err(SblError::SearchTooLarge {
            count: (1u128 << k) - 1,
            limit: (1u128 << MAX_ENUM_K) - 1,
        });
    }
    let snr = sigma_phi_sq / sigma_v_sq;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 1u32..(1u32 << k) {
        let rows = mask_rows(mask, k);
        let v = subset_term(w.matrix(), &rows, snr);
        let better = match &best {
            None => true,
            Some((bv, brows)) => {
                let tol = 1e-12 * bv.abs();
                v < bv - tol
                    || ((v - bv).abs() <= tol && (rows.len(), &rows) < (brows.len(), brows))
            }
        };
        if better {
            best = Some((v, rows));
        }
    }
    let (c_value, argmin_subset) = best.expect("K >= 1");
    Ok(LimitsReport {
        c_value,
        argmin_subset,
        sigma_phi_sq,
        sigma_v_sq,
    })
}

/// `ceil(ln M / (c(W) + epsilon))`; pass a negative `epsilon` for the other
/// side of the threshold.
pub fn threshold_measurements(m: usize, report: &LimitsReport, epsilon: f64) -> Result<usize> {
    if m <= report.argmin_subset.len().max(1) {
        return Err(SblError::InvalidArgument(format!("M = {m} is too small")));
    }
    if !(report.c_value > 0.0) || !(epsilon.abs() < report.c_value) {
        return Err(SblError::InvalidArgument(format!(
            "need c(W) > 0 and |epsilon| < c(W), got c = {}, epsilon = {epsilon}",
            report.c_value
        )));
    }
    Ok(((m as f64).ln() / (report.c_value + epsilon)).ceil() as usize)
}

/// Outcome of the exhaustive support search.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportDecision {
    /// Minimizing support, ascending.
    pub support: Vec<usize>,
    /// Total residual `sum_l ||Y_l - P_S Y_l||^2` of the chosen support.
    pub residual: f64,
    /// Candidates skipped because their columns were linearly dependent.
    pub skipped: usize,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Advance `idx` to the next `k`-combination of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in (i + 1)..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Residual energy of `y` after projecting out the span of `phi`'s columns in
/// `support`, or `None` when those columns are numerically dependent.
fn projection_residual(phi: &DMatrix<f64>, y: &DMatrix<f64>, support: &[usize]) -> Option<f64> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(support.len());
    for &c in support {
        let col = phi.column(c);
        let scale = col.norm();
        let mut q = col.into_owned();
        // Two passes of Gram-Schmidt keep the basis orthogonal to rounding.
        for _ in 0..2 {
            for b in &basis {
                let p = b.dot(&q);
                q.axpy(-p, b, 1.0);
            }
        }
        let norm = q.norm();
        if !(norm > 1e-10 * scale) {
            return None;
        }
        basis.push(q / norm);
    }
    let mut r = y.clone();
    for b in &basis {
        let coeffs = b.transpose() * &r;
        r -= b * coeffs;
    }
    Some(r.norm_squared())
}

/// Exhaustive least-squares (Gaussian ML) support decoder: the size-`k`
/// support minimizing `sum_l ||Y_l - P_S Y_l||^2`. Ties (relative 1e-12 of
/// `||Y||^2`) go to the lexicographically first support.
pub fn ml_support_decode(
    phi: &DMatrix<f64>,
    y: &DMatrix<f64>,
    k: usize,
) -> Result<SupportDecision> {
    let (n, m) = phi.shape();
    if y.nrows() != n {
        return Err(SblError::DimensionMismatch(format!(
            "Y has {} rows, dictionary has {n}",
            y.nrows()
        )));
    }
    if k == 0 || k > m {
        return Err(SblError::InvalidArgument(format!(
            "support size {k} out of range 1..={m}"
        )));
    }
    let count = binomial(m, k);
    if count > MAX_DECODE_CANDIDATES {
        return Err(SblError::SearchTooLarge {
            count,
            limit: MAX_DECODE_CANDIDATES,
        });
    }
    let tie = 1e-12 * y.norm_squared();
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut skipped = 0;
    loop {
        match projection_residual(phi, y, &idx) {
            Some(r) => {
                if best.as_ref().map_or(true, |(b, _)| r < b - tie) {
                    best = Some((r, idx.clone()));
                }
            }
            None => skipped += 1,
        }
        if !next_combination(&mut idx, m) {
            break;
        }
    }
    let (residual, support) = best.ok_or_else(|| {
        SblError::IllConditioned(format!(
            "all {count} candidate supports have linearly dependent columns"
        ))
    })?;
    Ok(SupportDecision {
        support,
        residual,
        skipped,
    })
}

/// Monte-Carlo support-error probability with a Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRate {
    pub errors: usize,
    pub trials: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Wilson score interval for `successes` out of `trials` at 95% confidence.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

/// Whether the decoder misses the true support on one random draw.
fn support_error_trial(
    w: &DMatrix<f64>,
    m: usize,
    n: usize,
    sigma_phi: f64,
    sigma_v: f64,
    seed: u64,
) -> Result<bool> {
    let (k, l) = w.shape();
    let mut rng = rng_from(seed);
    let support = random_subset(&mut rng, m, k);
    let phi = DMatrix::from_fn(n, m, |_, _| {
        sigma_phi * rng.sample::<f64, _>(StandardNormal)
    });
    let noise = DMatrix::from_fn(n, l, |_, _| sigma_v * rng.sample::<f64, _>(StandardNormal));
    let y = phi.select_columns(&support) * w + noise;
    match ml_support_decode(&phi, &y, k) {
        Ok(d) => Ok(d.support != support),
        // No full-rank candidate (e.g. N < K): the map cannot name the support.
        Err(SblError::IllConditioned(_)) => Ok(true),
        Err(e) => Err(e),
    }
}

/// Probability that the ML decoder misses the support, averaged over uniform
/// supports, i.i.d. `N(0, sigma_phi^2)` dictionaries and `N(0, sigma_v^2)`
/// noise. Trial `t` uses its own generator seeded from `(seed, t)`, so the
/// estimate does not depend on how trials are scheduled across threads.
pub fn mc_error_rate(
    w: &SignalValueMatrix,
    m: usize,
    n: usize,
    sigma_phi_sq: f64,
    sigma_v_sq: f64,
    trials: usize,
    seed: u64,
) -> Result<ErrorRate> {
    if !(sigma_phi_sq > 0.0) || !(sigma_v_sq >= 0.0) {
        return Err(SblError::InvalidArgument("invalid variances".into()));
    }
    if n == 0 || m < w.k() {
        return Err(SblError::InvalidArgument(format!(
            "need N >= 1 and M >= K, got N = {n}, M = {m}"
        )));
    }
    let count = binomial(m, w.k());
    if count > MAX_DECODE_CANDIDATES {
        return Err(SblError::SearchTooLarge {
            count,
            limit: MAX_DECODE_CANDIDATES,
        });
    }
    let (sp, sv) = (sigma_phi_sq.sqrt(), sigma_v_sq.sqrt());
    let outcomes: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|t| support_error_trial(w.matrix(), m, n, sp, sv, derive_seed(seed, &[t as u64])))
        .collect::<Result<_>>()?;
    let errors = outcomes.iter().filter(|&&e| e).count();
    let (ci_low, ci_high) = wilson_interval(errors, trials);
    Ok(ErrorRate {
        errors,
        trials,
        rate: if trials == 0 {
            0.0
        } else {
            errors as f64 / trials as f64
        },
        ci_low,
        ci_high,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn w_from(rows: usize, cols: usize, vals: &[f64]) -> SignalValueMatrix {
        SignalValueMatrix::new(DMatrix::from_row_slice(rows, cols, vals)).unwrap()
    }

    #[test]
    fn rejects_zero_entries() {
        assert!(SignalValueMatrix::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).is_err());
    }

    #[test]
    fn single_entry_closed_form() {
        let w = w_from(1, 1, &[1.7]);
        let r = c_of_w(&w, 2.0, 0.5).unwrap();
        let expected = 0.5 * (1.0f64 + 4.0 * 1.7 * 1.7).ln();
        assert!((r.c_value - expected).abs() < 1e-14);
        assert_eq!(r.argmin_subset, vec![0]);
    }

    #[test]
    fn matches_dense_subset_enumeration() {
        let w = w_from(3, 2, &[1.0, -0.5, 0.3, 2.0, -1.2, 0.7]);
        let s = 3.0;
        // Dense oracle: determinant of I_L + s W_T^T W_T via LU for each subset.
        let subsets: [&[usize]; 7] = [&[0], &[1], &[2], &[0, 1], &[0, 2], &[1, 2], &[0, 1, 2]];
        let mut best = f64::INFINITY;
        let mut arg: &[usize] = &[];
        for t in subsets {
            let wt = w.matrix().select_rows(t);
            let a = DMatrix::identity(2, 2) + wt.transpose() * &wt * s;
            let v = a.determinant().ln() / (2.0 * t.len() as f64);
            if v < best {
                best = v;
                arg = t;
            }
        }
        let r = c_of_w(&w, s, 1.0).unwrap();
        assert!((r.c_value - best).abs() < 1e-12);
        assert_eq!(r.argmin_subset, arg.to_vec());
    }

    #[test]
    fn identical_columns_reduce_noise_by_l() {
        let wv = [0.8, -1.5, 2.2];
        let l = 4;
        let w = SignalValueMatrix::new(DMatrix::from_fn(3, l, |i, _| wv[i])).unwrap();
        let s = 1.5;
        let r = c_of_w(&w, s, 1.0).unwrap();
        let t = &r.argmin_subset;
        let norm_sq: f64 = t.iter().map(|&i| wv[i] * wv[i]).sum();
        let closed = (1.0 + l as f64 * s * norm_sq).ln() / (2.0 * t.len() as f64);
        assert!((r.c_value - closed).abs() < 1e-12);
    }

    #[test]
    fn k_limit() {
        let w = SignalValueMatrix::new(DMatrix::from_element(21, 1, 1.0)).unwrap();
        assert!(matches!(
            c_of_w(&w, 1.0, 1.0),
            Err(SblError::SearchTooLarge { .. })
        ));
    }

    #[test]
    fn threshold_arithmetic() {
        let rep = LimitsReport {
            c_value: 1.0,
            argmin_subset: vec![0],
            sigma_phi_sq: 1.0,
            sigma_v_sq: 1.0,
        };
        assert_eq!(threshold_measurements(22026, &rep, 0.0).unwrap(), 10);
        let doubled = LimitsReport {
            c_value: 2.0,
            ..rep.clone()
        };
        assert_eq!(threshold_measurements(22026, &doubled, 0.0).unwrap(), 5);
        assert!(threshold_measurements(22026, &rep, 1.0).is_err());
        assert_eq!(threshold_measurements(22026, &rep, 0.25).unwrap(), 8);

        let w = w_from(3, 2, &[1.0, -0.5, 0.3, 2.0, -1.2, 0.7]);
        let r = c_of_w(&w, 3.0, 1.0).unwrap();
        let n = threshold_measurements(64, &r, 0.0).unwrap();
        assert_eq!(n, (64f64.ln() / r.c_value).ceil() as usize);
        assert!((r.threshold(64) - 64f64.ln() / r.c_value).abs() < 1e-15);
    }

    #[test]
    fn combinations_are_lexicographic() {
        let mut idx = vec![0, 1];
        let mut all = vec![idx.clone()];
        while next_combination(&mut idx, 4) {
            all.push(idx.clone());
        }
        assert_eq!(
            all,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(binomial(32, 2), 496);
        assert_eq!(binomial(5, 7), 0);
    }

    #[test]
    fn decode_exact_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phi = DMatrix::from_fn(6, 12, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 1.5, -1.0, 0.8]);
        let support = vec![2, 7, 10];
        let y = phi.select_columns(&support) * &w;
        let d = ml_support_decode(&phi, &y, 3).unwrap();
        assert_eq!(d.support, support);
        assert!(d.residual < 1e-20);
        assert_eq!(d.skipped, 0);
    }

    #[test]
    fn decode_zero_measurements_picks_first_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let phi = DMatrix::from_fn(4, 7, |_, _| rng.sample::<f64, _>(StandardNormal));
        let d = ml_support_decode(&phi, &DMatrix::zeros(4, 2), 2).unwrap();
        assert_eq!(d.support, vec![0, 1]);
    }

    #[test]
    fn decode_matches_nested_loop_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let phi = DMatrix::from_fn(6, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = DMatrix::from_fn(2, 1, |_, _| 1.0 + rng.random::<f64>());
            let sup = random_subset(&mut rng, 8, 2);
            let y = phi.select_columns(&sup) * x
                + DMatrix::from_fn(6, 1, |_, _| 0.05 * rng.sample::<f64, _>(StandardNormal));
            // Second implementation: normal equations on every pair.
            let mut best = (f64::INFINITY, (0, 0));
            for a in 0..8 {
                for b in (a + 1)..8 {
                    let ps = phi.select_columns(&[a, b]);
                    let coef = (ps.transpose() * &ps).try_inverse().unwrap() * ps.transpose() * &y;
                    let r = (&y - &ps * coef).norm_squared();
                    if r < best.0 {
                        best = (r, (a, b));
                    }
                }
            }
            let d = ml_support_decode(&phi, &y, 2).unwrap();
            assert_eq!(d.support, vec![best.1 .0, best.1 .1]);
            assert!((d.residual - best.0).abs() <= 1e-9 * best.0.max(1e-12));
        }
    }

    #[test]
    fn decode_skips_dependent_columns() {
        let phi = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 1.0, 2.0, 1.0]);
        let y = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let d = ml_support_decode(&phi, &y, 2).unwrap();
        assert_eq!(d.skipped, 1);
        assert_eq!(d.support, vec![0, 2]);
        let tall = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        assert!(ml_support_decode(&tall, &DMatrix::zeros(1, 1), 2).is_err());
    }

    #[test]
    fn decode_enumeration_bound() {
        let phi = DMatrix::from_element(3, 200, 1.0);
        assert!(matches!(
            ml_support_decode(&phi, &DMatrix::zeros(3, 1), 4),
            Err(SblError::SearchTooLarge { .. })
        ));
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.03 && hi < 0.04);
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
    }

    #[test]
    fn mc_noiseless_and_underdetermined() {
        let w = w_from(2, 1, &[1.0, -1.3]);
        let clean = mc_error_rate(&w, 16, 4, 1.0, 1e-12, 100, 1).unwrap();
        assert_eq!(clean.errors, 0);
        let under = mc_error_rate(&w, 16, 1, 1.0, 1e-12, 100, 1).unwrap();
        assert!(under.rate > 0.9, "{}", under.rate);
    }

    #[test]
    fn mc_is_deterministic() {
        let w = w_from(2, 2, &[1.0, 0.5, -0.7, 1.2]);
        let a = mc_error_rate(&w, 12, 3, 1.0, 0.5, 64, 9).unwrap();
        let b = mc_error_rate(&w, 12, 3, 1.0, 0.5, 64, 9).unwrap();
        assert_eq!(a, b);
    }
}
