//! Linear measurement model `y = Phi x + v` with a block-structured Gaussian
//! prior, and the Gaussian posterior shared by every solver.
//!
//! The prior on block `i` is `N(0, gamma_i * B_i)`. All posterior quantities
//! are computed in the dual (measurement-space) form, which never inverts the
//! prior covariance and therefore treats `gamma_i = 0` blocks exactly.

use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector, DVectorView, Dyn};

use crate::error::{Result, SblError};

/// Largest admissible magnitude of the shared AR(1) coefficient.
pub const MAX_CORR_COEFF: f64 = 0.99;

/// Relative jitter added once to the diagonal when a factorization fails.
const JITTER_SCALE: f64 = 1e-12;

/// Ordered block sizes partitioning a coefficient vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(SblError::InvalidPartition("no blocks".into()));
        }
        if let Some(i) = sizes.iter().position(|&d| d == 0) {
            return Err(SblError::InvalidPartition(format!("block {i} has size 0")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &d in &sizes {
            acc += d;
            offsets.push(acc);
        }
        Ok(Self { sizes, offsets })
    }

    /// `count` blocks of identical size `size`.
    pub fn uniform(count: usize, size: usize) -> Result<Self> {
        Self::new(vec![size; count])
    }

    /// Number of blocks `g`.
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Total coefficient dimension `M`.
    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, block: usize) -> usize {
        self.sizes[block]
    }

    pub fn offset(&self, block: usize) -> usize {
        self.offsets[block]
    }

    pub fn range(&self, block: usize) -> Range<usize> {
        self.offsets[block]..self.offsets[block + 1]
    }

    /// Size shared by every block, if the partition is uniform.
    pub fn common_size(&self) -> Option<usize> {
        let d = self.sizes[0];
        self.sizes.iter().all(|&s| s == d).then_some(d)
    }

    pub(crate) fn check_dim(&self, m: usize) -> Result<()> {
        if self.dim() != m {
            return Err(SblError::DimensionMismatch(format!(
                "partition covers {} coefficients but the dictionary has {m} columns",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Known measurement matrix `Phi` (N x M).
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    matrix: DMatrix<f64>,
}

impl Dictionary {
    /// Requires `N <= M` and no all-zero column.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let (n, m) = matrix.shape();
        if n == 0 || m == 0 {
            return Err(SblError::InvalidDictionary("empty matrix".into()));
        }
        if n > m {
            return Err(SblError::InvalidDictionary(format!(
                "{n} rows exceed {m} columns"
            )));
        }
        if let Some(j) = (0..m).find(|&j| matrix.column(j).iter().all(|&v| v == 0.0)) {
            return Err(SblError::InvalidDictionary(format!(
                "column {j} is all zero"
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(SblError::InvalidDictionary("non-finite entry".into()));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Number of measurements `N`.
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// Coefficient dimension `M`.
    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// `Toeplitz([1, r, r^2, ..., r^(d-1)])`, the AR(1) correlation matrix.
pub fn ar1_toeplitz(r: f64, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| r.powi(i.abs_diff(j) as i32))
}

/// Intra-block correlation model shared by all blocks.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockCorr {
    /// Every block uses `Toeplitz([1, r, ..., r^(d_i - 1)])`.
    Ar1(f64),
    /// Every block uses this fixed matrix; all blocks must match its size.
    Shared(DMatrix<f64>),
}

/// Hyperparameters of the block prior: per-block scales and the correlation
/// model.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPrior {
    gammas: Vec<f64>,
    corr: BlockCorr,
}

impl BlockPrior {
    pub fn new(gammas: Vec<f64>, corr_coeff: f64) -> Result<Self> {
        if !(corr_coeff.abs() <= MAX_CORR_COEFF) {
            return Err(SblError::InvalidPrior(format!(
                "correlation coefficient {corr_coeff} outside [-0.99, 0.99]"
            )));
        }
        Self::validate_gammas(&gammas)?;
        Ok(Self {
            gammas,
            corr: BlockCorr::Ar1(corr_coeff),
        })
    }

    /// Prior with one fixed, symmetric positive definite correlation matrix for
    /// every block.
    pub fn with_shared_corr(gammas: Vec<f64>, corr: DMatrix<f64>) -> Result<Self> {
        Self::validate_gammas(&gammas)?;
        if !corr.is_square() || corr.nrows() == 0 {
            return Err(SblError::InvalidPrior(
                "correlation matrix must be square".into(),
            ));
        }
        if !is_symmetric(&corr) {
            return Err(SblError::InvalidPrior(
                "correlation matrix is not symmetric".into(),
            ));
        }
        if Cholesky::new(corr.clone()).is_none() {
            return Err(SblError::NotPositiveDefinite("block correlation".into()));
        }
        Ok(Self {
            gammas,
            corr: BlockCorr::Shared(corr),
        })
    }

    fn validate_gammas(gammas: &[f64]) -> Result<()> {
        if let Some(i) = gammas.iter().position(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(SblError::InvalidPrior(format!(
                "gamma[{i}] = {} must be finite and nonnegative",
                gammas[i]
            )));
        }
        Ok(())
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn corr(&self) -> &BlockCorr {
        &self.corr
    }

    /// The shared AR(1) coefficient, when the prior uses that model.
    pub fn corr_coeff(&self) -> Option<f64> {
        match self.corr {
            BlockCorr::Ar1(r) => Some(r),
            BlockCorr::Shared(_) => None,
        }
    }

    /// Correlation matrix `B_i` for a block of size `d`.
    pub fn block_corr(&self, d: usize) -> DMatrix<f64> {
        match &self.corr {
            BlockCorr::Ar1(r) => ar1_toeplitz(*r, d),
            BlockCorr::Shared(b) => b.clone(),
        }
    }

    pub(crate) fn check_partition(&self, partition: &BlockPartition) -> Result<()> {
        if self.gammas.len() != partition.len() {
            return Err(SblError::DimensionMismatch(format!(
                "prior has {} blocks, partition has {}",
                self.gammas.len(),
                partition.len()
            )));
        }
        if let BlockCorr::Shared(b) = &self.corr {
            if partition.sizes().iter().any(|&d| d != b.nrows()) {
                return Err(SblError::DimensionMismatch(format!(
                    "shared correlation is {0}x{0} but not every block has that size",
                    b.nrows()
                )));
            }
        }
        Ok(())
    }
}

/// Gaussian posterior of `x`: full mean and the diagonal blocks of the
/// covariance. Cross-block covariance is never materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    mean: DVector<f64>,
    block_covs: Vec<DMatrix<f64>>,
    partition: BlockPartition,
}

impl GaussianPosterior {
    pub fn new(
        mean: DVector<f64>,
        block_covs: Vec<DMatrix<f64>>,
        partition: BlockPartition,
    ) -> Result<Self> {
        if mean.len() != partition.dim() || block_covs.len() != partition.len() {
            return Err(SblError::DimensionMismatch(
                "posterior mean/covariances do not match the partition".into(),
            ));
        }
        for (i, c) in block_covs.iter().enumerate() {
            let d = partition.size(i);
            if c.shape() != (d, d) {
                return Err(SblError::DimensionMismatch(format!(
                    "block {i} covariance is {:?}, expected {d}x{d}",
                    c.shape()
                )));
            }
        }
        Ok(Self {
            mean,
            block_covs,
            partition,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn into_mean(self) -> DVector<f64> {
        self.mean
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn block_mean(&self, block: usize) -> DVectorView<'_, f64> {
        let r = self.partition.range(block);
        self.mean.rows(r.start, r.len())
    }

    pub fn block_cov(&self, block: usize) -> &DMatrix<f64> {
        &self.block_covs[block]
    }

    pub fn block_covs(&self) -> &[DMatrix<f64>] {
        &self.block_covs
    }

    /// `Sigma_x^i + mu_x^i (mu_x^i)^T`, the block second moment used by the EM
    /// updates.
    pub fn block_second_moment(&self, block: usize) -> DMatrix<f64> {
        let mu = self.block_mean(block);
        &self.block_covs[block] + &mu * mu.transpose()
    }

    /// Entry `(a, b)` of [`Self::block_second_moment`] without forming it.
    pub(crate) fn second_moment_at(&self, block: usize, a: usize, b: usize) -> f64 {
        let s = self.partition.range(block).start;
        self.block_covs[block][(a, b)] + self.mean[s + a] * self.mean[s + b]
    }
}

/// Block-diagonal prior covariance `Sigma_0` with blocks `gamma_i * B_i`.
pub fn build_sigma0(prior: &BlockPrior, partition: &BlockPartition) -> Result<DMatrix<f64>> {
    prior.check_partition(partition)?;
    let m = partition.dim();
    let mut sigma0 = DMatrix::zeros(m, m);
    for (i, &g) in prior.gammas().iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let r = partition.range(i);
        let block = prior.block_corr(r.len()) * g;
        sigma0
            .view_mut((r.start, r.start), (r.len(), r.len()))
            .copy_from(&block);
    }
    Ok(sigma0)
}

/// Cholesky factorization of a symmetric positive definite matrix. On failure
/// the diagonal is loaded once with `1e-12 * trace / n` and retried.
pub(crate) fn factor_spd(mut a: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let n = a.nrows();
    match Cholesky::new(a.clone()) {
        Some(c) => Ok(c),
        None => {
            let jitter = JITTER_SCALE * a.trace() / n as f64;
            if !(jitter > 0.0) || !jitter.is_finite() {
                return Err(SblError::IllConditioned(format!("{what} is singular")));
            }
            for k in 0..n {
                a[(k, k)] += jitter;
            }
            Cholesky::new(a)
                .ok_or_else(|| SblError::IllConditioned(format!("{what} could not be factorized")))
        }
    }
}

/// Inverse of a lower-triangular matrix by column-oriented forward
/// substitution; with `N x N` factors this is much cheaper than solving
/// against a wide right-hand side, which then becomes a single product.
pub(crate) fn lower_inverse(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    if (0..n).any(|k| {
        let p = l[(k, k)];
        p == 0.0 || !p.is_finite()
    }) {
        return Err(SblError::IllConditioned(
            "zero pivot in triangular factor".into(),
        ));
    }
    let ls = l.as_slice();
    let mut x = DMatrix::zeros(n, n);
    for (j, col) in x.as_mut_slice().chunks_exact_mut(n).enumerate() {
        col[j] = 1.0;
        for k in j..n {
            let xk = col[k] / ls[k * n + k];
            col[k] = xk;
            if xk != 0.0 {
                let below = &ls[k * n + k + 1..(k + 1) * n];
                for (c, &a) in col[k + 1..].iter_mut().zip(below) {
                    *c -= a * xk;
                }
            }
        }
    }
    Ok(x)
}

pub(crate) fn is_symmetric(a: &DMatrix<f64>) -> bool {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    (a - a.transpose()).amax() <= 1e-12 * scale
}

/// Make `a` exactly symmetric by averaging with its transpose.
pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

pub(crate) fn check_model(
    dict: &Dictionary,
    y: &DVector<f64>,
    lambda: f64,
    prior: &BlockPrior,
    partition: &BlockPartition,
) -> Result<()> {
    if y.len() != dict.rows() {
        return Err(SblError::DimensionMismatch(format!(
            "y has length {} but the dictionary has {} rows",
            y.len(),
            dict.rows()
        )));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(SblError::InvalidArgument(format!(
            "noise variance {lambda} must be finite and nonnegative"
        )));
    }
    partition.check_dim(dict.cols())?;
    prior.check_partition(partition)
}

/// Dual-form posterior together with the negative log-likelihood evaluated at
/// the same hyperparameters; both share one factorization of `Sigma_y`.
pub(crate) fn dual_posterior(
    dict: &Dictionary,
    y: &DVector<f64>,
    lambda: f64,
    prior: &BlockPrior,
    partition: &BlockPartition,
) -> Result<(GaussianPosterior, f64)> {
    let phi = dict.matrix();
    let n = phi.nrows();
    let active: Vec<usize> = (0..partition.len())
        .filter(|&i| prior.gammas()[i] > 0.0)
        .collect();
    let a: usize = active.iter().map(|&i| partition.size(i)).sum();

    // G = Phi_A * Sigma0_A, Phi_A = active columns of Phi.
    let mut g_mat = DMatrix::zeros(n, a);
    let mut phi_a = DMatrix::zeros(n, a);
    let mut scaled_corr = Vec::with_capacity(active.len());
    let mut col = 0;
    for &i in &active {
        let r = partition.range(i);
        let d = r.len();
        let s0 = prior.block_corr(d) * prior.gammas()[i];
        let phi_i = phi.columns(r.start, d);
        g_mat.columns_mut(col, d).copy_from(&(phi_i * &s0));
        phi_a.columns_mut(col, d).copy_from(&phi_i);
        scaled_corr.push(s0);
        col += d;
    }

    let mut sigma_y = &g_mat * phi_a.transpose();
    symmetrize(&mut sigma_y);
    for k in 0..n {
        sigma_y[(k, k)] += lambda;
    }
    let chol = factor_spd(sigma_y, "lambda*I + Phi*Sigma0*Phi^T")?;
    let l = chol.l_dirty();

    // V = L^-1 G and u = L^-1 y give mu_A = V^T u and Sigma_x^i = S0_i - V_i^T V_i.
    let l_inv = lower_inverse(&l)?;
    let v = &l_inv * g_mat;
    let u = &l_inv * y;

    let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let nll = log_det + u.norm_squared();

    let mut mean = DVector::zeros(partition.dim());
    let mut block_covs: Vec<DMatrix<f64>> = partition
        .sizes()
        .iter()
        .map(|&d| DMatrix::zeros(d, d))
        .collect();
    let mut col = 0;
    for (k, &i) in active.iter().enumerate() {
        let r = partition.range(i);
        let d = r.len();
        let v_i = v.columns(col, d);
        mean.rows_mut(r.start, d).copy_from(&(v_i.transpose() * &u));
        let mut cov = &scaled_corr[k] - v_i.transpose() * v_i;
        symmetrize(&mut cov);
        block_covs[i] = cov;
        col += d;
    }
    let post = GaussianPosterior {
        mean,
        block_covs,
        partition: partition.clone(),
    };
    Ok((post, nll))
}

/// Posterior `N(mu_x, Sigma_x)` of the block-sparse coefficients given `y`.
///
/// `mu_x = Sigma0 Phi^T (lambda I + Phi Sigma0 Phi^T)^-1 y`, and the diagonal
/// blocks of `Sigma_x = Sigma0 - Sigma0 Phi^T (lambda I + Phi Sigma0 Phi^T)^-1 Phi Sigma0`.
/// `lambda = 0` is accepted when `Phi Sigma0 Phi^T` is itself positive definite.
pub fn posterior(
    dict: &Dictionary,
    y: &DVector<f64>,
    lambda: f64,
    prior: &BlockPrior,
    partition: &BlockPartition,
) -> Result<GaussianPosterior> {
    check_model(dict, y, lambda, prior, partition)?;
    if prior.gammas().iter().all(|&g| g == 0.0) {
        return Ok(zero_posterior(partition));
    }
    dual_posterior(dict, y, lambda, prior, partition).map(|(p, _)| p)
}

fn zero_posterior(partition: &BlockPartition) -> GaussianPosterior {
    GaussianPosterior {
        mean: DVector::zeros(partition.dim()),
        block_covs: partition
            .sizes()
            .iter()
            .map(|&d| DMatrix::zeros(d, d))
            .collect(),
        partition: partition.clone(),
    }
}

/// Full `M x M` dual-form posterior covariance. Solvers never need this; it is
/// provided for diagnostics and cross-checks.
pub fn posterior_full_cov(
    dict: &Dictionary,
    lambda: f64,
    prior: &BlockPrior,
    partition: &BlockPartition,
) -> Result<DMatrix<f64>> {
    let y = DVector::zeros(dict.rows());
    check_model(dict, &y, lambda, prior, partition)?;
    let sigma0 = build_sigma0(prior, partition)?;
    let g = dict.matrix() * &sigma0;
    let mut sigma_y = &g * dict.matrix().transpose();
    symmetrize(&mut sigma_y);
    for k in 0..sigma_y.nrows() {
        sigma_y[(k, k)] += lambda;
    }
    let chol = factor_spd(sigma_y, "lambda*I + Phi*Sigma0*Phi^T")?;
    let mut v = g;
    chol.l_dirty().solve_lower_triangular_mut(&mut v);
    let mut cov = sigma0 - v.transpose() * v;
    symmetrize(&mut cov);
    Ok(cov)
}

/// `log|Sigma_y| + y^T Sigma_y^-1 y` with `Sigma_y = lambda I + Phi Sigma0 Phi^T`.
pub fn neg_log_likelihood(
    dict: &Dictionary,
    y: &DVector<f64>,
    lambda: f64,
    prior: &BlockPrior,
    partition: &BlockPartition,
) -> Result<f64> {
    check_model(dict, y, lambda, prior, partition)?;
    let sigma0 = build_sigma0(prior, partition)?;
    let phi = dict.matrix();
    let mut sigma_y = phi * sigma0 * phi.transpose();
    symmetrize(&mut sigma_y);
    for k in 0..sigma_y.nrows() {
        sigma_y[(k, k)] += lambda;
    }
    // No jitter here: the cost is undefined for a singular Sigma_y.
    let chol =
        Cholesky::new(sigma_y).ok_or_else(|| SblError::NotPositiveDefinite("Sigma_y".into()))?;
    let l = chol.l_dirty();
    let mut u = y.clone();
    l.solve_lower_triangular_mut(&mut u);
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(log_det + u.norm_squared())
}
