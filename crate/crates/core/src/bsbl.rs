//! BSBL-EM: block sparse Bayesian learning with expectation-maximization
//! updates for the block scales `gamma_i`, the noise variance `lambda` and a
//! shared AR(1) intra-block correlation.
//!
//! Each iteration computes the posterior under the current hyperparameters,
//! then applies the gamma, lambda and correlation updates. Blocks whose scale
//! drops below `prune_gamma * max(gamma)` are pinned to zero for the rest of
//! the run.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Result, SblError};
use crate::linmodel::{
    check_model, dual_posterior, BlockCorr, BlockPartition, BlockPrior, Dictionary,
    GaussianPosterior, MAX_CORR_COEFF,
};

/// Initial learned noise variance, relative to `mean(y^2)`.
pub const LAMBDA_INIT_SCALE: f64 = 1e-3;
/// Fixed noise variance used in noiseless mode, relative to `mean(y^2)`.
pub const NOISELESS_LAMBDA_SCALE: f64 = 1e-10;

/// Normalizer of the lambda update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LambdaDenominator {
    /// Coefficient dimension `M`.
    #[default]
    M,
    /// Measurement count `N`.
    N,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsblOptions {
    /// Learn the shared AR(1) coefficient; when off every `B_i = I` (or
    /// `fixed_corr` when supplied).
    pub learn_corr: bool,
    pub learn_lambda: bool,
    /// Starting noise variance when learning; defaults to `1e-3 * mean(y^2)`.
    pub lambda_init: Option<f64>,
    /// Fixed noise variance; overrides `learn_lambda`.
    pub lambda_fixed: Option<f64>,
    pub max_iters: usize,
    /// Stop once `max_i |delta gamma_i| / max_i gamma_i <= tol`.
    pub tol: f64,
    /// Relative pruning threshold on gamma.
    pub prune_gamma: f64,
    pub lambda_denominator: LambdaDenominator,
    /// Fixed (never learned) correlation matrix shared by every block.
    pub fixed_corr: Option<DMatrix<f64>>,
}

impl Default for BsblOptions {
    fn default() -> Self {
        Self {
            learn_corr: true,
            learn_lambda: true,
            lambda_init: None,
            lambda_fixed: None,
            max_iters: 500,
            tol: 1e-6,
            prune_gamma: 1e-8,
            lambda_denominator: LambdaDenominator::M,
            fixed_corr: None,
        }
    }
}

impl BsblOptions {
    /// Options for noiseless data: lambda is pinned to `1e-10 * mean(y^2)`.
    pub fn noiseless() -> Self {
        Self {
            learn_lambda: false,
            ..Self::default()
        }
    }

    pub fn with_learn_corr(mut self, on: bool) -> Self {
        self.learn_corr = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SblError::InvalidOptions(msg));
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.prune_gamma) {
            return bad(format!("prune_gamma {} not in [0, 1)", self.prune_gamma));
        }
        for (name, v) in [
            ("lambda_init", self.lambda_init),
            ("lambda_fixed", self.lambda_fixed),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if self.learn_corr && self.fixed_corr.is_some() {
            return bad("learn_corr and fixed_corr are mutually exclusive".into());
        }
        Ok(())
    }
}

/// Output of a BSBL-EM run.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub x_hat: DVector<f64>,
    pub gammas: Vec<f64>,
    /// Final shared AR(1) coefficient; `None` when a fixed matrix was used.
    pub corr_coeff: Option<f64>,
    pub lambda: f64,
    /// Negative log-likelihood at the hyperparameters of every iteration.
    pub cost_trajectory: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
}

/// A measurement model able to produce the block posterior for given
/// hyperparameters. Lets structured models share the EM driver.
pub(crate) trait BlockModel {
    fn partition(&self) -> &BlockPartition;
    fn measurement_len(&self) -> usize;
    fn y_energy(&self) -> f64;
    /// Posterior and negative log-likelihood at (prior, lambda).
    fn posterior(&self, prior: &BlockPrior, lambda: f64) -> Result<(GaussianPosterior, f64)>;
    /// `||y - Phi mu||^2`.
    fn residual_sq(&self, mean: &DVector<f64>) -> f64;
    /// `Tr(Sigma_x^i (Phi^i)^T Phi^i)`.
    fn gram_trace(&self, block: usize, cov: &DMatrix<f64>) -> f64;
}

pub(crate) struct DenseModel<'a> {
    dict: &'a Dictionary,
    y: &'a DVector<f64>,
    partition: &'a BlockPartition,
    grams: Vec<DMatrix<f64>>,
}

impl<'a> DenseModel<'a> {
    pub(crate) fn new(
        dict: &'a Dictionary,
        y: &'a DVector<f64>,
        partition: &'a BlockPartition,
    ) -> Self {
        let phi = dict.matrix();
        let grams = (0..partition.len())
            .map(|i| {
                let r = partition.range(i);
                let cols = phi.columns(r.start, r.len());
                cols.transpose() * cols
            })
            .collect();
        Self {
            dict,
            y,
            partition,
            grams,
        }
    }
}

impl BlockModel for DenseModel<'_> {
    fn partition(&self) -> &BlockPartition {
        self.partition
    }

    fn measurement_len(&self) -> usize {
        self.y.len()
    }

    fn y_energy(&self) -> f64 {
        self.y.norm_squared() / self.y.len() as f64
    }

    fn posterior(&self, prior: &BlockPrior, lambda: f64) -> Result<(GaussianPosterior, f64)> {
        dual_posterior(self.dict, self.y, lambda, prior, self.partition)
    }

    fn residual_sq(&self, mean: &DVector<f64>) -> f64 {
        (self.y - self.dict.matrix() * mean).norm_squared()
    }

    fn gram_trace(&self, block: usize, cov: &DMatrix<f64>) -> f64 {
        cov.dot(&self.grams[block])
    }
}

/// Inverse correlation matrices keyed by block size.
/// `B^-1` for each distinct block size, indexed by size.
fn inverse_corrs(
    prior: &BlockPrior,
    partition: &BlockPartition,
) -> Result<Vec<Option<DMatrix<f64>>>> {
    let mut out = vec![None; partition.sizes().iter().copied().max().unwrap_or(0) + 1];
    for &d in partition.sizes() {
        if out[d].is_some() {
            continue;
        }
        let chol = Cholesky::new(prior.block_corr(d))
            .ok_or_else(|| SblError::NotPositiveDefinite(format!("B for block size {d}")))?;
        out[d] = Some(chol.inverse());
    }
    Ok(out)
}

/// `gamma_i <- Tr[B_i^-1 (Sigma_x^i + mu_x^i mu_x^i^T)] / d_i`.
///
/// Blocks whose current scale is zero stay at zero.
pub fn update_gamma(
    posterior: &GaussianPosterior,
    prior: &BlockPrior,
    partition: &BlockPartition,
) -> Result<Vec<f64>> {
    prior.check_partition(partition)?;
    if posterior.partition() != partition {
        return Err(SblError::DimensionMismatch(
            "posterior was computed for a different partition".into(),
        ));
    }
    let inv = inverse_corrs(prior, partition)?;
    Ok((0..partition.len())
        .map(|i| {
            if prior.gammas()[i] == 0.0 {
                return 0.0;
            }
            let d = partition.size(i);
            let b_inv = inv[d].as_ref().expect("every block size has an inverse");
            // Both factors are symmetric, so the trace is an elementwise dot.
            let mut tr = 0.0;
            for col in 0..d {
                for row in 0..d {
                    tr += b_inv[(row, col)] * posterior.second_moment_at(i, row, col);
                }
            }
            (tr / d as f64).max(0.0)
        })
        .collect())
}

fn lambda_from_parts(residual: f64, trace: f64, m: usize, n: usize, den: LambdaDenominator) -> f64 {
    let denom = match den {
        LambdaDenominator::M => m,
        LambdaDenominator::N => n,
    };
    (residual + trace) / denom as f64
}

/// `lambda <- (||y - Phi mu||^2 + sum_i Tr(Sigma_x^i Phi_i^T Phi_i)) / M` (or `/ N`).
pub fn update_lambda(
    dict: &Dictionary,
    y: &DVector<f64>,
    posterior: &GaussianPosterior,
    partition: &BlockPartition,
    denominator: LambdaDenominator,
) -> Result<f64> {
    if y.len() != dict.rows() {
        return Err(SblError::DimensionMismatch(format!(
            "y has length {}, dictionary has {} rows",
            y.len(),
            dict.rows()
        )));
    }
    partition.check_dim(dict.cols())?;
    if posterior.partition() != partition {
        return Err(SblError::DimensionMismatch(
            "posterior was computed for a different partition".into(),
        ));
    }
    let model = DenseModel::new(dict, y, partition);
    Ok(model_lambda(&model, posterior, denominator))
}

fn model_lambda<E: BlockModel>(model: &E, post: &GaussianPosterior, den: LambdaDenominator) -> f64 {
    let partition = model.partition();
    let residual = model.residual_sq(post.mean());
    let trace: f64 = (0..partition.len())
        .map(|i| model.gram_trace(i, post.block_cov(i)))
        .sum();
    lambda_from_parts(
        residual,
        trace,
        partition.dim(),
        model.measurement_len(),
        den,
    )
}

/// Shared AR(1) coefficient from the normalized block second moments.
///
/// For each block with `gammas[i] > 0` and size at least 2,
/// `Bbar_i = (Sigma_x^i + mu mu^T) / gamma_i`; the main-diagonal and
/// first-subdiagonal averages are summed over blocks and their ratio, clipped
/// to magnitude 0.99, is returned. `None` means no block qualified and the
/// caller keeps the previous coefficient.
pub fn update_corr(
    posterior: &GaussianPosterior,
    gammas: &[f64],
    partition: &BlockPartition,
) -> Option<f64> {
    let mut m0 = 0.0;
    let mut m1 = 0.0;
    let mut used = 0usize;
    for (i, &g) in gammas.iter().enumerate().take(partition.len()) {
        let d = partition.size(i);
        if !(g > 0.0) || d < 2 {
            continue;
        }
        let at = |a, b| posterior.second_moment_at(i, a, b) / g;
        m0 += (0..d).map(|k| at(k, k)).sum::<f64>() / d as f64;
        m1 += (1..d).map(|k| at(k, k - 1)).sum::<f64>() / (d - 1) as f64;
        used += 1;
    }
    if used == 0 || m0 == 0.0 {
        return None;
    }
    let ratio = m1 / m0;
    if !ratio.is_finite() {
        return None;
    }
    Some(ratio.signum() * ratio.abs().min(MAX_CORR_COEFF))
}

/// Recover a block-sparse `x` from `y = Phi x + v` with BSBL-EM.
pub fn bsbl_em(
    dict: &Dictionary,
    y: &DVector<f64>,
    partition: &BlockPartition,
    options: &BsblOptions,
) -> Result<RecoveryResult> {
    if dict.rows() >= dict.cols() {
        return Err(SblError::InvalidDictionary(format!(
            "solver needs an underdetermined system, got {}x{}",
            dict.rows(),
            dict.cols()
        )));
    }
    let probe = BlockPrior::new(vec![1.0; partition.len()], 0.0)?;
    check_model(dict, y, 0.0, &probe, partition)?;
    if let Some(b) = &options.fixed_corr {
        BlockPrior::with_shared_corr(vec![1.0; partition.len()], b.clone())?
            .check_partition(partition)?;
    }
    run_em(&DenseModel::new(dict, y, partition), options)
}

pub(crate) fn run_em<E: BlockModel>(model: &E, opts: &BsblOptions) -> Result<RecoveryResult> {
    opts.validate()?;
    let partition = model.partition();
    let g = partition.len();
    let corr = match &opts.fixed_corr {
        Some(b) => BlockCorr::Shared(b.clone()),
        None => BlockCorr::Ar1(0.0),
    };
    let energy = model.y_energy();
    if energy == 0.0 {
        return Ok(RecoveryResult {
            x_hat: DVector::zeros(partition.dim()),
            gammas: vec![0.0; g],
            corr_coeff: corr_coeff_of(&corr),
            lambda: opts.lambda_fixed.or(opts.lambda_init).unwrap_or(0.0),
            cost_trajectory: Vec::new(),
            iters: 0,
            converged: true,
        });
    }
    let (mut lambda, learn_lambda) = match (opts.lambda_fixed, opts.learn_lambda) {
        (Some(l), _) => (l, false),
        (None, true) => (opts.lambda_init.unwrap_or(LAMBDA_INIT_SCALE * energy), true),
        (None, false) => (NOISELESS_LAMBDA_SCALE * energy, false),
    };

    let mut prior = prior_from(vec![1.0; g], corr);
    let mut trajectory = Vec::with_capacity(opts.max_iters.min(1024));
    let mut converged = false;

    for _ in 0..opts.max_iters {
        let (post, nll) = model.posterior(&prior, lambda)?;
        trajectory.push(nll);

        let old = prior.gammas();
        let mut new = update_gamma(&post, &prior, partition)?;
        if new.iter().any(|v| !v.is_finite()) {
            return Err(SblError::IllConditioned("gamma update diverged".into()));
        }
        let gmax = new.iter().copied().fold(0.0, f64::max);
        let cutoff = opts.prune_gamma * gmax;
        for v in new.iter_mut() {
            if *v < cutoff {
                *v = 0.0;
            }
        }

        if learn_lambda {
            lambda = model_lambda(model, &post, opts.lambda_denominator);
        }

        let corr = if opts.learn_corr {
            let masked: Vec<f64> = old
                .iter()
                .zip(&new)
                .map(|(&o, &n)| if n > 0.0 { o } else { 0.0 })
                .collect();
            match update_corr(&post, &masked, partition) {
                Some(r) => BlockCorr::Ar1(r),
                None => prior.corr().clone(),
            }
        } else {
            prior.corr().clone()
        };

        let change = old
            .iter()
            .zip(&new)
            .map(|(o, n)| (o - n).abs())
            .fold(0.0, f64::max);
        prior = prior_from(new, corr);
        if gmax == 0.0 || change <= opts.tol * gmax {
            converged = true;
            break;
        }
    }

    let x_hat = if prior.gammas().iter().all(|&v| v == 0.0) {
        DVector::zeros(partition.dim())
    } else {
        model.posterior(&prior, lambda)?.0.into_mean()
    };
    let iters = trajectory.len();
    Ok(RecoveryResult {
        x_hat,
        corr_coeff: corr_coeff_of(prior.corr()),
        gammas: prior.gammas().to_vec(),
        lambda,
        cost_trajectory: trajectory,
        iters,
        converged,
    })
}

fn corr_coeff_of(corr: &BlockCorr) -> Option<f64> {
    match corr {
        BlockCorr::Ar1(r) => Some(*r),
        BlockCorr::Shared(_) => None,
    }
}

/// Internal constructor; inputs are produced by the updates and already valid.
fn prior_from(gammas: Vec<f64>, corr: BlockCorr) -> BlockPrior {
    match corr {
        BlockCorr::Ar1(r) => BlockPrior::new(gammas, r),
        BlockCorr::Shared(b) => BlockPrior::with_shared_corr(gammas, b),
    }
    .expect("EM updates keep the prior valid")
}
