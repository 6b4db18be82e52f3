//! Multiple-measurement-vector recovery (T-MSBL / M-SBL).
//!
//! `Y = Phi X + V` is rewritten as the single-vector model
//! `vec(Y^T) = (Phi kron I_L) vec(X^T) + vec(V^T)`, in which every row of `X`
//! is a block of size `L`. BSBL-EM on that model with a learned correlation is
//! T-MSBL; with `B_i = I` it is M-SBL.
//!
//! Because every block shares one `L x L` correlation `B = U diag(s) U^T`, the
//! measurement covariance `lambda I + (Phi Gamma Phi^T) kron B` splits into `L`
//! independent `N x N` systems `lambda I + s_l Phi Gamma Phi^T`. The
//! [`MmvEngine::Kronecker`] engine uses that split; [`MmvEngine::Dense`] runs the
//! generic solver on the materialized `NL x ML` dictionary. Both give the same
//! iterates up to rounding.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::bsbl::{run_em, BlockModel, BsblOptions, DenseModel};
use crate::error::{Result, SblError};
use crate::linmodel::{
    factor_spd, is_symmetric, lower_inverse, symmetrize, BlockPartition, BlockPrior, Dictionary,
    GaussianPosterior,
};

/// Dictionary plus an `N x L` measurement matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MmvProblem {
    dict: Dictionary,
    y: DMatrix<f64>,
}

impl MmvProblem {
    pub fn new(dict: Dictionary, y: DMatrix<f64>) -> Result<Self> {
        if y.nrows() != dict.rows() {
            return Err(SblError::DimensionMismatch(format!(
                "Y has {} rows, dictionary has {}",
                y.nrows(),
                dict.rows()
            )));
        }
        if y.ncols() == 0 {
            return Err(SblError::DimensionMismatch("Y has no columns".into()));
        }
        Ok(Self { dict, y })
    }

    pub fn dict(&self) -> &Dictionary {
        &self.dict
    }

    pub fn measurements(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// Number of measurement vectors `L`.
    pub fn num_vectors(&self) -> usize {
        self.y.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmvResult {
    /// `M x L` estimate; rows outside `support_estimate` are exactly zero.
    pub x_hat: DMatrix<f64>,
    pub row_gammas: Vec<f64>,
    /// Learned inter-vector AR(1) coefficient (0 for M-SBL).
    pub corr_coeff: Option<f64>,
    /// Rows whose gamma survived pruning, ascending.
    pub support_estimate: Vec<usize>,
    pub lambda: f64,
    pub cost_trajectory: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
}

/// How the vectorized posterior is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MmvEngine {
    /// Exploit `D = Phi kron I_L` and the shared block correlation.
    #[default]
    Kronecker,
    /// Materialize `D` and run the generic block solver.
    Dense,
}

/// `vec(X^T)`: the rows of `x` concatenated.
pub fn vec_rows(x: &DMatrix<f64>) -> DVector<f64> {
    let (m, l) = x.shape();
    DVector::from_fn(m * l, |k, _| x[(k / l, k % l)])
}

/// Expanded dictionary `Phi kron I_L`, `vec(Y^T)` and `M` blocks of size `L`.
pub fn vectorize_mmv(problem: &MmvProblem) -> Result<(Dictionary, DVector<f64>, BlockPartition)> {
    let l = problem.num_vectors();
    let d = problem
        .dict
        .matrix()
        .kronecker(&DMatrix::<f64>::identity(l, l));
    Ok((
        Dictionary::new(d)?,
        vec_rows(&problem.y),
        BlockPartition::uniform(problem.dict.cols(), l)?,
    ))
}

/// Inverse of [`vec_rows`]: row `i` of the output is `x[i*L..(i+1)*L]`.
pub fn devectorize(x: &DVector<f64>, m: usize, l: usize) -> Result<DMatrix<f64>> {
    if x.len() != m * l {
        return Err(SblError::DimensionMismatch(format!(
            "vector of length {} cannot be reshaped to {m}x{l}",
            x.len()
        )));
    }
    Ok(DMatrix::from_fn(m, l, |i, j| x[i * l + j]))
}

/// Correlation of one block of stacked rows, `R_t kron R_s`, where `R_t`
/// (`L x L`) is the inter-vector and `R_s` (`d x d`) the intra-vector factor.
///
/// The result is the covariance of the block's columns stacked one after the
/// other. For the row-stacked layout of [`vectorize_mmv`] use
/// [`build_kron_prior_row_stacked`].
pub fn build_kron_prior(rt: &DMatrix<f64>, rs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_spd(rt, "R_t")?;
    check_spd(rs, "R_s")?;
    Ok(rt.kronecker(rs))
}

/// Same prior as [`build_kron_prior`] with entries ordered row by row
/// (`R_s kron R_t`), matching `vec(X^T)`.
pub fn build_kron_prior_row_stacked(rt: &DMatrix<f64>, rs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_spd(rt, "R_t")?;
    check_spd(rs, "R_s")?;
    Ok(rs.kronecker(rt))
}

fn check_spd(a: &DMatrix<f64>, name: &str) -> Result<()> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(SblError::InvalidArgument(format!("{name} must be square")));
    }
    if !is_symmetric(a) {
        return Err(SblError::InvalidArgument(format!(
            "{name} is not symmetric"
        )));
    }
    nalgebra::Cholesky::new(a.clone())
        .map(|_| ())
        .ok_or_else(|| SblError::NotPositiveDefinite(name.into()))
}

/// T-MSBL: learns one shared inter-vector AR(1) coefficient.
pub fn tmsbl(problem: &MmvProblem, options: &BsblOptions) -> Result<MmvResult> {
    let opts = BsblOptions {
        learn_corr: true,
        ..options.clone()
    };
    solve_mmv(problem, &opts, MmvEngine::Kronecker)
}

/// M-SBL: T-MSBL with every `B_i = I`.
pub fn msbl(problem: &MmvProblem, options: &BsblOptions) -> Result<MmvResult> {
    let opts = BsblOptions {
        learn_corr: false,
        fixed_corr: None,
        ..options.clone()
    };
    solve_mmv(problem, &opts, MmvEngine::Kronecker)
}

/// BSBL-EM on the vectorized model, honoring `options.learn_corr` as given.
pub fn solve_mmv(
    problem: &MmvProblem,
    options: &BsblOptions,
    engine: MmvEngine,
) -> Result<MmvResult> {
    let (m, l) = (problem.dict.cols(), problem.num_vectors());
    if problem.dict.rows() >= m {
        return Err(SblError::InvalidDictionary(format!(
            "solver needs an underdetermined system, got {}x{m}",
            problem.dict.rows()
        )));
    }
    if let Some(b) = &options.fixed_corr {
        if b.shape() != (l, l) {
            return Err(SblError::DimensionMismatch(format!(
                "fixed correlation must be {l}x{l}"
            )));
        }
    }
    let result = match engine {
        MmvEngine::Kronecker => run_em(&KronModel::new(problem)?, options)?,
        MmvEngine::Dense => {
            let (d, y, partition) = vectorize_mmv(problem)?;
            run_em(&DenseModel::new(&d, &y, &partition), options)?
        }
    };
    let x_hat = devectorize(&result.x_hat, m, l)?;
    let support_estimate = result
        .gammas
        .iter()
        .enumerate()
        .filter(|(_, &g)| g > 0.0)
        .map(|(i, _)| i)
        .collect();
    Ok(MmvResult {
        x_hat,
        row_gammas: result.gammas,
        corr_coeff: result.corr_coeff,
        support_estimate,
        lambda: result.lambda,
        cost_trajectory: result.cost_trajectory,
        iters: result.iters,
        converged: result.converged,
    })
}

struct KronModel<'a> {
    phi: &'a DMatrix<f64>,
    y: &'a DMatrix<f64>,
    partition: BlockPartition,
    col_norms_sq: Vec<f64>,
}

impl<'a> KronModel<'a> {
    fn new(problem: &'a MmvProblem) -> Result<Self> {
        let phi = problem.dict.matrix();
        Ok(Self {
            phi,
            y: &problem.y,
            partition: BlockPartition::uniform(phi.ncols(), problem.num_vectors())?,
            col_norms_sq: phi.column_iter().map(|c| c.norm_squared()).collect(),
        })
    }
}

impl BlockModel for KronModel<'_> {
    fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    fn measurement_len(&self) -> usize {
        self.y.len()
    }

    fn y_energy(&self) -> f64 {
        self.y.norm_squared() / self.y.len() as f64
    }

    fn posterior(&self, prior: &BlockPrior, lambda: f64) -> Result<(GaussianPosterior, f64)> {
        let (n, l) = self.y.shape();
        let m = self.phi.ncols();
        let eig = SymmetricEigen::new(prior.block_corr(l));
        let (u, s) = (&eig.eigenvectors, &eig.eigenvalues);

        let active: Vec<usize> = (0..m).filter(|&i| prior.gammas()[i] > 0.0).collect();
        let a = active.len();
        let phi_a = self.phi.select_columns(&active);
        let mut scaled = phi_a.clone();
        for (k, &i) in active.iter().enumerate() {
            scaled.column_mut(k).scale_mut(prior.gammas()[i]);
        }
        let mut gram = &scaled * phi_a.transpose();
        symmetrize(&mut gram);
        let z = self.y * u;

        // Per eigen-direction l: s_{m,l} = phi_m^T C_l^-1 phi_m and
        // t_{m,l} = phi_m^T C_l^-1 z_l with C_l = lambda I + s_l Phi Gamma Phi^T.
        let mut quad = DMatrix::zeros(a, l);
        let mut proj = DMatrix::zeros(a, l);
        let mut nll = 0.0;
        // Consecutive directions with equal eigenvalues (all of them when
        // B = I) share C_l and are handled with one factorization.
        let mut j0 = 0;
        while j0 < l {
            let j1 = (j0 + 1..l).find(|&j| s[j] != s[j0]).unwrap_or(l);
            let mut c = &gram * s[j0];
            for k in 0..n {
                c[(k, k)] += lambda;
            }
            let chol = factor_spd(c, "lambda*I + s*Phi*Gamma*Phi^T")?;
            let lower = chol.l_dirty();
            let l_inv = lower_inverse(lower)?;
            let v = &l_inv * &phi_a;
            let logdet = 2.0 * lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
            for j in j0..j1 {
                let w = &l_inv * z.column(j);
                nll += logdet + w.norm_squared();
                for (k, col) in v.column_iter().enumerate() {
                    quad[(k, j)] = if j == j0 {
                        col.norm_squared()
                    } else {
                        quad[(k, j0)]
                    };
                    proj[(k, j)] = col.dot(&w);
                }
            }
            j0 = j1;
        }

        let mut mean = DVector::zeros(m * l);
        let mut covs = vec![DMatrix::zeros(l, l); m];
        for (k, &i) in active.iter().enumerate() {
            let g = prior.gammas()[i];
            // mu_i = g * U diag(s) t_i, Sigma_i = U diag(g s - g^2 s^2 q_i) U^T.
            let cov = &mut covs[i];
            for j in 0..l {
                let gs = g * s[j];
                let (a, b) = (gs * proj[(k, j)], gs - gs * gs * quad[(k, j)]);
                for r in 0..l {
                    mean[i * l + r] += a * u[(r, j)];
                    for c in 0..=r {
                        cov[(r, c)] += b * u[(r, j)] * u[(c, j)];
                    }
                }
            }
            for r in 0..l {
                for c in 0..r {
                    cov[(c, r)] = cov[(r, c)];
                }
            }
        }
        Ok((
            GaussianPosterior::new(mean, covs, self.partition.clone())?,
            nll,
        ))
    }

    fn residual_sq(&self, mean: &DVector<f64>) -> f64 {
        let (m, l) = (self.phi.ncols(), self.y.ncols());
        let x = DMatrix::from_fn(m, l, |i, j| mean[i * l + j]);
        (self.y - self.phi * x).norm_squared()
    }

    fn gram_trace(&self, block: usize, cov: &DMatrix<f64>) -> f64 {
        self.col_norms_sq[block] * cov.trace()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsbl::bsbl_em;
    use crate::linmodel::ar1_toeplitz;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn vectorize_single_vector_is_identity_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = gaussian(&mut rng, 3, 5);
        let y = gaussian(&mut rng, 3, 1);
        let p = MmvProblem::new(Dictionary::new(phi.clone()).unwrap(), y.clone()).unwrap();
        let (d, yv, part) = vectorize_mmv(&p).unwrap();
        assert_eq!(d.matrix(), &phi);
        assert_eq!(yv, y.column(0).into_owned());
        assert!(part.sizes().iter().all(|&s| s == 1));
    }

    #[test]
    fn vectorize_by_hand() {
        let phi = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let y = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let p = MmvProblem::new(Dictionary::new(phi).unwrap(), y).unwrap();
        let (d, yv, part) = vectorize_mmv(&p).unwrap();
        let expected = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 2.0, 0.0, 0.0, 1.0, 0.0, 2.0]);
        assert_eq!(d.matrix(), &expected);
        assert_eq!(yv.as_slice(), &[3.0, 4.0]);
        assert_eq!(part.sizes(), &[2, 2]);
    }

    #[test]
    fn vectorize_preserves_forward_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = DMatrix::from_fn(3, 5, |_, _| rng.random_range(-4i32..=4) as f64);
        let y = gaussian(&mut rng, 3, 2);
        let x = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-4i32..=4) as f64);
        let p = MmvProblem::new(Dictionary::new(phi.clone()).unwrap(), y).unwrap();
        let (d, _, _) = vectorize_mmv(&p).unwrap();
        let lhs = d.matrix() * vec_rows(&x);
        let rhs = vec_rows(&(&phi * &x));
        assert_eq!((lhs - rhs).amax(), 0.0);
    }

    #[test]
    fn devectorize_cases() {
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            devectorize(&x, 2, 2).unwrap(),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])
        );
        assert_eq!(devectorize(&x, 4, 1).unwrap().column(0).into_owned(), x);
        assert!(devectorize(&x, 3, 1).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = gaussian(&mut rng, 4, 3);
        assert_eq!(devectorize(&vec_rows(&m), 4, 3).unwrap(), m);
    }

    #[test]
    fn kron_prior_cases() {
        let i = build_kron_prior(&DMatrix::identity(2, 2), &DMatrix::identity(3, 3)).unwrap();
        assert_eq!(i, DMatrix::identity(6, 6));
        let rt = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let rs = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let k = build_kron_prior(&rt, &rs).unwrap();
        assert!((k[(0, 3)] - 0.45).abs() < 1e-15);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(build_kron_prior(&bad, &rs).is_err());
        assert!(build_kron_prior(&rt, &DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).is_err());
    }

    #[test]
    fn kron_prior_eigenvalues_are_pairwise_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = gaussian(&mut rng, 3, 3);
        let rt = &a * a.transpose() + DMatrix::identity(3, 3);
        let b = gaussian(&mut rng, 2, 2);
        let rs = &b * b.transpose() + DMatrix::identity(2, 2) * 0.5;
        let k = build_kron_prior(&rt, &rs).unwrap();
        let mut got: Vec<f64> = SymmetricEigen::new(k).eigenvalues.iter().copied().collect();
        let et = SymmetricEigen::new(rt).eigenvalues;
        let es = SymmetricEigen::new(rs).eigenvalues;
        let mut expected: Vec<f64> = et
            .iter()
            .flat_map(|x| es.iter().map(move |y| x * y))
            .collect();
        got.sort_by(f64::total_cmp);
        expected.sort_by(f64::total_cmp);
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() <= 1e-10 * e.abs().max(1.0));
        }
    }

    fn mmv_instance(
        seed: u64,
        n: usize,
        m: usize,
        l: usize,
        rows: &[usize],
        rho: f64,
    ) -> (MmvProblem, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = gaussian(&mut rng, n, m);
        let mut x = DMatrix::zeros(m, l);
        for &r in rows {
            let mut prev: f64 = rng.sample(StandardNormal);
            prev += 1.5f64.copysign(prev);
            x[(r, 0)] = prev;
            for j in 1..l {
                let e: f64 = rng.sample(StandardNormal);
                prev = rho * prev + (1.0 - rho * rho).sqrt() * e;
                x[(r, j)] = prev;
            }
        }
        let y = &phi * &x;
        (
            MmvProblem::new(Dictionary::new(phi).unwrap(), y).unwrap(),
            x,
        )
    }

    #[test]
    fn kronecker_engine_matches_dense_route() {
        for (learn_corr, seed) in [(true, 1u64), (false, 2), (true, 3)] {
            let (problem, _) = mmv_instance(seed, 6, 12, 3, &[2, 7], 0.6);
            let mut noisy = problem.measurements().clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            noisy
                .iter_mut()
                .for_each(|v| *v += 0.05 * rng.sample::<f64, _>(StandardNormal));
            let problem = MmvProblem::new(problem.dict().clone(), noisy).unwrap();
            let opts = BsblOptions {
                learn_corr,
                max_iters: 40,
                ..BsblOptions::default()
            };
            let a = solve_mmv(&problem, &opts, MmvEngine::Kronecker).unwrap();
            let b = solve_mmv(&problem, &opts, MmvEngine::Dense).unwrap();
            assert_eq!(a.iters, b.iters);
            for (ca, cb) in a.cost_trajectory.iter().zip(&b.cost_trajectory) {
                assert!((ca - cb).abs() <= 1e-8 * cb.abs().max(1.0), "{ca} vs {cb}");
            }
            assert!((&a.x_hat - &b.x_hat).norm() <= 1e-7 * b.x_hat.norm());
            assert!((a.lambda - b.lambda).abs() <= 1e-7 * b.lambda);
            let (ra, rb) = (a.corr_coeff.unwrap(), b.corr_coeff.unwrap());
            assert!((ra - rb).abs() <= 1e-8);
        }
    }

    #[test]
    fn zero_measurements() {
        let (problem, _) = mmv_instance(4, 5, 10, 2, &[1], 0.0);
        let zero = MmvProblem::new(problem.dict().clone(), DMatrix::zeros(5, 2)).unwrap();
        for r in [
            tmsbl(&zero, &BsblOptions::default()).unwrap(),
            msbl(&zero, &BsblOptions::default()).unwrap(),
        ] {
            assert!(r.x_hat.iter().all(|&v| v == 0.0));
            assert!(r.support_estimate.is_empty());
        }
    }

    #[test]
    fn tmsbl_recovers_tiny_instance() {
        let rows = [3usize, 8];
        let (problem, x) = mmv_instance(6, 6, 10, 2, &rows, 0.8);
        let r = tmsbl(&problem, &BsblOptions::noiseless()).unwrap();
        assert_eq!(r.support_estimate, rows.to_vec());
        let phi_s = problem.dict().matrix().select_columns(&rows);
        for j in 0..2 {
            let col = problem.measurements().column(j).into_owned();
            let ls = phi_s.clone().svd(true, true).solve(&col, 1e-14).unwrap();
            for (k, &r_i) in rows.iter().enumerate() {
                assert!((r.x_hat[(r_i, j)] - ls[k]).abs() < 1e-3);
                assert!((ls[k] - x[(r_i, j)]).abs() < 1e-9);
            }
        }
        for i in 0..10 {
            if !rows.contains(&i) {
                assert!(r.x_hat.row(i).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn single_vector_msbl_is_classic_sbl() {
        let (problem, _) = mmv_instance(7, 6, 14, 1, &[0, 5, 9], 0.0);
        let r = msbl(&problem, &BsblOptions::noiseless()).unwrap();
        let (d, y, part) = vectorize_mmv(&problem).unwrap();
        let direct = bsbl_em(
            &d,
            &y,
            &part,
            &BsblOptions::noiseless().with_learn_corr(false),
        )
        .unwrap();
        assert_eq!(r.iters, direct.iters);
        assert!((r.x_hat.column(0) - &direct.x_hat).norm() <= 1e-9 * direct.x_hat.norm());
    }

    #[test]
    fn single_vector_tmsbl_matches_direct_iterates() {
        let (problem, _) = mmv_instance(8, 6, 14, 1, &[1, 4], 0.0);
        let r = tmsbl(&problem, &BsblOptions::noiseless()).unwrap();
        let (d, y, part) = vectorize_mmv(&problem).unwrap();
        let direct = bsbl_em(&d, &y, &part, &BsblOptions::noiseless()).unwrap();
        assert_eq!(r.iters, direct.iters);
        for (a, b) in r.cost_trajectory.iter().zip(&direct.cost_trajectory) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn support_matches_nonzero_rows() {
        let (problem, _) = mmv_instance(9, 8, 20, 3, &[0, 11, 17], 0.9);
        let r = tmsbl(&problem, &BsblOptions::noiseless()).unwrap();
        for i in 0..20 {
            let nonzero = r.x_hat.row(i).iter().any(|&v| v != 0.0);
            assert_eq!(nonzero, r.support_estimate.contains(&i), "row {i}");
        }
        assert!(r.corr_coeff.unwrap().abs() <= 0.99);
    }

    #[test]
    fn kron_prior_as_fixed_block_correlation() {
        // Two-row blocks with three measurement vectors, row-stacked layout.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (n, m, l, d) = (6, 12, 3, 2);
        let phi = gaussian(&mut rng, n, m);
        let rt = ar1_toeplitz(0.7, l);
        let rs = ar1_toeplitz(0.5, d);
        let b = build_kron_prior_row_stacked(&rt, &rs).unwrap();
        let chol = b.clone().cholesky().unwrap();
        let mut x = DMatrix::zeros(m, l);
        for blk in [1usize, 4] {
            let z = DVector::from_fn(d * l, |_, _| rng.sample::<f64, _>(StandardNormal) + 1.0);
            let v = chol.l() * z;
            for r in 0..d {
                for c in 0..l {
                    x[(blk * d + r, c)] = v[r * l + c];
                }
            }
        }
        let problem = MmvProblem::new(Dictionary::new(phi.clone()).unwrap(), &phi * &x).unwrap();
        let (dd, y, _) = vectorize_mmv(&problem).unwrap();
        let part = BlockPartition::uniform(m / d, d * l).unwrap();
        let opts = BsblOptions {
            learn_corr: false,
            fixed_corr: Some(b),
            ..BsblOptions::noiseless()
        };
        let r = bsbl_em(&dd, &y, &part, &opts).unwrap();
        let xr = devectorize(&r.x_hat, m, l).unwrap();
        assert!((&xr - &x).norm() / x.norm() < 1e-4);
    }
}
