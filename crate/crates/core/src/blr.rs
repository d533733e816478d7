//! Bayesian linear regression over frozen embeddings.
//!
//! Targets are accuracies mapped through `logit`, so the linear model lives
//! on the pre-sigmoid scale. With prior precision `alpha` and noise
//! precision `beta` the posterior is
//!
//! ```text
//! S_N^{-1} = alpha I + beta Phi^T Phi
//! m_N      = beta S_N Phi^T z
//! mu(x)    = m_N^T phi(x)
//! var(x)   = 1 / beta + phi(x)^T S_N phi(x)
//! ```
//!
//! and hyperparameters are chosen by maximizing the log evidence.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamp margin applied before the logit so 0 and 1 stay finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitTransform {
    pub epsilon: f64,
}

impl Default for LogitTransform {
    fn default() -> Self {
        Self { epsilon: 1e-6 }
    }
}

impl LogitTransform {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::InvalidArgument(format!("logit epsilon {epsilon} outside (0, 0.5)")));
        }
        Ok(Self { epsilon })
    }
}

/// `ln(t / (1 - t))` after clamping `t` into `[eps, 1 - eps]`.
pub fn logit(t: f64, tr: LogitTransform) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("logit of {t} outside [0, 1]")));
    }
    let t = t.clamp(tr.epsilon, 1.0 - tr.epsilon);
    Ok((t / (1.0 - t)).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlrPosterior {
    pub alpha: f64,
    pub beta: f64,
    /// `n x d` design matrix of embeddings.
    pub design: DMatrix<f64>,
    /// Logit-space targets `z`.
    pub targets: DVector<f64>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl BlrPosterior {
    pub fn feature_dim(&self) -> usize {
        self.design.ncols()
    }

    pub fn sample_count(&self) -> usize {
        self.design.nrows()
    }

    /// Predictive mean and variance on the logit scale.
    pub fn predict(&self, phi: &[f64]) -> Result<(f64, f64)> {
        let d = self.feature_dim();
        if phi.len() != d {
            return Err(Error::DimensionMismatch(format!("embedding of length {}, posterior has {d}", phi.len())));
        }
        let mu = self.mean.iter().zip(phi).map(|(m, p)| m * p).sum();
        let mut quad = 0.0;
        for (i, pi) in phi.iter().enumerate() {
            let row: f64 = phi.iter().enumerate().map(|(j, pj)| self.covariance[(i, j)] * pj).sum();
            quad += pi * row;
        }
        // S_N is positive definite; rounding can only push the quadratic form below zero by ulps.
        Ok((mu, 1.0 / self.beta + quad.max(0.0)))
    }
}

/// Free-function form of [`BlrPosterior::predict`].
pub fn blr_predict(p: &BlrPosterior, phi: &[f64]) -> Result<(f64, f64)> {
    p.predict(phi)
}

fn design_matrix(embeddings: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = embeddings.len();
    if n == 0 {
        return Err(Error::InsufficientData("no embeddings".into()));
    }
    let d = embeddings[0].len();
    if d == 0 {
        return Err(Error::InvalidArgument("zero-dimensional embeddings".into()));
    }
    if embeddings.iter().any(|e| e.len() != d) {
        return Err(Error::DimensionMismatch("embeddings differ in length".into()));
    }
    if embeddings.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite embedding".into()));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| embeddings[i][j]))
}

fn logit_targets(accuracies: &[f64], tr: LogitTransform) -> Result<DVector<f64>> {
    let z = accuracies.iter().map(|&t| logit(t, tr)).collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(z))
}

fn check_precisions(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("precisions must be positive (alpha={alpha}, beta={beta})")));
    }
    Ok(())
}

fn precision_factor(gram: &DMatrix<f64>, alpha: f64, beta: f64) -> Result<Cholesky<f64, Dyn>> {
    let d = gram.nrows();
    let precision = gram * beta + DMatrix::identity(d, d) * alpha;
    Cholesky::new(precision).ok_or_else(|| Error::Numerical("posterior precision is not positive definite".into()))
}

/// Posterior from accuracies in `[0, 1]` (mapped through the logit).
pub fn blr_fit(embeddings: &[Vec<f64>], accuracies: &[f64], alpha: f64, beta: f64) -> Result<BlrPosterior> {
    let z = logit_targets(accuracies, LogitTransform::default())?;
    fit_logit_targets(embeddings, z.as_slice(), alpha, beta)
}

/// Posterior from targets already on the logit scale.
pub fn fit_logit_targets(embeddings: &[Vec<f64>], z: &[f64], alpha: f64, beta: f64) -> Result<BlrPosterior> {
    check_precisions(alpha, beta)?;
    let design = design_matrix(embeddings)?;
    if z.len() != design.nrows() {
        return Err(Error::DimensionMismatch(format!("{} targets for {} embeddings", z.len(), design.nrows())));
    }
    let targets = DVector::from_column_slice(z);
    let gram = design.tr_mul(&design);
    let chol = precision_factor(&gram, alpha, beta)?;
    let mean = chol.solve(&(design.tr_mul(&targets) * beta));
    let covariance = chol.inverse();
    Ok(BlrPosterior { alpha, beta, design, targets, mean, covariance })
}

/// Log evidence of accuracies `t` under `(alpha, beta)`.
pub fn log_marginal_likelihood(embeddings: &[Vec<f64>], t: &[f64], alpha: f64, beta: f64) -> Result<f64> {
    let z = logit_targets(t, LogitTransform::default())?;
    log_marginal_likelihood_logit(embeddings, z.as_slice(), alpha, beta)
}

/// Log evidence of logit-scale targets.
pub fn log_marginal_likelihood_logit(embeddings: &[Vec<f64>], z: &[f64], alpha: f64, beta: f64) -> Result<f64> {
    check_precisions(alpha, beta)?;
    let design = design_matrix(embeddings)?;
    if z.len() != design.nrows() {
        return Err(Error::DimensionMismatch(format!("{} targets for {} embeddings", z.len(), design.nrows())));
    }
    let z = DVector::from_column_slice(z);
    let gram = design.tr_mul(&design);
    let chol = precision_factor(&gram, alpha, beta)?;
    let mean = chol.solve(&(design.tr_mul(&z) * beta));
    let residual = (&z - &design * &mean).norm_squared();
    let (n, d) = (design.nrows() as f64, design.ncols() as f64);
    Ok(evidence(n, d, alpha, beta, residual, mean.norm_squared(), log_det(&chol)))
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

fn evidence(n: f64, d: f64, alpha: f64, beta: f64, residual: f64, mean_sq: f64, log_det_precision: f64) -> f64 {
    0.5 * d * alpha.ln() + 0.5 * n * beta.ln()
        - 0.5 * beta * residual
        - 0.5 * alpha * mean_sq
        - 0.5 * log_det_precision
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperparamFit {
    pub alpha: f64,
    pub beta: f64,
    pub log_evidence: f64,
    /// Set when the targets carry no signal and defaults were returned.
    pub degenerate: bool,
}

/// Search settings for [`optimize_hyperparams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperSearch {
    pub grid_points: usize,
    pub log10_min: f64,
    pub log10_max: f64,
    pub refinement_rounds: usize,
    /// Coordinate ascent may leave the grid range up to these bounds.
    pub log10_bound: f64,
}

impl Default for HyperSearch {
    fn default() -> Self {
        Self { grid_points: 7, log10_min: -4.0, log10_max: 4.0, refinement_rounds: 3, log10_bound: 6.0 }
    }
}

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_BETA: f64 = 1.0;

/// Evidence evaluator working on sufficient statistics, so each candidate
/// costs one `d x d` factorization regardless of `n`.
struct EvidenceSurface {
    gram: DMatrix<f64>,
    proj: DVector<f64>,
    zz: f64,
    n: f64,
    d: f64,
}

impl EvidenceSurface {
    fn at(&self, log_alpha: f64, log_beta: f64) -> f64 {
        let alpha = 10f64.powf(log_alpha);
        let beta = 10f64.powf(log_beta);
        let Ok(chol) = precision_factor(&self.gram, alpha, beta) else {
            return f64::NEG_INFINITY;
        };
        let mean = chol.solve(&(&self.proj * beta));
        let fit = mean.dot(&(&self.gram * &mean));
        let residual = (self.zz - 2.0 * mean.dot(&self.proj) + fit).max(0.0);
        let value = evidence(self.n, self.d, alpha, beta, residual, mean.norm_squared(), log_det(&chol));
        if value.is_finite() {
            value
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Maximizes the log evidence over `(alpha, beta)` for accuracies `t`.
pub fn optimize_hyperparams(embeddings: &[Vec<f64>], t: &[f64]) -> Result<HyperparamFit> {
    let z = logit_targets(t, LogitTransform::default())?;
    optimize_hyperparams_logit(embeddings, z.as_slice(), HyperSearch::default())
}

/// Log-grid seeding followed by coordinate ascent in log space, halving
/// the step each refinement round.
pub fn optimize_hyperparams_logit(embeddings: &[Vec<f64>], z: &[f64], search: HyperSearch) -> Result<HyperparamFit> {
    let design = design_matrix(embeddings)?;
    let n = design.nrows();
    if n < 2 {
        return Err(Error::InsufficientData("hyperparameter search needs at least two records".into()));
    }
    if z.len() != n {
        return Err(Error::DimensionMismatch(format!("{} targets for {n} embeddings", z.len())));
    }
    if search.grid_points < 2 {
        return Err(Error::InvalidArgument("grid needs at least two points".into()));
    }
    let spread = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - z.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if spread.abs() < 1e-12 {
        log::warn!("all targets equal; returning default precisions");
        let log_evidence = log_marginal_likelihood_logit(embeddings, z, DEFAULT_ALPHA, DEFAULT_BETA)?;
        return Ok(HyperparamFit { alpha: DEFAULT_ALPHA, beta: DEFAULT_BETA, log_evidence, degenerate: true });
    }
    let zv = DVector::from_column_slice(z);
    let surface = EvidenceSurface {
        gram: design.tr_mul(&design),
        proj: design.tr_mul(&zv),
        zz: zv.norm_squared(),
        n: n as f64,
        d: design.ncols() as f64,
    };

    let step = (search.log10_max - search.log10_min) / (search.grid_points - 1) as f64;
    let mut best = (search.log10_min, search.log10_min, f64::NEG_INFINITY);
    for i in 0..search.grid_points {
        for j in 0..search.grid_points {
            let la = search.log10_min + step * i as f64;
            let lb = search.log10_min + step * j as f64;
            let v = surface.at(la, lb);
            if v > best.2 {
                best = (la, lb, v);
            }
        }
    }
    if !best.2.is_finite() {
        return Err(Error::Numerical("log evidence not finite anywhere on the grid".into()));
    }

    let bound = search.log10_bound;
    let mut delta = step;
    for _ in 0..search.refinement_rounds {
        delta /= 2.0;
        for _ in 0..100 {
            let (la, lb, v) = best;
            let moves = [(la + delta, lb), (la - delta, lb), (la, lb + delta), (la, lb - delta)];
            let mut improved = None;
            let mut top = v;
            for (ma, mb) in moves {
                if ma.abs() > bound || mb.abs() > bound {
                    continue;
                }
                let mv = surface.at(ma, mb);
                if mv > top {
                    top = mv;
                    improved = Some((ma, mb, mv));
                }
            }
            match improved {
                Some(next) => best = next,
                None => break,
            }
        }
    }

    Ok(HyperparamFit { alpha: 10f64.powf(best.0), beta: 10f64.powf(best.1), log_evidence: best.2, degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sigmoid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr_free::standard_normal;

    /// Box-Muller normals so the tests need no distribution crate.
    mod rand_distr_free {
        use rand::Rng;
        pub fn standard_normal(rng: &mut impl Rng) -> f64 {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let phi = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let t = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
        (phi, t)
    }

    #[test]
    fn logit_examples() {
        let tr = LogitTransform::default();
        assert_eq!(logit(0.5, tr).unwrap(), 0.0);
        assert!((logit(0.9, tr).unwrap() - 9f64.ln()).abs() < 1e-14);
        assert!((logit(0.9, tr).unwrap() - 2.197_224_577_336_219_4).abs() < 1e-12);
        assert_eq!(logit(1.0, tr).unwrap(), logit(1.0 - 1e-6, tr).unwrap());
        assert!(logit(1.0, tr).unwrap().is_finite());
        assert!(logit(1.2, tr).is_err());
        assert!(LogitTransform::new(0.5).is_err());
    }

    #[test]
    fn logit_inverts_sigmoid() {
        let tr = LogitTransform::default();
        for i in -50..=50 {
            let x = i as f64 / 10.0;
            assert!((logit(sigmoid(x), tr).unwrap() - x).abs() < 1e-9);
        }
    }

    #[test]
    fn one_by_one_posterior() {
        let p = blr_fit(&[vec![1.0]], &[sigmoid(1.0)], 1.0, 1.0).unwrap();
        assert!((p.covariance[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((p.mean[0] - 0.5).abs() < 1e-12);
        let (mu, var) = p.predict(&[1.0]).unwrap();
        assert!((mu - 0.5).abs() < 1e-12);
        assert!((var - 1.5).abs() < 1e-12);
        let (mu0, var0) = p.predict(&[0.0]).unwrap();
        assert_eq!(mu0, 0.0);
        assert_eq!(var0, 1.0);
        assert!(p.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn one_by_one_evidence() {
        let v = log_marginal_likelihood(&[vec![1.0]], &[sigmoid(1.0)], 1.0, 1.0).unwrap();
        let expected = -0.25 - 0.5 * 2f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn strong_prior_shrinks_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (phi, t) = random_problem(&mut rng, 30, 4);
        let p = blr_fit(&phi, &t, 1e12, 1.0).unwrap();
        assert!(p.mean.amax() < 1e-9);
    }

    #[test]
    fn posterior_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (phi, t) = random_problem(&mut rng, 50, 8);
            let (alpha, beta) = (rng.gen_range(0.1..5.0), rng.gen_range(0.1..20.0));
            let p = blr_fit(&phi, &t, alpha, beta).unwrap();
            let x = DMatrix::from_fn(50, 8, |i, j| phi[i][j]);
            let precision = x.tr_mul(&x) * beta + DMatrix::identity(8, 8) * alpha;
            let s = precision.clone().try_inverse().unwrap();
            let z = DVector::from_iterator(50, t.iter().map(|&v| (v / (1.0 - v)).ln()));
            let m = &s * x.tr_mul(&z) * beta;
            assert!((&p.covariance - &s).amax() < 1e-8);
            assert!((&p.mean - &m).amax() < 1e-8);
            // S_N S_N^{-1} = I and symmetry
            assert!((&p.covariance * &precision - DMatrix::identity(8, 8)).amax() < 1e-8);
            assert!((&p.covariance - p.covariance.transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn evidence_matches_gaussian_marginal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (n, d) in [(12, 3), (30, 8), (5, 10)] {
            let (phi, t) = random_problem(&mut rng, n, d);
            let (alpha, beta) = (rng.gen_range(0.05..5.0), rng.gen_range(0.1..30.0));
            let x = DMatrix::from_fn(n, d, |i, j| phi[i][j]);
            let z = DVector::from_iterator(n, t.iter().map(|&v| (v / (1.0 - v)).ln()));
            let c = DMatrix::identity(n, n) / beta + &x * x.transpose() / alpha;
            let lu = c.clone().lu();
            let quad = z.dot(&(lu.solve(&z).unwrap()));
            let oracle = -0.5 * quad - 0.5 * lu.determinant().ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            let v = log_marginal_likelihood(&phi, &t, alpha, beta).unwrap();
            assert!((v - oracle).abs() < 1e-6, "{v} vs {oracle}");
        }
    }

    #[test]
    fn adding_a_record_never_raises_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let (phi, t) = random_problem(&mut rng, 15, 5);
            let (alpha, beta) = (rng.gen_range(0.1..3.0), rng.gen_range(0.5..10.0));
            let small = blr_fit(&phi[..14], &t[..14], alpha, beta).unwrap();
            let big = blr_fit(&phi, &t, alpha, beta).unwrap();
            let (probes, _) = random_problem(&mut rng, 30, 5);
            for p in &probes {
                assert!(big.predict(p).unwrap().1 <= small.predict(p).unwrap().1 + 1e-12);
            }
        }
    }

    #[test]
    fn evidence_is_finite_over_a_wide_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (phi, t) = random_problem(&mut rng, 40, 6);
        for la in -6..=6 {
            for lb in -6..=6 {
                let v = log_marginal_likelihood(&phi, &t, 10f64.powi(la), 10f64.powi(lb)).unwrap();
                assert!(v.is_finite(), "alpha=1e{la} beta=1e{lb}");
            }
        }
    }

    #[test]
    fn optimizer_beats_every_grid_seed_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (phi, t) = random_problem(&mut rng, 60, 5);
        let fit = optimize_hyperparams(&phi, &t).unwrap();
        assert_eq!(fit, optimize_hyperparams(&phi, &t).unwrap());
        for i in 0..7 {
            for j in 0..7 {
                let a = 10f64.powf(-4.0 + 4.0 / 3.0 * i as f64);
                let b = 10f64.powf(-4.0 + 4.0 / 3.0 * j as f64);
                let v = log_marginal_likelihood(&phi, &t, a, b).unwrap();
                assert!(fit.log_evidence >= v - 1e-9);
            }
        }
        let direct = log_marginal_likelihood(&phi, &t, fit.alpha, fit.beta).unwrap();
        assert!((direct - fit.log_evidence).abs() < 1e-6);
    }

    #[test]
    fn recovers_noise_precision_of_a_linear_gaussian_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, d) = (500, 8);
        let (alpha_star, beta_star): (f64, f64) = (2.0, 25.0);
        let w: Vec<f64> = (0..d).map(|_| standard_normal(&mut rng) / f64::sqrt(alpha_star)).collect();
        let phi: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| standard_normal(&mut rng)).collect()).collect();
        let z: Vec<f64> = phi
            .iter()
            .map(|p| p.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + standard_normal(&mut rng) / beta_star.sqrt())
            .collect();
        let fit = optimize_hyperparams_logit(&phi, &z, HyperSearch::default()).unwrap();
        assert!(fit.beta > beta_star / 2.0 && fit.beta < beta_star * 2.0, "beta = {}", fit.beta);
    }

    #[test]
    fn degenerate_targets_fall_back_to_defaults() {
        let phi = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let fit = optimize_hyperparams(&phi, &[0.7, 0.7, 0.7]).unwrap();
        assert!(fit.degenerate);
        assert_eq!((fit.alpha, fit.beta), (DEFAULT_ALPHA, DEFAULT_BETA));
        assert!(optimize_hyperparams(&phi[..1], &[0.7]).is_err());
    }

    #[test]
    fn ranking_by_mean_survives_the_sigmoid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (phi, t) = random_problem(&mut rng, 40, 6);
        let p = blr_fit(&phi, &t, 0.5, 4.0).unwrap();
        let (cands, _) = random_problem(&mut rng, 200, 6);
        let mu: Vec<f64> = cands.iter().map(|c| p.predict(c).unwrap().0).collect();
        let mut by_mu: Vec<usize> = (0..200).collect();
        by_mu.sort_by(|&a, &b| mu[a].total_cmp(&mu[b]));
        let mut by_acc = by_mu.clone();
        by_acc.sort_by(|&a, &b| sigmoid(mu[a]).total_cmp(&sigmoid(mu[b])));
        assert_eq!(by_mu, by_acc);
    }

    #[test]
    fn weak_prior_reproduces_least_squares_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (phi, t) = random_problem(&mut rng, 80, 6);
        let p = blr_fit(&phi, &t, 1e-8, 1e6).unwrap();
        let x = DMatrix::from_fn(80, 6, |i, j| phi[i][j]);
        let z = DVector::from_iterator(80, t.iter().map(|&v| (v / (1.0 - v)).ln()));
        let w = x.clone().svd(true, true).solve(&z, 1e-12).unwrap();
        let (cands, _) = random_problem(&mut rng, 50, 6);
        for c in &cands {
            let ls: f64 = c.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
            assert!((p.predict(c).unwrap().0 - ls).abs() < 1e-3);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(blr_fit(&[vec![1.0]], &[0.5], 0.0, 1.0).is_err());
        assert!(blr_fit(&[vec![f64::NAN]], &[0.5], 1.0, 1.0).is_err());
        assert!(blr_fit(&[vec![1.0], vec![1.0, 2.0]], &[0.5, 0.5], 1.0, 1.0).is_err());
        assert!(blr_fit(&[], &[], 1.0, 1.0).is_err());
    }
}
