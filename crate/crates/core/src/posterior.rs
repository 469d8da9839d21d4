//! Conditional Gaussian inference shared by every model: given prior
//! variances γ for the coefficients `s` and a sensing problem
//! `y = Φ·s + n`, compute posterior moments, the marginal likelihood of `y`,
//! and mixture responsibilities.
//!
//! The fast path factors only the M×M observation covariance
//! `C_y = Φ·diag(γ)·Φᵀ + σ²I` and never forms S×S matrices.

use crate::numerics::{logsumexp, pinv_wide, Cholesky, Matrix, NumericsError};
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

/// γ entries are clamped to at least this value before any inversion.
pub const GAMMA_FLOOR: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PosteriorError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("noise variance must be positive on this path (got {0})")]
    NonPositiveNoise(f64),
    #[error("negative noise variance {0}")]
    NegativeNoise(f64),
    #[error("coordinate {0} of s is zero")]
    ZeroCoordinate(usize),
    #[error("mixture weights must be non-empty and match the components")]
    BadMixture,
}

/// `Φ = A·D` together with the noise variance.
#[derive(Clone, Debug)]
pub struct SensingProblem {
    a: Option<Arc<Matrix>>,
    d: Arc<Matrix>,
    phi: Arc<Matrix>,
    noise_var: f64,
}

impl SensingProblem {
    pub fn new(a: Arc<Matrix>, d: Arc<Matrix>, noise_var: f64) -> Result<Self, PosteriorError> {
        if noise_var < 0.0 || noise_var.is_nan() {
            return Err(PosteriorError::NegativeNoise(noise_var));
        }
        let phi = Arc::new(a.matmul(&d)?);
        Ok(Self {
            a: Some(a),
            d,
            phi,
            noise_var,
        })
    }

    /// Problem from a precomputed `Φ = A·D`, without keeping `A`.
    pub fn from_phi(phi: Arc<Matrix>, d: Arc<Matrix>, noise_var: f64) -> Result<Self, PosteriorError> {
        if noise_var < 0.0 || noise_var.is_nan() {
            return Err(PosteriorError::NegativeNoise(noise_var));
        }
        if phi.cols() != d.cols() {
            return Err(PosteriorError::LengthMismatch {
                expected: d.cols(),
                found: phi.cols(),
            });
        }
        Ok(Self {
            a: None,
            d,
            phi,
            noise_var,
        })
    }

    /// Problem observing the coefficients through `D` directly (`A = I`),
    /// used when training on ground-truth signals.
    pub fn direct(d: Arc<Matrix>, noise_var: f64) -> Result<Self, PosteriorError> {
        Self::new(Arc::new(Matrix::identity(d.rows())), d, noise_var)
    }

    pub fn with_noise_var(&self, noise_var: f64) -> Result<Self, PosteriorError> {
        if noise_var < 0.0 || noise_var.is_nan() {
            return Err(PosteriorError::NegativeNoise(noise_var));
        }
        Ok(Self {
            noise_var,
            ..self.clone()
        })
    }

    /// The measurement matrix, unless built from `Φ` directly.
    pub fn a(&self) -> Option<&Matrix> {
        self.a.as_deref()
    }

    pub fn d(&self) -> &Matrix {
        &self.d
    }

    pub fn d_arc(&self) -> &Arc<Matrix> {
        &self.d
    }

    pub fn phi(&self) -> &Matrix {
        &self.phi
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn m(&self) -> usize {
        self.phi.rows()
    }

    pub fn s(&self) -> usize {
        self.phi.cols()
    }

    fn check_gamma(&self, gamma: &[f64]) -> Result<Vec<f64>, PosteriorError> {
        if gamma.len() != self.s() {
            return Err(PosteriorError::LengthMismatch {
                expected: self.s(),
                found: gamma.len(),
            });
        }
        Ok(gamma.iter().map(|g| g.max(GAMMA_FLOOR)).collect())
    }

    fn check_y(&self, y: &[f64]) -> Result<(), PosteriorError> {
        if y.len() != self.m() {
            return Err(PosteriorError::LengthMismatch {
                expected: self.m(),
                found: y.len(),
            });
        }
        Ok(())
    }
}

/// Moments of `p(s | y, z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalPosterior {
    pub mean: Vec<f64>,
    pub diag_cov: Vec<f64>,
    pub full_cov: Option<Matrix>,
    /// `-∞` when the covariance is singular (noise-free case).
    pub logdet_cov: f64,
}

/// `N(0, C_y)` with `C_y = Φ·diag(γ)·Φᵀ + σ²I`, factorized.
#[derive(Clone, Debug)]
pub struct ObservationGaussian {
    cov: Matrix,
    chol: Cholesky,
}

impl ObservationGaussian {
    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn factor(&self) -> &Cholesky {
        &self.chol
    }

    pub fn logdet(&self) -> f64 {
        self.chol.logdet()
    }

    pub fn dim(&self) -> usize {
        self.cov.rows()
    }
}

pub fn observation_cov(p: &SensingProblem, gamma: &[f64]) -> Result<ObservationGaussian, PosteriorError> {
    let g = p.check_gamma(gamma)?;
    let mut cov = p.phi.scale_cols(&g).matmul_t(&p.phi)?;
    symmetrize(&mut cov);
    cov.add_diag(p.noise_var);
    let chol = Cholesky::new(&cov)?;
    Ok(ObservationGaussian { cov, chol })
}

/// `log N(y; 0, C)`.
pub fn marginal_loglik(obs: &ObservationGaussian, y: &[f64]) -> Result<f64, PosteriorError> {
    if y.len() != obs.dim() {
        return Err(PosteriorError::LengthMismatch {
            expected: obs.dim(),
            found: y.len(),
        });
    }
    let mut u = y.to_vec();
    obs.chol.forward_vec_in_place(&mut u);
    let q: f64 = u.iter().map(|v| v * v).sum();
    Ok(-0.5 * (obs.dim() as f64 * LN_2PI + obs.logdet() + q))
}

/// `logdet C_{s|y}` via Sylvester: `M·log σ² − logdet C_y + Σ log γ`.
pub fn logdet_posterior_cov(p: &SensingProblem, gamma: &[f64], obs: &ObservationGaussian) -> Result<f64, PosteriorError> {
    if p.noise_var <= 0.0 {
        return Err(PosteriorError::NonPositiveNoise(p.noise_var));
    }
    let g = p.check_gamma(gamma)?;
    Ok(p.m() as f64 * p.noise_var.ln() - obs.logdet() + g.iter().map(|v| v.ln()).sum::<f64>())
}

/// Everything about `p(s|y,z)` that does not depend on `y`, for one γ.
///
/// Holds `L` (with `L·Lᵀ = C_y`) and `V = L⁻¹Φ`, from which
/// `μ = γ ∘ Vᵀ L⁻¹ y` and `diag C_{s|y} = γ − γ² ∘ colnorms²(V)`.
#[derive(Clone, Debug)]
pub struct PosteriorOperator {
    gamma: Vec<f64>,
    obs: ObservationGaussian,
    v: Matrix,
    col_norms: Vec<f64>,
    diag_cov: Vec<f64>,
    noise_var: f64,
}

/// Per-observation quantities from a [`PosteriorOperator`].
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationPosterior {
    pub mean: Vec<f64>,
    /// `log N(y; 0, C_y)`.
    pub loglik: f64,
    /// `Φᵀ C_y⁻¹ y`.
    pub back_projection: Vec<f64>,
}

impl PosteriorOperator {
    pub fn new(p: &SensingProblem, gamma: &[f64]) -> Result<Self, PosteriorError> {
        let g = p.check_gamma(gamma)?;
        let obs = observation_cov(p, &g)?;
        let mut v = p.phi.as_ref().clone();
        obs.chol.forward_solve_in_place(&mut v)?;
        let s = p.s();
        let mut col_norms = vec![0.0; s];
        for i in 0..v.rows() {
            for (c, x) in col_norms.iter_mut().zip(v.row(i)) {
                *c += x * x;
            }
        }
        let diag_cov = g
            .iter()
            .zip(&col_norms)
            .map(|(&gj, &q)| (gj * (1.0 - gj * q)).max(0.0))
            .collect();
        Ok(Self {
            gamma: g,
            obs,
            v,
            col_norms,
            diag_cov,
            noise_var: p.noise_var,
        })
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn observation(&self) -> &ObservationGaussian {
        &self.obs
    }

    pub fn diag_cov(&self) -> &[f64] {
        &self.diag_cov
    }

    /// `φ_jᵀ C_y⁻¹ φ_j` for every column j.
    pub fn col_quadratic(&self) -> &[f64] {
        &self.col_norms
    }

    pub fn m(&self) -> usize {
        self.v.rows()
    }

    pub fn s(&self) -> usize {
        self.v.cols()
    }

    pub fn apply(&self, y: &[f64]) -> Result<ObservationPosterior, PosteriorError> {
        if y.len() != self.m() {
            return Err(PosteriorError::LengthMismatch {
                expected: self.m(),
                found: y.len(),
            });
        }
        let mut u = y.to_vec();
        self.obs.chol.forward_vec_in_place(&mut u);
        let q: f64 = u.iter().map(|x| x * x).sum();
        let t = self.v.tr_matvec(&u)?;
        let mean = t.iter().zip(&self.gamma).map(|(a, g)| a * g).collect();
        let loglik = -0.5 * (self.m() as f64 * LN_2PI + self.obs.logdet() + q);
        Ok(ObservationPosterior {
            mean,
            loglik,
            back_projection: t,
        })
    }

    /// `log N(y; 0, C_y)` alone, skipping the mean.
    pub fn loglik(&self, y: &[f64]) -> Result<f64, PosteriorError> {
        marginal_loglik(&self.obs, y)
    }

    /// `∂ log N(y;0,C_y) / ∂γ_j = ½((Φᵀ C_y⁻¹ y)_j² − φ_jᵀ C_y⁻¹ φ_j)`.
    pub fn loglik_gradient(&self, post: &ObservationPosterior) -> Vec<f64> {
        post.back_projection
            .iter()
            .zip(&self.col_norms)
            .map(|(t, q)| 0.5 * (t * t - q))
            .collect()
    }

    pub fn logdet_posterior_cov(&self) -> Result<f64, PosteriorError> {
        if self.noise_var <= 0.0 {
            return Err(PosteriorError::NonPositiveNoise(self.noise_var));
        }
        Ok(self.m() as f64 * self.noise_var.ln() - self.obs.logdet()
            + self.gamma.iter().map(|v| v.ln()).sum::<f64>())
    }

    pub fn posterior(&self, y: &[f64]) -> Result<ConditionalPosterior, PosteriorError> {
        let post = self.apply(y)?;
        Ok(ConditionalPosterior {
            mean: post.mean,
            diag_cov: self.diag_cov.clone(),
            full_cov: None,
            logdet_cov: self.logdet_posterior_cov().unwrap_or(f64::NEG_INFINITY),
        })
    }

    /// Closed-form `E_{p(s|y)}[log p(y|s)]` and `KL(p(s|y) ‖ p(s))`, with the
    /// trace term taken from `tr(Φ C Φᵀ) = σ²(S − Σ d_j/γ_j)`.
    pub fn evidence_terms(&self, y: &[f64], post: &ObservationPosterior) -> Result<EvidenceTerms, PosteriorError> {
        let sigma2 = self.noise_var;
        if sigma2 <= 0.0 {
            return Err(PosteriorError::NonPositiveNoise(sigma2));
        }
        let m = self.m() as f64;
        let s = self.s() as f64;
        // y − Φμ = σ² C_y⁻¹ y, since Φ Γ Φᵀ C_y⁻¹ = I − σ² C_y⁻¹
        let alpha = self.obs.chol.solve_vec(y)?;
        let resid_sq = sigma2 * sigma2 * alpha.iter().map(|v| v * v).sum::<f64>();
        let ratio: f64 = self.diag_cov.iter().zip(&self.gamma).map(|(d, g)| d / g).sum();
        let trace = sigma2 * (s - ratio);
        let reconstruction = -0.5 * (m * (2.0 * PI * sigma2).ln() + (resid_sq + trace) / sigma2);
        let mu_term: f64 = post.mean.iter().zip(&self.gamma).map(|(u, g)| u * u / g).sum();
        let sum_log_gamma: f64 = self.gamma.iter().map(|g| g.ln()).sum();
        let kl = 0.5 * (sum_log_gamma - self.logdet_posterior_cov()? - s + ratio + mu_term);
        Ok(EvidenceTerms {
            reconstruction,
            kl_coefficients: kl,
        })
    }
}

/// The two coefficient-level terms of the evidence lower bound; their
/// difference equals `log N(y; 0, C_y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvidenceTerms {
    pub reconstruction: f64,
    pub kl_coefficients: f64,
}

pub fn posterior_moments_fast(p: &SensingProblem, gamma: &[f64], y: &[f64]) -> Result<ConditionalPosterior, PosteriorError> {
    if p.noise_var <= 0.0 {
        return Err(PosteriorError::NonPositiveNoise(p.noise_var));
    }
    p.check_y(y)?;
    PosteriorOperator::new(p, gamma)?.posterior(y)
}

/// Textbook form: `C = (ΦᵀΦ/σ² + diag(1/γ))⁻¹`, `μ = C Φᵀ y / σ²`.
pub fn posterior_moments_reference(
    p: &SensingProblem,
    gamma: &[f64],
    y: &[f64],
) -> Result<ConditionalPosterior, PosteriorError> {
    let sigma2 = p.noise_var;
    if sigma2 <= 0.0 {
        return Err(PosteriorError::NonPositiveNoise(sigma2));
    }
    p.check_y(y)?;
    let g = p.check_gamma(gamma)?;
    let mut precision = p.phi.t_matmul(&p.phi)?.scale(1.0 / sigma2);
    for (j, gj) in g.iter().enumerate() {
        precision[(j, j)] += 1.0 / gj;
    }
    symmetrize(&mut precision);
    let chol = Cholesky::new(&precision)?;
    let mut cov = chol.inverse();
    symmetrize(&mut cov);
    let rhs: Vec<f64> = p.phi.tr_matvec(y)?.iter().map(|v| v / sigma2).collect();
    let mean = cov.matvec(&rhs)?;
    Ok(ConditionalPosterior {
        mean,
        diag_cov: cov.diag(),
        logdet_cov: -chol.logdet(),
        full_cov: Some(cov),
    })
}

/// σ² = 0: `μ = √Γ (Φ√Γ)⁺ y`, `C = √Γ (I − (Φ√Γ)⁺ Φ√Γ) √Γ`.
pub fn posterior_moments_noisefree(
    p: &SensingProblem,
    gamma: &[f64],
    y: &[f64],
) -> Result<ConditionalPosterior, PosteriorError> {
    p.check_y(y)?;
    let g = p.check_gamma(gamma)?;
    let sq: Vec<f64> = g.iter().map(|v| v.sqrt()).collect();
    let b = p.phi.scale_cols(&sq);
    let bp = pinv_wide(&b)?;
    let t = bp.matvec(y)?;
    let mean: Vec<f64> = t.iter().zip(&sq).map(|(a, s)| a * s).collect();
    let proj = bp.matmul(&b)?;
    let s = p.s();
    let mut cov = Matrix::from_fn(s, s, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        sq[i] * (id - proj[(i, j)]) * sq[j]
    });
    symmetrize(&mut cov);
    Ok(ConditionalPosterior {
        mean,
        diag_cov: cov.diag(),
        logdet_cov: f64::NEG_INFINITY,
        full_cov: Some(cov),
    })
}

/// Evidence terms computed from the explicit S×S posterior covariance.
pub fn evidence_terms_reference(p: &SensingProblem, gamma: &[f64], y: &[f64]) -> Result<EvidenceTerms, PosteriorError> {
    let post = posterior_moments_reference(p, gamma, y)?;
    let g = p.check_gamma(gamma)?;
    let cov = post.full_cov.as_ref().expect("reference path keeps covariance");
    let sigma2 = p.noise_var;
    let m = p.m() as f64;
    let s = p.s() as f64;
    let fit = p.phi.matvec(&post.mean)?;
    let resid_sq: f64 = y.iter().zip(&fit).map(|(a, b)| (a - b).powi(2)).sum();
    let trace: f64 = {
        let pc = p.phi.matmul(cov)?;
        (0..p.m()).map(|i| crate::numerics::dot(pc.row(i), p.phi.row(i))).sum()
    };
    let reconstruction = -0.5 * (m * (2.0 * PI * sigma2).ln() + (resid_sq + trace) / sigma2);
    let tr_ratio: f64 = post.diag_cov.iter().zip(&g).map(|(d, gj)| d / gj).sum();
    let mu_term: f64 = post.mean.iter().zip(&g).map(|(u, gj)| u * u / gj).sum();
    let sum_log_gamma: f64 = g.iter().map(|v| v.ln()).sum();
    let kl = 0.5 * (sum_log_gamma - post.logdet_cov - s + tr_ratio + mu_term);
    Ok(EvidenceTerms {
        reconstruction,
        kl_coefficients: kl,
    })
}

/// Softmax of `loglik_k + log ρ_k`.
pub fn responsibilities(logliks: &[f64], log_weights: &[f64]) -> Result<Vec<f64>, PosteriorError> {
    if logliks.len() != log_weights.len() {
        return Err(PosteriorError::LengthMismatch {
            expected: logliks.len(),
            found: log_weights.len(),
        });
    }
    let joint: Vec<f64> = logliks.iter().zip(log_weights).map(|(a, b)| a + b).collect();
    let norm = logsumexp(&joint)?;
    Ok(joint.iter().map(|v| (v - norm).exp()).collect())
}

/// Outcome of comparing a Gaussian scale-mixture density against the
/// heavy-tailed envelope `∏ (2πe)^{-1/2} / |s_i|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparsityBound {
    pub log_density: f64,
    pub log_bound: f64,
}

impl SparsityBound {
    /// Within a few ulps of the envelope counts as holding (equality is
    /// attained at γ = s²).
    pub fn holds(&self) -> bool {
        self.log_density <= self.log_bound + 1e-12 * (1.0 + self.log_bound.abs())
    }
}

/// Evaluates `Σ_k w_k N(s; 0, diag γ_k)` against the envelope.
pub fn check_sparsity_bound(weights: &[f64], gammas: &[&[f64]], s: &[f64]) -> Result<SparsityBound, PosteriorError> {
    if weights.is_empty() || weights.len() != gammas.len() {
        return Err(PosteriorError::BadMixture);
    }
    if let Some(i) = s.iter().position(|v| *v == 0.0) {
        return Err(PosteriorError::ZeroCoordinate(i));
    }
    let mut terms = Vec::with_capacity(weights.len());
    for (w, g) in weights.iter().zip(gammas) {
        if g.len() != s.len() {
            return Err(PosteriorError::LengthMismatch {
                expected: s.len(),
                found: g.len(),
            });
        }
        let lp: f64 = g
            .iter()
            .zip(s)
            .map(|(&gi, &si)| {
                let gi = gi.max(GAMMA_FLOOR);
                -0.5 * (LN_2PI + gi.ln() + si * si / gi)
            })
            .sum();
        terms.push(w.ln() + lp);
    }
    let log_density = logsumexp(&terms)?;
    let log_bound: f64 = s.iter().map(|si| -0.5 * (LN_2PI + 1.0) - si.abs().ln()).sum();
    Ok(SparsityBound { log_density, log_bound })
}

fn symmetrize(m: &mut Matrix) {
    let n = m.rows();
    for i in 0..n {
        for j in 0..i {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn identity_problem(n: usize, sigma2: f64) -> SensingProblem {
        SensingProblem::new(Arc::new(Matrix::identity(n)), Arc::new(Matrix::identity(n)), sigma2).unwrap()
    }

    fn random_problem(rng: &mut SeededRng, m: usize, n: usize, s: usize, sigma2: f64) -> SensingProblem {
        let a = Matrix::from_fn(m, n, |_, _| rng.normal() / (m as f64).sqrt());
        let d = Matrix::from_fn(n, s, |_, _| rng.normal());
        SensingProblem::new(Arc::new(a), Arc::new(d), sigma2).unwrap()
    }

    #[test]
    fn observation_cov_trivial_cases() {
        let p = identity_problem(3, 1.0);
        let o = observation_cov(&p, &[1.0; 3]).unwrap();
        assert_eq!(o.cov(), &Matrix::identity(3).scale(2.0));
        let p = identity_problem(2, 0.25);
        let o = observation_cov(&p, &[0.5; 2]).unwrap();
        assert!(o.cov().max_abs_diff(&Matrix::identity(2).scale(0.75)) < 1e-15);
    }

    #[test]
    fn observation_cov_monte_carlo() {
        let mut rng = SeededRng::new(21);
        let p = random_problem(&mut rng, 6, 10, 10, 0.3);
        let gamma: Vec<f64> = (0..10).map(|j| 0.2 + 0.1 * j as f64).collect();
        let obs = observation_cov(&p, &gamma).unwrap();
        let draws = 100_000;
        let mut acc = Matrix::zeros(6, 6);
        for _ in 0..draws {
            let s: Vec<f64> = gamma.iter().map(|g| g.sqrt() * rng.normal()).collect();
            let mut y = p.phi().matvec(&s).unwrap();
            for v in y.iter_mut() {
                *v += 0.3f64.sqrt() * rng.normal();
            }
            for i in 0..6 {
                for j in 0..6 {
                    acc[(i, j)] += y[i] * y[j];
                }
            }
        }
        let emp = acc.scale(1.0 / draws as f64);
        let scale = obs.cov().diag().iter().copied().fold(0.0, f64::max);
        assert!(emp.max_abs_diff(obs.cov()) < 0.03 * scale);
    }

    #[test]
    fn fast_moments_scalar_case() {
        let p = identity_problem(3, 1.0);
        let y = [2.0, -1.0, 0.5];
        let post = posterior_moments_fast(&p, &[1.0; 3], &y).unwrap();
        for i in 0..3 {
            assert!((post.mean[i] - y[i] / 2.0).abs() < 1e-15);
            assert!((post.diag_cov[i] - 0.5).abs() < 1e-15);
        }
        assert!((post.logdet_cov + 3.0 * 2f64.ln()).abs() < 1e-14);
        let zero = posterior_moments_fast(&p, &[1.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(zero.mean, vec![0.0; 3]);
        assert_eq!(zero.diag_cov, post.diag_cov);
    }

    #[test]
    fn fast_matches_reference() {
        let mut rng = SeededRng::new(4);
        for _ in 0..10 {
            let p = random_problem(&mut rng, 8, 12, 20, 0.1);
            let gamma: Vec<f64> = (0..20).map(|_| rng.uniform(0.01, 2.0)).collect();
            let y = rng.normal_vec(8);
            let f = posterior_moments_fast(&p, &gamma, &y).unwrap();
            let r = posterior_moments_reference(&p, &gamma, &y).unwrap();
            let rc = r.full_cov.as_ref().unwrap();
            for j in 0..20 {
                assert!((f.mean[j] - r.mean[j]).abs() < 1e-8 * (1.0 + r.mean[j].abs()));
                assert!((f.diag_cov[j] - r.diag_cov[j]).abs() < 1e-8 * (1.0 + r.diag_cov[j]));
                assert!(r.diag_cov[j] <= gamma[j] * (1.0 + 1e-12));
                assert!((rc[(j, j)] - r.diag_cov[j]).abs() < 1e-10);
            }
            assert!((f.logdet_cov - r.logdet_cov).abs() < 1e-8 * (1.0 + r.logdet_cov.abs()));
            // trace identity
            let pc = p.phi().matmul(rc).unwrap().matmul_t(p.phi()).unwrap();
            let tr: f64 = pc.diag().iter().sum();
            let ratio: f64 = f.diag_cov.iter().zip(&gamma).map(|(d, g)| d / g).sum();
            assert!((tr - 0.1 * (20.0 - ratio)).abs() < 1e-8 * (1.0 + tr.abs()));
        }
    }

    #[test]
    fn logdet_scaling_consistency() {
        let mut rng = SeededRng::new(8);
        let p = random_problem(&mut rng, 5, 7, 9, 0.2);
        let gamma: Vec<f64> = (0..9).map(|_| rng.uniform(0.1, 1.0)).collect();
        let c = 3.0;
        let scaled: Vec<f64> = gamma.iter().map(|g| g * c).collect();
        let o1 = observation_cov(&p, &gamma).unwrap();
        let o2 = observation_cov(&p, &scaled).unwrap();
        let l1 = logdet_posterior_cov(&p, &gamma, &o1).unwrap();
        let l2 = logdet_posterior_cov(&p, &scaled, &o2).unwrap();
        let expected = 9.0 * c.ln() - (o2.logdet() - o1.logdet());
        assert!((l2 - l1 - expected).abs() < 1e-10);
    }

    #[test]
    fn noisefree_orthonormal_and_consistency() {
        let a = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let p = SensingProblem::new(Arc::new(a.clone()), Arc::new(Matrix::identity(3)), 0.0).unwrap();
        let post = posterior_moments_noisefree(&p, &[1.0; 3], &[2.0, -3.0]).unwrap();
        let expected = a.tr_matvec(&[2.0, -3.0]).unwrap();
        for (u, e) in post.mean.iter().zip(&expected) {
            assert!((u - e).abs() < 1e-12);
        }
        let mut rng = SeededRng::new(12);
        let p = random_problem(&mut rng, 5, 8, 11, 0.0);
        let gamma: Vec<f64> = (0..11).map(|_| rng.uniform(0.1, 2.0)).collect();
        let s0 = rng.normal_vec(11);
        let y = p.phi().matvec(&s0).unwrap();
        let post = posterior_moments_noisefree(&p, &gamma, &y).unwrap();
        let fit = p.phi().matvec(&post.mean).unwrap();
        for (a, b) in fit.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9);
        }
        let noisy = posterior_moments_fast(&p.with_noise_var(1e-10).unwrap(), &gamma, &y).unwrap();
        for j in 0..11 {
            assert!((noisy.mean[j] - post.mean[j]).abs() < 1e-4);
            assert!((noisy.diag_cov[j] - post.diag_cov[j]).abs() < 1e-4);
        }
    }

    #[test]
    fn marginal_loglik_trivial() {
        let p = SensingProblem::new(Arc::new(Matrix::identity(1)), Arc::new(Matrix::zeros(1, 1)), 1.0).unwrap();
        let o = observation_cov(&p, &[1.0]).unwrap();
        assert!((marginal_loglik(&o, &[0.0]).unwrap() + 0.918_938_533_204_672_7).abs() < 1e-12);
        let y = 0.7;
        let d = marginal_loglik(&o, &[2.0 * y]).unwrap() - marginal_loglik(&o, &[y]).unwrap();
        assert!((d + 3.0 * y * y / 2.0).abs() < 1e-12);
    }

    #[test]
    fn marginal_loglik_matches_quadrature() {
        // S=2, M=1: integrate N(y; φ·s, σ²) N(s; 0, diag γ) over s on a grid
        let phi = Matrix::from_rows(&[[0.8, -1.3]]);
        let p = SensingProblem::new(Arc::new(Matrix::identity(1)), Arc::new(phi.clone()), 0.2).unwrap();
        let gamma = [0.5, 1.7];
        let y = 0.9;
        let o = observation_cov(&p, &gamma).unwrap();
        let closed = marginal_loglik(&o, &[y]).unwrap();
        let h = 0.02;
        let lim = 10.0;
        let n = (2.0 * lim / h) as usize;
        let mut acc = 0.0;
        for a in 0..=n {
            let s1 = -lim + a as f64 * h;
            for b in 0..=n {
                let s2 = -lim + b as f64 * h;
                let r = y - 0.8 * s1 + 1.3 * s2;
                let lik = (-r * r / 0.4).exp() / (2.0 * PI * 0.2).sqrt();
                let pr = (-s1 * s1 / (2.0 * gamma[0]) - s2 * s2 / (2.0 * gamma[1])).exp()
                    / (2.0 * PI * (gamma[0] * gamma[1]).sqrt());
                acc += lik * pr;
            }
        }
        let quad = (acc * h * h).ln();
        assert!((quad - closed).abs() < 1e-6, "{quad} vs {closed}");
    }

    #[test]
    fn responsibilities_cases() {
        let half = 0.5f64.ln();
        let r = responsibilities(&[-3.0, -3.0], &[half, half]).unwrap();
        assert!((r[0] - 0.5).abs() < 1e-15);
        let r = responsibilities(&[1000.0, 0.0, -5.0], &[(1.0f64 / 3.0).ln(); 3]).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-12 && r[1] < 1e-300);
        let ll = [0.3, -1.2, 2.0];
        let lw = [0.2f64.ln(), 0.3f64.ln(), 0.5f64.ln()];
        let r = responsibilities(&ll, &lw).unwrap();
        let naive: Vec<f64> = ll.iter().zip(&lw).map(|(a, b)| (a + b).exp()).collect();
        let z: f64 = naive.iter().sum();
        for (a, b) in r.iter().zip(&naive) {
            assert!((a - b / z).abs() < 1e-14);
        }
        let shifted: Vec<f64> = ll.iter().map(|v| v + 50.0).collect();
        let r2 = responsibilities(&shifted, &lw).unwrap();
        for (a, b) in r.iter().zip(&r2) {
            assert!((a - b).abs() < 1e-13);
        }
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evidence_terms_fast_vs_reference_and_identity() {
        let mut rng = SeededRng::new(31);
        for _ in 0..5 {
            let sigma2 = rng.uniform(0.01, 1.0);
            let p = random_problem(&mut rng, 6, 9, 14, sigma2);
            let gamma: Vec<f64> = (0..14).map(|_| rng.uniform(0.05, 3.0)).collect();
            let y = rng.normal_vec(6);
            let op = PosteriorOperator::new(&p, &gamma).unwrap();
            let post = op.apply(&y).unwrap();
            let fast = op.evidence_terms(&y, &post).unwrap();
            let refr = evidence_terms_reference(&p, &gamma, &y).unwrap();
            assert!((fast.reconstruction - refr.reconstruction).abs() < 1e-8 * (1.0 + refr.reconstruction.abs()));
            assert!((fast.kl_coefficients - refr.kl_coefficients).abs() < 1e-8 * (1.0 + refr.kl_coefficients.abs()));
            let diff = fast.reconstruction - fast.kl_coefficients;
            assert!((diff - post.loglik).abs() < 1e-9 * (1.0 + diff.abs()));
        }
    }

    #[test]
    fn loglik_gradient_matches_differences() {
        let mut rng = SeededRng::new(14);
        let p = random_problem(&mut rng, 4, 6, 7, 0.3);
        let gamma: Vec<f64> = (0..7).map(|_| rng.uniform(0.2, 2.0)).collect();
        let y = rng.normal_vec(4);
        let op = PosteriorOperator::new(&p, &gamma).unwrap();
        let g = op.loglik_gradient(&op.apply(&y).unwrap());
        let h = 1e-6;
        for j in 0..7 {
            let mut gp = gamma.clone();
            gp[j] += h;
            let mut gm = gamma.clone();
            gm[j] -= h;
            let lp = PosteriorOperator::new(&p, &gp).unwrap().apply(&y).unwrap().loglik;
            let lm = PosteriorOperator::new(&p, &gm).unwrap().apply(&y).unwrap().loglik;
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-7 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn sparsity_bound_cases() {
        let c = (2.0 * PI * std::f64::consts::E).sqrt().recip();
        assert!((c - 0.24197).abs() < 1e-5);
        let at_one = check_sparsity_bound(&[1.0], &[&[1.0]], &[1.0]).unwrap();
        assert!((at_one.log_density - at_one.log_bound).abs() < 1e-14);
        assert!(at_one.holds());
        let mut rng = SeededRng::new(2);
        for _ in 0..200 {
            let g: Vec<f64> = (0..3).map(|_| rng.uniform(0.001, 5.0)).collect();
            let g2: Vec<f64> = (0..3).map(|_| rng.uniform(0.001, 5.0)).collect();
            let s: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            let w = rng.uniform(0.0, 1.0);
            assert!(check_sparsity_bound(&[w, 1.0 - w], &[&g, &g2], &s).unwrap().holds());
        }
        assert!(matches!(
            check_sparsity_bound(&[1.0], &[&[1.0, 1.0]], &[1.0, 0.0]),
            Err(PosteriorError::ZeroCoordinate(1))
        ));
    }
}
