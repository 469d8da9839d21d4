//! Zero-mean Gaussian mixture prior on coefficients with diagonal
//! covariances, fitted by EM from compressed observations (one shared
//! measurement matrix) or from ground-truth coefficients.

use crate::numerics::{logsumexp, Matrix, SeededRng};
use crate::parallel::try_map_indexed;
use crate::posterior::{responsibilities, PosteriorError, PosteriorOperator, SensingProblem, GAMMA_FLOOR};
use crate::sbl::{em_gamma_update, GAMMA_PRUNE};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Components whose total responsibility falls below this are empty.
pub const EMPTY_MASS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CsgmmError {
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error("component {0} received no responsibility mass")]
    EmptyComponent(usize),
    #[error("need at least one component and one sample")]
    Empty,
    #[error("observation length {found} does not match problem ({expected})")]
    LengthMismatch { expected: usize, found: usize },
}

/// Weights `ρ_k` and per-component variance vectors `γ_k` (rows of `gammas`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaMixture {
    pub weights: Vec<f64>,
    pub gammas: Matrix,
}

impl GammaMixture {
    /// γ log-uniform in `[1e-2, 1]` per coordinate, uniform weights.
    pub fn init(k: usize, s: usize, rng: &mut SeededRng) -> Self {
        let gammas = Matrix::from_fn(k, s, |_, _| 10f64.powf(rng.uniform(-2.0, 0.0)));
        Self {
            weights: vec![1.0 / k as f64; k],
            gammas,
        }
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn s(&self) -> usize {
        self.gammas.cols()
    }

    pub fn gamma(&self, k: usize) -> &[f64] {
        self.gammas.row(k)
    }

    pub fn log_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.ln()).collect()
    }

    pub fn is_valid(&self) -> bool {
        let sum: f64 = self.weights.iter().sum();
        (sum - 1.0).abs() < 1e-9
            && self.weights.iter().all(|w| *w >= 0.0)
            && self.gammas.as_slice().iter().all(|g| *g > 0.0 && g.is_finite())
    }
}

/// Output of an E-step, reduced to what the M-step needs.
#[derive(Clone, Debug)]
pub struct EStep {
    /// N×K posterior component probabilities.
    pub resp: Matrix,
    /// K×S: `Σ_i r_ik μ_ik²`.
    pub weighted_sq_means: Matrix,
    /// K×S: `diag C_{s|y,k}` (independent of y).
    pub diag_cov: Matrix,
    /// `log p(y_i)` under the mixture.
    pub sample_log_evidence: Vec<f64>,
    /// `Σ_i log p(y_i)`.
    pub log_evidence: f64,
}

impl EStep {
    pub fn mass(&self, k: usize) -> f64 {
        (0..self.resp.rows()).map(|i| self.resp[(i, k)]).sum()
    }
}

fn check_ys(p: &SensingProblem, ys: &Matrix) -> Result<(), CsgmmError> {
    if ys.cols() != p.m() {
        return Err(CsgmmError::LengthMismatch {
            expected: p.m(),
            found: ys.cols(),
        });
    }
    if ys.rows() == 0 {
        return Err(CsgmmError::Empty);
    }
    Ok(())
}

fn operators(model: &GammaMixture, p: &SensingProblem) -> Result<Vec<PosteriorOperator>, CsgmmError> {
    Ok(try_map_indexed(model.k(), |k| PosteriorOperator::new(p, model.gamma(k)))?)
}

/// E-step for observations `ys` (rows) sharing the problem `p`.
pub fn e_step(model: &GammaMixture, p: &SensingProblem, ys: &Matrix) -> Result<EStep, CsgmmError> {
    check_ys(p, ys)?;
    let ops = operators(model, p)?;
    let n = ys.rows();
    let kk = model.k();
    // N×K log-likelihoods, one pass per component
    let ll_cols: Vec<Vec<f64>> = try_map_indexed(kk, |k| (0..n).map(|i| ops[k].loglik(ys.row(i))).collect())?;
    let (resp, sample_log_evidence) = combine(model, n, |i, k| ll_cols[k][i])?;
    let sq_rows: Vec<Vec<f64>> = try_map_indexed(kk, |k| {
        let mut acc = vec![0.0; model.s()];
        for i in 0..n {
            let r = resp[(i, k)];
            if r == 0.0 {
                continue;
            }
            let post = ops[k].apply(ys.row(i))?;
            for (a, u) in acc.iter_mut().zip(&post.mean) {
                *a += r * (u * u);
            }
        }
        Ok::<_, PosteriorError>(acc)
    })?;
    let weighted_sq_means = Matrix::from_fn(kk, model.s(), |k, j| sq_rows[k][j]);
    let diag_cov = Matrix::from_fn(kk, model.s(), |k, j| ops[k].diag_cov()[j]);
    let log_evidence = sample_log_evidence.iter().sum();
    Ok(EStep {
        resp,
        weighted_sq_means,
        diag_cov,
        sample_log_evidence,
        log_evidence,
    })
}

fn combine(model: &GammaMixture, n: usize, ll: impl Fn(usize, usize) -> f64) -> Result<(Matrix, Vec<f64>), CsgmmError> {
    let lw = model.log_weights();
    let mut resp = Matrix::zeros(n, model.k());
    let mut ev = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<f64> = (0..model.k()).map(|k| ll(i, k)).collect();
        let r = responsibilities(&row, &lw)?;
        let joint: Vec<f64> = row.iter().zip(&lw).map(|(a, b)| a + b).collect();
        ev.push(logsumexp(&joint).map_err(PosteriorError::from)?);
        resp.row_mut(i).copy_from_slice(&r);
    }
    Ok((resp, ev))
}

/// M-step: `γ_k ← Σ_i r_ik(μ_ik² + d_k) / Σ_i r_ik`, `ρ_k ← Σ_i r_ik / N`.
pub fn m_step(e: &EStep) -> Result<GammaMixture, CsgmmError> {
    let n = e.resp.rows();
    let kk = e.resp.cols();
    let s = e.diag_cov.cols();
    let mut weights = Vec::with_capacity(kk);
    let mut gammas = Matrix::zeros(kk, s);
    for k in 0..kk {
        let mass = e.mass(k);
        if mass < EMPTY_MASS {
            return Err(CsgmmError::EmptyComponent(k));
        }
        let g = em_gamma_update(e.weighted_sq_means.row(k), mass, e.diag_cov.row(k));
        gammas.row_mut(k).copy_from_slice(&g);
        weights.push(mass / n as f64);
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(GammaMixture { weights, gammas })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsgmmConfig {
    pub k: usize,
    /// Convergence threshold on the change of the per-sample mean
    /// log-evidence between iterations.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for CsgmmConfig {
    fn default() -> Self {
        Self {
            k: 32,
            tol: 1e-3,
            max_iters: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmTrace {
    /// Dataset log-evidence of every model visited.
    pub log_evidence: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Iterations at which an empty component was re-seeded.
    pub reseeded: Vec<usize>,
}

/// Fits a K-component mixture from observations sharing one matrix.
pub fn csgmm_fit(p: &SensingProblem, ys: &Matrix, cfg: &CsgmmConfig) -> Result<(GammaMixture, EmTrace), CsgmmError> {
    if cfg.k == 0 {
        return Err(CsgmmError::Empty);
    }
    let mut rng = SeededRng::new(cfg.seed);
    let init = GammaMixture::init(cfg.k, p.s(), &mut rng);
    csgmm_fit_from(init, p, ys, cfg.tol, cfg.max_iters)
}

/// EM from a given starting mixture.
pub fn csgmm_fit_from(
    init: GammaMixture,
    p: &SensingProblem,
    ys: &Matrix,
    tol: f64,
    max_iters: usize,
) -> Result<(GammaMixture, EmTrace), CsgmmError> {
    run_em(init, ys.rows(), tol, max_iters, |model| e_step(model, p, ys), |model, e, k| {
        reseed_from_observation(model, e, p, ys, k)
    })
}

fn run_em(
    mut model: GammaMixture,
    n: usize,
    tol: f64,
    max_iters: usize,
    e_fn: impl Fn(&GammaMixture) -> Result<EStep, CsgmmError>,
    reseed: impl Fn(&mut GammaMixture, &EStep, usize) -> Result<(), CsgmmError>,
) -> Result<(GammaMixture, EmTrace), CsgmmError> {
    let mut trace = EmTrace::default();
    let mut e = e_fn(&model)?;
    trace.log_evidence.push(e.log_evidence);
    for it in 0..max_iters {
        let next = loop {
            match m_step(&e) {
                Ok(m) => break m,
                Err(CsgmmError::EmptyComponent(k)) => {
                    log::debug!("EM iteration {it}: re-seeding empty component {k}");
                    reseed(&mut model, &e, k)?;
                    trace.reseeded.push(it);
                    e = e_fn(&model)?;
                }
                Err(other) => return Err(other),
            }
        };
        model = next;
        e = e_fn(&model)?;
        trace.iterations = it + 1;
        let prev = *trace.log_evidence.last().expect("non-empty");
        trace.log_evidence.push(e.log_evidence);
        if ((e.log_evidence - prev) / n as f64).abs() < tol {
            trace.converged = true;
            break;
        }
    }
    Ok((model, trace))
}

fn worst_explained(e: &EStep) -> usize {
    e.sample_log_evidence
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty")
}

// The empty component restarts at the single-sample EM update of the worst
// explained observation, with weight 1/N.
fn reseed_from_observation(
    model: &mut GammaMixture,
    e: &EStep,
    p: &SensingProblem,
    ys: &Matrix,
    k: usize,
) -> Result<(), CsgmmError> {
    let i = worst_explained(e);
    let best = (0..model.k())
        .max_by(|&a, &b| e.resp[(i, a)].total_cmp(&e.resp[(i, b)]))
        .expect("K >= 1");
    let op = PosteriorOperator::new(p, model.gamma(best))?;
    let post = op.apply(ys.row(i))?;
    let sq: Vec<f64> = post.mean.iter().map(|u| u * u).collect();
    let g = em_gamma_update(&sq, 1.0, op.diag_cov());
    set_component(model, k, &g, ys.rows());
    Ok(())
}

fn set_component(model: &mut GammaMixture, k: usize, gamma: &[f64], n: usize) {
    model.gammas.row_mut(k).copy_from_slice(gamma);
    model.weights[k] = 1.0 / n as f64;
    let total: f64 = model.weights.iter().sum();
    for w in model.weights.iter_mut() {
        *w /= total;
    }
}

/// EM on ground-truth coefficients `S` (rows): the likelihood of each
/// sample is `N(s_i; 0, diag γ_k)` and `γ_k ← Σ_i r_ik s_i² / Σ_i r_ik`.
pub fn csgmm_fit_groundtruth(s_data: &Matrix, cfg: &CsgmmConfig) -> Result<(GammaMixture, EmTrace), CsgmmError> {
    if cfg.k == 0 || s_data.rows() == 0 {
        return Err(CsgmmError::Empty);
    }
    let mut rng = SeededRng::new(cfg.seed);
    let init = GammaMixture::init(cfg.k, s_data.cols(), &mut rng);
    csgmm_fit_groundtruth_from(init, s_data, cfg.tol, cfg.max_iters)
}

pub fn csgmm_fit_groundtruth_from(
    init: GammaMixture,
    s_data: &Matrix,
    tol: f64,
    max_iters: usize,
) -> Result<(GammaMixture, EmTrace), CsgmmError> {
    run_em(init, s_data.rows(), tol, max_iters, |m| e_step_groundtruth(m, s_data), |model, e, k| {
        let i = worst_explained(e);
        let g: Vec<f64> = s_data.row(i).iter().map(|v| (v * v).max(GAMMA_PRUNE)).collect();
        set_component(model, k, &g, s_data.rows());
        Ok(())
    })
}

pub fn e_step_groundtruth(model: &GammaMixture, s_data: &Matrix) -> Result<EStep, CsgmmError> {
    const LN_2PI: f64 = 1.837_877_066_409_345_5;
    let n = s_data.rows();
    let kk = model.k();
    let s = model.s();
    let ll = Matrix::from_fn(n, kk, |i, k| {
        model
            .gamma(k)
            .iter()
            .zip(s_data.row(i))
            .map(|(&g, &x)| {
                let g = g.max(GAMMA_FLOOR);
                -0.5 * (LN_2PI + g.ln() + x * x / g)
            })
            .sum()
    });
    let (resp, sample_log_evidence) = combine(model, n, |i, k| ll[(i, k)])?;
    let mut weighted_sq_means = Matrix::zeros(kk, s);
    for k in 0..kk {
        for i in 0..n {
            let r = resp[(i, k)];
            for (a, x) in weighted_sq_means.row_mut(k).iter_mut().zip(s_data.row(i)) {
                *a += r * (x * x);
            }
        }
    }
    let log_evidence = sample_log_evidence.iter().sum();
    Ok(EStep {
        resp,
        weighted_sq_means,
        diag_cov: Matrix::zeros(kk, s),
        sample_log_evidence,
        log_evidence,
    })
}

/// Per-component posterior operators for a fixed problem, reused across
/// observations at inference time.
#[derive(Clone, Debug)]
pub struct CsgmmInference {
    ops: Vec<PosteriorOperator>,
    log_weights: Vec<f64>,
    d: std::sync::Arc<Matrix>,
}

/// Estimate together with the component probabilities that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct CsgmmEstimate {
    pub x_hat: Vec<f64>,
    pub s_hat: Vec<f64>,
    pub resp: Vec<f64>,
}

impl CsgmmInference {
    pub fn new(model: &GammaMixture, p: &SensingProblem) -> Result<Self, CsgmmError> {
        Ok(Self {
            ops: operators(model, p)?,
            log_weights: model.log_weights(),
            d: std::sync::Arc::clone(p.d_arc()),
        })
    }

    pub fn responsibilities(&self, y: &[f64]) -> Result<Vec<f64>, CsgmmError> {
        let ll = self.ops.iter().map(|op| op.loglik(y)).collect::<Result<Vec<_>, _>>()?;
        Ok(responsibilities(&ll, &self.log_weights)?)
    }

    /// `log p(y)` under the mixture.
    pub fn log_evidence(&self, y: &[f64]) -> Result<f64, CsgmmError> {
        let joint = self
            .ops
            .iter()
            .zip(&self.log_weights)
            .map(|(op, lw)| op.loglik(y).map(|l| l + lw))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(logsumexp(&joint).map_err(PosteriorError::from)?)
    }

    /// Conditional mean estimate `D Σ_k p(k|y) μ_k`.
    pub fn cme(&self, y: &[f64]) -> Result<CsgmmEstimate, CsgmmError> {
        let resp = self.responsibilities(y)?;
        let mut s_hat = vec![0.0; self.d.cols()];
        for (op, &r) in self.ops.iter().zip(&resp) {
            if r == 0.0 {
                continue;
            }
            let post = op.apply(y)?;
            for (a, u) in s_hat.iter_mut().zip(&post.mean) {
                *a += r * u;
            }
        }
        let x_hat = self.d.matvec(&s_hat).map_err(PosteriorError::from)?;
        Ok(CsgmmEstimate { x_hat, s_hat, resp })
    }

    /// Estimate from the single most probable component.
    pub fn map(&self, y: &[f64]) -> Result<CsgmmEstimate, CsgmmError> {
        let resp = self.responsibilities(y)?;
        let k = resp
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .expect("K >= 1");
        let s_hat = self.ops[k].apply(y)?.mean;
        let x_hat = self.d.matvec(&s_hat).map_err(PosteriorError::from)?;
        Ok(CsgmmEstimate { x_hat, s_hat, resp })
    }
}

pub fn csgmm_estimate_cme(model: &GammaMixture, p: &SensingProblem, y: &[f64]) -> Result<Vec<f64>, CsgmmError> {
    Ok(CsgmmInference::new(model, p)?.cme(y)?.x_hat)
}

pub fn csgmm_estimate_map(model: &GammaMixture, p: &SensingProblem, y: &[f64]) -> Result<Vec<f64>, CsgmmError> {
    Ok(CsgmmInference::new(model, p)?.map(y)?.x_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbl::{sbl_em_step, SblState};
    use std::sync::Arc;

    fn random_problem(rng: &mut SeededRng, m: usize, s: usize, sigma2: f64) -> SensingProblem {
        let a = Matrix::from_fn(m, s, |_, _| rng.normal() / (m as f64).sqrt());
        SensingProblem::new(Arc::new(a), Arc::new(Matrix::identity(s)), sigma2).unwrap()
    }

    fn mixture_data(rng: &mut SeededRng, truth: &GammaMixture, n: usize) -> Matrix {
        let mut out = Matrix::zeros(n, truth.s());
        for i in 0..n {
            let k = if rng.uniform(0.0, 1.0) < truth.weights[0] { 0 } else { 1 };
            for j in 0..truth.s() {
                out[(i, j)] = truth.gamma(k)[j].sqrt() * rng.normal();
            }
        }
        out
    }

    #[test]
    fn single_component_responsibilities() {
        let mut rng = SeededRng::new(1);
        let p = random_problem(&mut rng, 4, 6, 0.1);
        let model = GammaMixture::init(1, 6, &mut rng);
        let ys = Matrix::from_fn(5, 4, |_, _| rng.normal());
        let e = e_step(&model, &p, &ys).unwrap();
        assert!(e.resp.as_slice().iter().all(|r| *r == 1.0));
        let op = PosteriorOperator::new(&p, model.gamma(0)).unwrap();
        let sum: f64 = (0..5).map(|i| op.loglik(ys.row(i)).unwrap()).sum();
        assert!((e.log_evidence - sum).abs() < 1e-10);
    }

    #[test]
    fn identical_components_split_evenly() {
        let mut rng = SeededRng::new(2);
        let p = random_problem(&mut rng, 4, 6, 0.1);
        let g = Matrix::from_fn(2, 6, |_, j| 0.5 + j as f64 * 0.1);
        let model = GammaMixture {
            weights: vec![0.5, 0.5],
            gammas: g,
        };
        let ys = Matrix::from_fn(3, 4, |_, _| rng.normal());
        let e = e_step(&model, &p, &ys).unwrap();
        assert!(e.resp.as_slice().iter().all(|r| (r - 0.5).abs() < 1e-15));
        let inf = CsgmmInference::new(&model, &p).unwrap();
        let cme = inf.cme(ys.row(0)).unwrap();
        let single = PosteriorOperator::new(&p, model.gamma(0)).unwrap().apply(ys.row(0)).unwrap();
        for (a, b) in cme.s_hat.iter().zip(&single.mean) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn m_step_special_cases() {
        let mut rng = SeededRng::new(3);
        let p = random_problem(&mut rng, 3, 5, 0.2);
        let model = GammaMixture::init(1, 5, &mut rng);
        let y = Matrix::from_fn(1, 3, |_, _| rng.normal());
        let e = e_step(&model, &p, &y).unwrap();
        let next = m_step(&e).unwrap();
        let op = PosteriorOperator::new(&p, model.gamma(0)).unwrap();
        let post = op.apply(y.row(0)).unwrap();
        for j in 0..5 {
            let expected = (post.mean[j] * post.mean[j] + op.diag_cov()[j]).max(GAMMA_PRUNE);
            assert_eq!(next.gamma(0)[j], expected);
        }
        // a component with no mass is reported
        let empty = EStep {
            resp: Matrix::from_rows(&[[1.0, 0.0]]),
            weighted_sq_means: Matrix::zeros(2, 5),
            diag_cov: Matrix::zeros(2, 5),
            sample_log_evidence: vec![0.0],
            log_evidence: 0.0,
        };
        assert_eq!(m_step(&empty), Err(CsgmmError::EmptyComponent(1)));
    }

    #[test]
    fn uniform_responsibilities_average() {
        let e = EStep {
            resp: Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]),
            weighted_sq_means: Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0]]),
            diag_cov: Matrix::from_rows(&[[0.1, 0.2], [0.1, 0.2]]),
            sample_log_evidence: vec![0.0, 0.0],
            log_evidence: 0.0,
        };
        let m = m_step(&e).unwrap();
        assert_eq!(m.weights, vec![0.5, 0.5]);
        assert!((m.gamma(0)[0] - 1.1).abs() < 1e-15);
        assert!((m.gamma(1)[1] - 2.2).abs() < 1e-15);
    }

    #[test]
    fn k1_matches_sbl_trajectory() {
        let mut rng = SeededRng::new(4);
        let p = random_problem(&mut rng, 6, 10, 0.05);
        let y = Matrix::from_fn(1, 6, |_, _| rng.normal());
        let mut model = GammaMixture {
            weights: vec![1.0],
            gammas: Matrix::from_fn(1, 10, |_, _| 1.0),
        };
        let mut sbl = SblState::new(10);
        for _ in 0..20 {
            let e = e_step(&model, &p, &y).unwrap();
            model = m_step(&e).unwrap();
            sbl = sbl_em_step(&sbl, &p, y.row(0)).unwrap();
            assert_eq!(model.gamma(0), &sbl.gamma[..]);
        }
    }

    #[test]
    fn evidence_monotone_and_converges() {
        let mut rng = SeededRng::new(5);
        let p = random_problem(&mut rng, 8, 16, 0.01);
        let truth = GammaMixture {
            weights: vec![0.5, 0.5],
            gammas: Matrix::from_fn(2, 16, |k, j| if (j + k) % 2 == 0 { 1.0 } else { 0.01 }),
        };
        let s = mixture_data(&mut rng, &truth, 100);
        let ys = Matrix::from_fn(100, 8, |i, r| crate::numerics::dot(p.phi().row(r), s.row(i)) + 0.1 * rng.normal());
        let cfg = CsgmmConfig {
            k: 4,
            tol: 1e-6,
            max_iters: 50,
            seed: 3,
        };
        let (model, trace) = csgmm_fit(&p, &ys, &cfg).unwrap();
        assert!(model.is_valid());
        for w in trace.log_evidence.windows(2) {
            assert!(w[1] - w[0] >= -1e-8);
        }
    }

    #[test]
    fn recovers_two_component_truth_from_identity_observations() {
        let mut rng = SeededRng::new(6);
        let s = 8;
        let truth = GammaMixture {
            weights: vec![0.5, 0.5],
            gammas: Matrix::from_fn(2, s, |k, j| if (j < s / 2) == (k == 0) { 4.0 } else { 0.04 }),
        };
        let data = mixture_data(&mut rng, &truth, 2000);
        let p = SensingProblem::new(Arc::new(Matrix::identity(s)), Arc::new(Matrix::identity(s)), 1e-4).unwrap();
        let cfg = CsgmmConfig {
            k: 2,
            tol: 1e-7,
            max_iters: 300,
            seed: 1,
        };
        let (model, _) = csgmm_fit(&p, &data, &cfg).unwrap();
        // match components by their first coordinate
        let order = if model.gamma(0)[0] > model.gamma(1)[0] { [0, 1] } else { [1, 0] };
        for (k_true, &k_fit) in order.iter().enumerate() {
            for j in 0..s {
                let t = truth.gamma(k_true)[j];
                let f = model.gamma(k_fit)[j];
                assert!((f - t).abs() / t < 0.15, "k={k_true} j={j}: {f} vs {t}");
            }
        }
    }

    #[test]
    fn groundtruth_paths_agree() {
        let mut rng = SeededRng::new(7);
        let truth = GammaMixture {
            weights: vec![0.3, 0.7],
            gammas: Matrix::from_fn(2, 5, |k, j| 0.1 + (k * 5 + j) as f64 * 0.2),
        };
        let data = mixture_data(&mut rng, &truth, 300);
        let init = GammaMixture::init(2, 5, &mut SeededRng::new(2));
        let (a, _) = csgmm_fit_groundtruth_from(init.clone(), &data, 0.0, 30).unwrap();
        let p = SensingProblem::direct(Arc::new(Matrix::identity(5)), 1e-8).unwrap();
        let (b, _) = csgmm_fit_from(init, &p, &data, 0.0, 30).unwrap();
        assert!(a.gammas.max_abs_diff(&b.gammas) < 1e-3);
        // identical samples collapse onto |s|²
        let same = Matrix::from_fn(10, 3, |_, j| [1.0, -2.0, 0.5][j]);
        let (m, _) = csgmm_fit_groundtruth(
            &same,
            &CsgmmConfig {
                k: 1,
                tol: 1e-9,
                max_iters: 5,
                seed: 0,
            },
        )
        .unwrap();
        assert!((m.gamma(0)[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn map_and_cme_relations() {
        let mut rng = SeededRng::new(8);
        let p = random_problem(&mut rng, 3, 4, 0.1);
        let one = GammaMixture::init(1, 4, &mut rng);
        let y = rng.normal_vec(3);
        let inf = CsgmmInference::new(&one, &p).unwrap();
        assert_eq!(inf.cme(&y).unwrap().x_hat, inf.map(&y).unwrap().x_hat);
        let two = GammaMixture::init(2, 4, &mut rng);
        let inf = CsgmmInference::new(&two, &p).unwrap();
        let cme = inf.cme(&y).unwrap();
        let map = inf.map(&y).unwrap();
        let kmax = if cme.resp[0] > cme.resp[1] { 0 } else { 1 };
        let other = 1 - kmax;
        let mo = PosteriorOperator::new(&p, two.gamma(other)).unwrap().apply(&y).unwrap().mean;
        for j in 0..4 {
            let gap = (mo[j] - map.s_hat[j]).abs();
            assert!((cme.s_hat[j] - map.s_hat[j]).abs() <= cme.resp[other] * gap + 1e-12);
        }
        // rescaling weights before normalization does not move the argmax
        let raw: Vec<f64> = two.weights.iter().map(|w| w * 3.0).collect();
        let total: f64 = raw.iter().sum();
        let scaled = GammaMixture {
            weights: raw.iter().map(|w| w / total).collect(),
            ..two.clone()
        };
        let rescaled = CsgmmInference::new(&scaled, &p).unwrap().map(&y).unwrap();
        assert_eq!(rescaled.s_hat, map.s_hat);
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = SeededRng::new(9);
        let p = random_problem(&mut rng, 3, 4, 0.1);
        let m = GammaMixture::init(3, 4, &mut rng);
        let perm = GammaMixture {
            weights: vec![m.weights[2], m.weights[0], m.weights[1]],
            gammas: m.gammas.select_rows(&[2, 0, 1]),
        };
        let y = rng.normal_vec(3);
        let a = CsgmmInference::new(&m, &p).unwrap();
        let b = CsgmmInference::new(&perm, &p).unwrap();
        assert!((a.log_evidence(&y).unwrap() - b.log_evidence(&y).unwrap()).abs() < 1e-12);
        let xa = a.cme(&y).unwrap().x_hat;
        let xb = b.cme(&y).unwrap().x_hat;
        for (u, v) in xa.iter().zip(&xb) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}
