//! Single-observation sparse Bayesian learning: EM over the prior variances
//! γ of one coefficient vector, then the posterior mean as the estimate.

use crate::posterior::{PosteriorError, PosteriorOperator, SensingProblem};

/// Variances below this are clamped after every EM update so shapes stay
/// fixed and the posterior stays well conditioned.
pub const GAMMA_PRUNE: f64 = 1e-10;

/// The EM variance update `γ_j ← (Σ_i r_i μ_ij² + (Σ_i r_i)·d_j) / Σ_i r_i`,
/// shared with the mixture model.
pub fn em_gamma_update(weighted_sq_mean: &[f64], mass: f64, diag_cov: &[f64]) -> Vec<f64> {
    weighted_sq_mean
        .iter()
        .zip(diag_cov)
        .map(|(&q, &d)| ((q + mass * d) / mass).max(GAMMA_PRUNE))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SblState {
    pub gamma: Vec<f64>,
    pub iterations: usize,
    /// `log N(y; 0, C_y(γ_t))` for every γ visited so far.
    pub trace: Vec<f64>,
}

impl SblState {
    /// All-ones initialization.
    pub fn new(s: usize) -> Self {
        Self {
            gamma: vec![1.0; s],
            iterations: 0,
            trace: Vec::new(),
        }
    }
}

/// One EM step; records the log-evidence of the current γ.
pub fn sbl_em_step(state: &SblState, p: &SensingProblem, y: &[f64]) -> Result<SblState, PosteriorError> {
    let op = PosteriorOperator::new(p, &state.gamma)?;
    let post = op.apply(y)?;
    let sq: Vec<f64> = post.mean.iter().map(|u| u * u).collect();
    let gamma = em_gamma_update(&sq, 1.0, op.diag_cov());
    let mut trace = state.trace.clone();
    trace.push(post.loglik);
    Ok(SblState {
        gamma,
        iterations: state.iterations + 1,
        trace,
    })
}

#[derive(Clone, Debug)]
pub struct SblResult {
    /// Signal estimate `D·μ`.
    pub x_hat: Vec<f64>,
    /// Coefficient estimate `μ`.
    pub s_hat: Vec<f64>,
    pub state: SblState,
    pub converged: bool,
}

/// Runs EM until the log-evidence changes by less than `tol` or `max_iters`
/// steps have been taken.
pub fn sbl_reconstruct(p: &SensingProblem, y: &[f64], max_iters: usize, tol: f64) -> Result<SblResult, PosteriorError> {
    let mut state = SblState::new(p.s());
    let mut converged = false;
    for _ in 0..max_iters.max(1) {
        state = sbl_em_step(&state, p, y)?;
        let t = &state.trace;
        if t.len() >= 2 && (t[t.len() - 1] - t[t.len() - 2]).abs() < tol {
            converged = true;
            break;
        }
    }
    let post = PosteriorOperator::new(p, &state.gamma)?.apply(y)?;
    let x_hat = p.d().matvec(&post.mean)?;
    Ok(SblResult {
        x_hat,
        s_hat: post.mean,
        state,
        converged,
    })
}
