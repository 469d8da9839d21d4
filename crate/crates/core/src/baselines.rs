//! Lasso baseline: `min_s (1/(2M))‖y − Φs‖² + λ‖s‖₁` by cyclic coordinate
//! descent, in the pixel domain (`D = I`) or a dictionary domain.

use crate::numerics::{dot, Matrix};
use crate::parallel::try_map_indexed;
use crate::posterior::SensingProblem;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LassoError {
    #[error("shrinkage must be non-negative and finite (got {0})")]
    BadLambda(f64),
    #[error("observation length {found} does not match problem ({expected})")]
    LengthMismatch { expected: usize, found: usize },
    #[error("no candidate shrinkage values or validation cases")]
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LassoDomain {
    Pixel,
    Dictionary,
}

impl LassoDomain {
    pub fn tag(self) -> &'static str {
        match self {
            LassoDomain::Pixel => "pixel",
            LassoDomain::Dictionary => "dictionary",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "pixel" => Some(LassoDomain::Pixel),
            "dictionary" => Some(LassoDomain::Dictionary),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub lambda: f64,
    pub domain: LassoDomain,
    pub max_sweeps: usize,
    /// Converged when no coordinate moves by more than this in a sweep.
    pub tol: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            domain: LassoDomain::Dictionary,
            max_sweeps: 1000,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoResult {
    pub x_hat: Vec<f64>,
    pub s_hat: Vec<f64>,
    pub objective: f64,
    pub sweeps: usize,
    /// False when `max_sweeps` ran out; the last iterate is still returned.
    pub converged: bool,
}

/// Coordinate-descent solver with `Φᵀ` and column norms cached per `Φ`.
#[derive(Clone, Debug)]
pub struct LassoSolver<'a> {
    problem: &'a SensingProblem,
    phi_t: Matrix,
    col_sq: Vec<f64>,
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// `(1/(2M))‖y − Φs‖² + λ‖s‖₁`.
pub fn lasso_objective(phi: &Matrix, y: &[f64], s: &[f64], lambda: f64) -> f64 {
    let fit = phi.matvec(s).expect("shape checked by caller");
    let r: f64 = y.iter().zip(&fit).map(|(a, b)| (a - b).powi(2)).sum();
    r / (2.0 * phi.rows() as f64) + lambda * s.iter().map(|v| v.abs()).sum::<f64>()
}

impl<'a> LassoSolver<'a> {
    pub fn new(problem: &'a SensingProblem) -> Self {
        let phi_t = problem.phi().transpose();
        let m = problem.m() as f64;
        let col_sq = (0..phi_t.rows()).map(|j| dot(phi_t.row(j), phi_t.row(j)) / m).collect();
        Self { problem, phi_t, col_sq }
    }

    pub fn solve(&self, y: &[f64], cfg: &LassoConfig) -> Result<LassoResult, LassoError> {
        self.solve_traced(y, cfg, |_| {})
    }

    /// Like [`LassoSolver::solve`], calling `on_sweep` with the iterate after
    /// every sweep.
    pub fn solve_traced(
        &self,
        y: &[f64],
        cfg: &LassoConfig,
        mut on_sweep: impl FnMut(&[f64]),
    ) -> Result<LassoResult, LassoError> {
        if !(cfg.lambda >= 0.0) || !cfg.lambda.is_finite() {
            return Err(LassoError::BadLambda(cfg.lambda));
        }
        let m = self.problem.m();
        if y.len() != m {
            return Err(LassoError::LengthMismatch {
                expected: m,
                found: y.len(),
            });
        }
        let inv_m = 1.0 / m as f64;
        let s_dim = self.problem.s();
        let mut s = vec![0.0; s_dim];
        let mut r = y.to_vec();
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < cfg.max_sweeps {
            sweeps += 1;
            let mut max_delta: f64 = 0.0;
            for j in 0..s_dim {
                let c = self.col_sq[j];
                if c == 0.0 {
                    continue;
                }
                let col = self.phi_t.row(j);
                let rho = dot(col, &r) * inv_m + c * s[j];
                let new = soft_threshold(rho, cfg.lambda) / c;
                let delta = new - s[j];
                if delta != 0.0 {
                    for (ri, &p) in r.iter_mut().zip(col) {
                        *ri -= delta * p;
                    }
                    s[j] = new;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            on_sweep(&s);
            if max_delta < cfg.tol {
                converged = true;
                break;
            }
        }
        let objective = lasso_objective(self.problem.phi(), y, &s, cfg.lambda);
        let x_hat = self.problem.d().matvec(&s).expect("dictionary matches Φ");
        Ok(LassoResult {
            x_hat,
            s_hat: s,
            objective,
            sweeps,
            converged,
        })
    }
}

pub fn lasso_solve(p: &SensingProblem, y: &[f64], cfg: &LassoConfig) -> Result<LassoResult, LassoError> {
    LassoSolver::new(p).solve(y, cfg)
}

/// One validation observation with its ground-truth signal.
#[derive(Clone, Copy, Debug)]
pub struct LassoCase<'a> {
    pub problem: &'a SensingProblem,
    pub y: &'a [f64],
    pub x: &'a [f64],
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoTuning {
    pub lambda: f64,
    /// Mean validation nMSE per candidate, in candidate order.
    pub scores: Vec<f64>,
}

/// Picks the candidate with the lowest mean validation nMSE; ties go to
/// the earliest candidate.
pub fn lasso_tune(candidates: &[f64], cases: &[LassoCase<'_>], cfg: &LassoConfig) -> Result<LassoTuning, LassoError> {
    if candidates.is_empty() || cases.is_empty() {
        return Err(LassoError::Empty);
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for &lambda in candidates {
        let c = LassoConfig { lambda, ..cfg.clone() };
        let errs = try_map_indexed(cases.len(), |i| {
            let case = cases[i];
            let est = lasso_solve(case.problem, case.y, &c)?;
            let n = case.x.len() as f64;
            Ok::<f64, LassoError>(est.x_hat.iter().zip(case.x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n)
        })?;
        scores.push(errs.iter().sum::<f64>() / errs.len() as f64);
    }
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v < scores[best] {
            best = i;
        }
    }
    Ok(LassoTuning {
        lambda: candidates[best],
        scores,
    })
}
