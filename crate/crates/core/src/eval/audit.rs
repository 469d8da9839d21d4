use super::EvalError;
use crate::csgmm::GammaMixture;
use crate::csvae::{decode_batch, VaeParams};
use crate::numerics::{Matrix, SeededRng};
use crate::posterior::check_sparsity_bound;
use serde::{Deserialize, Serialize};

/// Result of checking sampled prior densities against the envelope
/// `∏ (2πe)^{-1/2}/|s_i|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub draws: usize,
    pub violations: usize,
    /// Largest `log density − log bound` seen (≤ 0 when nothing is violated).
    pub max_log_gap: f64,
}

impl AuditReport {
    fn new() -> Self {
        Self {
            draws: 0,
            violations: 0,
            max_log_gap: f64::NEG_INFINITY,
        }
    }

    fn record(&mut self, weights: &[f64], gammas: &[&[f64]], s: &[f64]) -> Result<(), EvalError> {
        let b = check_sparsity_bound(weights, gammas, s)?;
        self.draws += 1;
        if !b.holds() {
            self.violations += 1;
        }
        self.max_log_gap = self.max_log_gap.max(b.log_density - b.log_bound);
        Ok(())
    }
}

fn draw_coefficients(gamma: &[f64], rng: &mut SeededRng) -> Vec<f64> {
    gamma
        .iter()
        .map(|g| {
            // a zero draw has an infinite envelope; redraw
            loop {
                let v = g.sqrt() * rng.normal();
                if v != 0.0 {
                    return v;
                }
            }
        })
        .collect()
}

/// Draws `k ~ ρ`, `s ~ N(0, diag γ_k)` and evaluates the full mixture
/// density at `s`.
pub fn audit_mixture(model: &GammaMixture, n_draws: usize, rng: &mut SeededRng) -> Result<AuditReport, EvalError> {
    let gammas: Vec<&[f64]> = (0..model.k()).map(|k| model.gamma(k)).collect();
    let mut report = AuditReport::new();
    for _ in 0..n_draws {
        let u = rng.uniform(0.0, 1.0);
        let mut acc = 0.0;
        let mut k = model.k() - 1;
        for (j, w) in model.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = j;
                break;
            }
        }
        let s = draw_coefficients(model.gamma(k), rng);
        report.record(&model.weights, &gammas, &s)?;
    }
    Ok(report)
}

/// Draws `z ~ N(0, I)`, decodes `γ(z)`, draws `s ~ N(0, diag γ(z))` and
/// checks the conditional density `p(s|z)`.
pub fn audit_decoder(params: &VaeParams, n_draws: usize, rng: &mut SeededRng) -> Result<AuditReport, EvalError> {
    let zs = Matrix::from_fn(n_draws, params.latent, |_, _| rng.normal());
    let gammas = decode_batch(params, &zs)?;
    let mut report = AuditReport::new();
    for i in 0..n_draws {
        let g = gammas.row(i);
        let s = draw_coefficients(g, rng);
        report.record(&[1.0], &[g], &s)?;
    }
    Ok(report)
}
