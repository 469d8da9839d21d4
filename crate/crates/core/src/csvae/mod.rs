//! Variational autoencoder whose decoder outputs only the prior variances
//! γ(z) of the coefficients. Given z the coefficient posterior is Gaussian
//! and exact, so only the latent posterior q(z|y) is variational.

mod mlp;
mod train;

pub use mlp::{positive_variance, Mlp};
pub use train::{
    batch_gradient, batch_objective, fit, fit_groundtruth, train_epoch, validation_elbo, History, Problems, Targets, TrainConfig, TrainingSet,
};

use crate::numerics::{Matrix, NumericsError, SeededRng};
use crate::posterior::{evidence_terms_reference, PosteriorError, PosteriorOperator, SensingProblem};
use crate::sensing::{least_squares_embed, SensingError};
use std::f64::consts::{E, PI};
use thiserror::Error;

/// Floor added after the decoder's softplus.
pub const GAMMA_OFFSET: f64 = 1e-6;
pub const DEFAULT_LATENT: usize = 16;
/// Hidden-width cap for one-dimensional signals.
pub const CAP_1D: usize = 128;
/// Hidden-width cap for images.
pub const CAP_IMAGE: usize = 256;

#[derive(Debug, Error)]
pub enum CsvaeError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch} (loss {loss})")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("n_samples must be at least 1")]
    NoSamples,
    #[error("empty training set")]
    Empty,
    #[error("invalid training config: {0}")]
    BadConfig(String),
}

/// What the encoder sees: the observation itself, or the least-squares
/// signal estimate `Aᵀ(AAᵀ)⁻¹y` when matrices vary per sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderInput {
    Raw,
    LeastSquares,
}

impl EncoderInput {
    pub fn tag(self) -> &'static str {
        match self {
            EncoderInput::Raw => "raw",
            EncoderInput::LeastSquares => "least-squares",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "raw" => Some(EncoderInput::Raw),
            "least-squares" | "ls" => Some(EncoderInput::LeastSquares),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VaeParams {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub latent: usize,
    pub input_mode: EncoderInput,
}

/// Two hidden layers whose widths move linearly from `from` to `cap`.
fn hidden_widths(from: usize, cap: usize) -> [usize; 2] {
    [(from + cap) / 2, cap]
}

impl VaeParams {
    pub fn new(
        input_dim: usize,
        s: usize,
        latent: usize,
        cap: usize,
        input_mode: EncoderInput,
        rng: &mut SeededRng,
    ) -> Self {
        let (enc, dec) = Self::widths(input_dim, s, latent, cap);
        Self {
            encoder: Mlp::new(&enc, rng),
            decoder: Mlp::new(&dec, rng),
            latent,
            input_mode,
        }
    }

    /// All-zero weights: μ = 0, σ² = 1, γ = softplus(0) + offset.
    pub fn zeros(input_dim: usize, s: usize, latent: usize, cap: usize, input_mode: EncoderInput) -> Self {
        let (enc, dec) = Self::widths(input_dim, s, latent, cap);
        Self {
            encoder: Mlp::zeros(&enc),
            decoder: Mlp::zeros(&dec),
            latent,
            input_mode,
        }
    }

    fn widths(input_dim: usize, s: usize, latent: usize, cap: usize) -> (Vec<usize>, Vec<usize>) {
        let [e1, e2] = hidden_widths(input_dim, cap);
        let [d1, d2] = hidden_widths(latent, cap);
        (vec![input_dim, e1, e2, 2 * latent], vec![latent, d1, d2, s])
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn s(&self) -> usize {
        self.decoder.output_dim()
    }

    /// Encoder then decoder parameters, in tape registration order.
    pub fn to_flat(&self) -> Vec<Matrix> {
        self.encoder
            .params()
            .into_iter()
            .chain(self.decoder.params())
            .cloned()
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[Matrix]) {
        let targets = self.encoder.params_mut().into_iter().chain(self.decoder.params_mut());
        for (dst, src) in targets.zip(flat) {
            debug_assert_eq!(dst.shape(), src.shape());
            dst.clone_from(src);
        }
    }

    pub fn num_params(&self) -> usize {
        self.to_flat().iter().map(|m| m.as_slice().len()).sum()
    }

    /// Encoder input for observation `y` under matrix `a`.
    pub fn prepare_input(&self, y: &[f64], a: Option<&Matrix>) -> Result<Vec<f64>, CsvaeError> {
        match self.input_mode {
            EncoderInput::Raw => Ok(y.to_vec()),
            EncoderInput::LeastSquares => {
                let a = a.ok_or(CsvaeError::BadConfig("least-squares input needs the measurement matrix".into()))?;
                Ok(least_squares_embed(y, a)?)
            }
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<(), CsvaeError> {
        if input.len() != self.input_dim() {
            return Err(CsvaeError::ShapeMismatch {
                expected: self.input_dim(),
                found: input.len(),
            });
        }
        Ok(())
    }
}

/// Diagonal Gaussian `q(z|y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoding {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub fn encode(params: &VaeParams, input: &[f64]) -> Result<Encoding, CsvaeError> {
    params.check_input(input)?;
    let out = params.encoder.forward(&Matrix::from_vec(1, input.len(), input.to_vec())?)?;
    let l = params.latent;
    let row = out.row(0);
    Ok(Encoding {
        mean: row[..l].to_vec(),
        var: row[l..].iter().map(|v| v.exp()).collect(),
    })
}

/// `z = μ + √σ² ⊙ ε`, `ε ~ N(0, I)`.
pub fn reparameterize(enc: &Encoding, rng: &mut SeededRng) -> Vec<f64> {
    enc.mean
        .iter()
        .zip(&enc.var)
        .map(|(m, v)| m + v.max(0.0).sqrt() * rng.normal())
        .collect()
}

pub fn decode(params: &VaeParams, z: &[f64]) -> Result<Vec<f64>, CsvaeError> {
    Ok(decode_batch(params, &Matrix::from_vec(1, z.len(), z.to_vec())?)?.into_vec())
}

/// Decodes every row of `zs` into a row of γ.
pub fn decode_batch(params: &VaeParams, zs: &Matrix) -> Result<Matrix, CsvaeError> {
    if zs.cols() != params.latent {
        return Err(CsvaeError::ShapeMismatch {
            expected: params.latent,
            found: zs.cols(),
        });
    }
    let mut out = params.decoder.forward(zs)?;
    for v in out.as_mut_slice() {
        *v = positive_variance(*v);
    }
    Ok(out)
}

/// `KL(N(μ, diag σ²) ‖ N(0, I))`.
pub fn kl_standard_normal(enc: &Encoding) -> f64 {
    0.5 * enc
        .mean
        .iter()
        .zip(&enc.var)
        .map(|(m, v)| m * m + v - 1.0 - v.ln())
        .sum::<f64>()
}

/// Single-sample ELBO split into its three terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboBreakdown {
    /// `E_{p(s|y,z)}[log p(y|s)]`
    pub reconstruction: f64,
    /// `KL(q(z|y) ‖ p(z))`
    pub kl_latent: f64,
    /// `KL(p(s|y,z) ‖ p(s|z))`
    pub kl_coefficients: f64,
    pub total: f64,
}

impl ElboBreakdown {
    fn from_terms(reconstruction: f64, kl_latent: f64, kl_coefficients: f64) -> Self {
        Self {
            reconstruction,
            kl_latent,
            kl_coefficients,
            total: reconstruction - kl_latent - kl_coefficients,
        }
    }
}

/// ELBO of one observation at latent sample `z`, using only M×M solves.
pub fn elbo_sample(
    params: &VaeParams,
    p: &SensingProblem,
    input: &[f64],
    y: &[f64],
    z: &[f64],
) -> Result<ElboBreakdown, CsvaeError> {
    let enc = encode(params, input)?;
    let gamma = decode(params, z)?;
    let op = PosteriorOperator::new(p, &gamma)?;
    let post = op.apply(y)?;
    let terms = op.evidence_terms(y, &post)?;
    Ok(ElboBreakdown::from_terms(
        terms.reconstruction,
        kl_standard_normal(&enc),
        terms.kl_coefficients,
    ))
}

/// Same quantity computed from the explicit S×S posterior covariance.
pub fn elbo_sample_reference(
    params: &VaeParams,
    p: &SensingProblem,
    input: &[f64],
    y: &[f64],
    z: &[f64],
) -> Result<ElboBreakdown, CsvaeError> {
    let enc = encode(params, input)?;
    let gamma = decode(params, z)?;
    let terms = evidence_terms_reference(p, &gamma, y)?;
    Ok(ElboBreakdown::from_terms(
        terms.reconstruction,
        kl_standard_normal(&enc),
        terms.kl_coefficients,
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvaeEstimate {
    pub x_hat: Vec<f64>,
    pub s_hat: Vec<f64>,
}

fn conditional_mean(p: &SensingProblem, gamma: &[f64], y: &[f64]) -> Result<Vec<f64>, CsvaeError> {
    Ok(PosteriorOperator::new(p, gamma)?.apply(y)?.mean)
}

fn finish(p: &SensingProblem, s_hat: Vec<f64>) -> Result<CsvaeEstimate, CsvaeError> {
    Ok(CsvaeEstimate {
        x_hat: p.d().matvec(&s_hat)?,
        s_hat,
    })
}

/// Conditional mean estimate averaged over `n_samples` draws of `q(z|y)`.
pub fn csvae_estimate_cme(
    params: &VaeParams,
    p: &SensingProblem,
    input: &[f64],
    y: &[f64],
    n_samples: usize,
    rng: &mut SeededRng,
) -> Result<CsvaeEstimate, CsvaeError> {
    if n_samples == 0 {
        return Err(CsvaeError::NoSamples);
    }
    let enc = encode(params, input)?;
    let mut zs = Matrix::zeros(n_samples, params.latent);
    for i in 0..n_samples {
        zs.row_mut(i).copy_from_slice(&reparameterize(&enc, rng));
    }
    let gammas = decode_batch(params, &zs)?;
    let mut s_hat = vec![0.0; p.s()];
    for i in 0..n_samples {
        let mu = conditional_mean(p, gammas.row(i), y)?;
        for (acc, v) in s_hat.iter_mut().zip(&mu) {
            *acc += v;
        }
    }
    for v in &mut s_hat {
        *v /= n_samples as f64;
    }
    finish(p, s_hat)
}

/// Conditional mean at the encoder mean `z = μ_φ(y)`.
pub fn csvae_estimate_map(
    params: &VaeParams,
    p: &SensingProblem,
    input: &[f64],
    y: &[f64],
) -> Result<CsvaeEstimate, CsvaeError> {
    let enc = encode(params, input)?;
    let gamma = decode(params, &enc.mean)?;
    finish(p, conditional_mean(p, &gamma, y)?)
}

/// Differential entropy `½ Σ log(2πe σ²_j)` of `q(z|y)`.
pub fn latent_entropy(params: &VaeParams, input: &[f64]) -> Result<f64, CsvaeError> {
    let enc = encode(params, input)?;
    Ok(0.5 * enc.var.iter().map(|v| (2.0 * PI * E * v).ln()).sum::<f64>())
}
