//! Evaluation harness: metrics, the bound audit, model files, experiment
//! configs and grid sweeps.

pub mod audit;
pub mod config;
pub mod experiment;
pub mod metrics;
pub mod persist;
pub mod sweep;

pub use audit::{audit_decoder, audit_mixture, AuditReport};
pub use config::{config_hash, ExperimentConfig, METHODS};
pub use experiment::{prepare_cell, reconstruct, split_seed, train_method, CellData, Split, Trained};
pub use metrics::{clip_unit, mean_std, nmse, ssim, NmseReport};
pub use persist::{load_model, load_model_checked, save_model, DictionaryMeta, Model, ModelFile, MODEL_VERSION};
pub use sweep::{run_grid, run_sweep, MetricReport, SweepOutcome};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    LengthMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("no samples to evaluate")]
    Empty,
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("model file version {found}, this build reads version {expected}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Posterior(#[from] crate::posterior::PosteriorError),
    #[error(transparent)]
    Csvae(#[from] crate::csvae::CsvaeError),
    #[error(transparent)]
    Csgmm(#[from] crate::csgmm::CsgmmError),
    #[error(transparent)]
    Lasso(#[from] crate::baselines::LassoError),
    #[error(transparent)]
    Sensing(#[from] crate::sensing::SensingError),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
    #[error(transparent)]
    Dictionary(#[from] crate::dictionary::DictionaryError),
}
