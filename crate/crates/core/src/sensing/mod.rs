//! Measurement matrices, synthetic datasets, the corruption model
//! `y = A·x + n`, and dataset I/O.

pub mod bundle;
pub mod idx;
pub mod piecewise;

use crate::dictionary::{Dictionary, DictionaryError};
use crate::numerics::{Cholesky, Matrix, NumericsError, SeededRng};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

pub use bundle::{read_bundle, write_bundle, BUNDLE_VERSION};
pub use idx::{load_idx_images, parse_idx_images, IdxImages};
pub use piecewise::{generate_piecewise_smooth, PiecewiseCoefficients, PiecewiseSmoothSpec};

#[derive(Debug, Error)]
pub enum SensingError {
    #[error("bad dimensions: need 1 <= m < n, got m={m}, n={n}")]
    BadDimensions { m: usize, n: usize },
    #[error("measurement matrix is rank deficient")]
    RankDeficient,
    #[error("bad magic number {0:#010x}")]
    BadMagic(u32),
    #[error("truncated file: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("format version {found} not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
}

// RNG stream ids, so signals, matrices and noise never share draws.
const SIGNAL_STREAM: u64 = 1;
const MATRIX_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

/// M×N matrix with i.i.d. `N(0, 1/M)` entries.
pub fn draw_measurement_matrix(m: usize, n: usize, rng: &mut SeededRng) -> Result<Matrix, SensingError> {
    if m == 0 || m >= n {
        return Err(SensingError::BadDimensions { m, n });
    }
    let sd = 1.0 / (m as f64).sqrt();
    Ok(Matrix::from_fn(m, n, |_, _| sd * rng.normal()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixMode {
    FixedShared,
    PerSample,
}

/// Where the measurement matrix of sample `i` comes from. Per-sample
/// matrices are regenerated from the seed on demand rather than stored.
#[derive(Clone, Debug, PartialEq)]
pub enum MeasurementSource {
    Fixed { seed: u64, matrix: Arc<Matrix> },
    PerSample { seed: u64, m: usize, n: usize },
}

impl MeasurementSource {
    pub fn fixed(m: usize, n: usize, seed: u64) -> Result<Self, SensingError> {
        let mut rng = SeededRng::with_stream(seed, MATRIX_STREAM);
        Ok(Self::Fixed {
            seed,
            matrix: Arc::new(draw_measurement_matrix(m, n, &mut rng)?),
        })
    }

    pub fn per_sample(m: usize, n: usize, seed: u64) -> Result<Self, SensingError> {
        if m == 0 || m >= n {
            return Err(SensingError::BadDimensions { m, n });
        }
        Ok(Self::PerSample { seed, m, n })
    }

    pub fn mode(&self) -> MatrixMode {
        match self {
            Self::Fixed { .. } => MatrixMode::FixedShared,
            Self::PerSample { .. } => MatrixMode::PerSample,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::Fixed { seed, .. } | Self::PerSample { seed, .. } => *seed,
        }
    }

    pub fn m(&self) -> usize {
        match self {
            Self::Fixed { matrix, .. } => matrix.rows(),
            Self::PerSample { m, .. } => *m,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Fixed { matrix, .. } => matrix.cols(),
            Self::PerSample { n, .. } => *n,
        }
    }

    /// Matrix used for sample `i`.
    pub fn matrix(&self, i: usize) -> Arc<Matrix> {
        match self {
            Self::Fixed { matrix, .. } => Arc::clone(matrix),
            Self::PerSample { seed, m, n } => {
                let mut rng = SeededRng::with_stream(*seed, MATRIX_STREAM).fork(i as u64);
                Arc::new(draw_measurement_matrix(*m, *n, &mut rng).expect("validated at construction"))
            }
        }
    }
}

/// Noise variance for a target SNR given the noiseless measurements `A·x`
/// (rows). `None` means noiseless.
pub fn noise_variance_for_snr(ax: &Matrix, snr_db: Option<f64>) -> f64 {
    match snr_db {
        None => 0.0,
        Some(db) if db.is_infinite() => 0.0,
        Some(db) => {
            let mean_energy = ax.as_slice().iter().map(|v| v * v).sum::<f64>() / ax.rows().max(1) as f64;
            mean_energy / (ax.cols() as f64 * 10f64.powf(db / 10.0))
        }
    }
}

/// Noise variance used at inference time when only observations are known:
/// the observation energy at 40 dB.
pub fn surrogate_noise_variance(y: &Matrix) -> f64 {
    noise_variance_for_snr(y, Some(40.0))
}

/// Applies `y_i = A_i x_i + n_i` to every row of `xs`; returns `(Y, σ²)`.
/// Noise for sample `i` comes from `rng.fork(i)`.
pub fn corrupt(
    xs: &Matrix,
    source: &MeasurementSource,
    snr_db: Option<f64>,
    rng: &SeededRng,
) -> Result<(Matrix, f64), SensingError> {
    if xs.cols() != source.n() {
        return Err(SensingError::BadDimensions {
            m: source.m(),
            n: xs.cols(),
        });
    }
    let m = source.m();
    let mut ax = Matrix::zeros(xs.rows(), m);
    for i in 0..xs.rows() {
        let a = source.matrix(i);
        let v = a.matvec(xs.row(i))?;
        ax.row_mut(i).copy_from_slice(&v);
    }
    let var = noise_variance_for_snr(&ax, snr_db);
    if var > 0.0 {
        let sd = var.sqrt();
        for i in 0..xs.rows() {
            let mut r = rng.fork(i as u64);
            for v in ax.row_mut(i) {
                *v += sd * r.normal();
            }
        }
    }
    Ok((ax, var))
}

/// `Aᵀ(AAᵀ)⁻¹` applied to observations; the factorization is reused.
#[derive(Clone, Debug)]
pub struct LeastSquaresEmbed {
    a: Arc<Matrix>,
    gram: Cholesky,
}

impl LeastSquaresEmbed {
    pub fn new(a: Arc<Matrix>) -> Result<Self, SensingError> {
        let g = a.matmul_t(&a)?;
        let gram = Cholesky::new(&g).map_err(|_| SensingError::RankDeficient)?;
        // a nearly singular Gram matrix is as bad as a singular one
        let d = gram.factor().diag();
        let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if lo <= 1e-10 * hi {
            return Err(SensingError::RankDeficient);
        }
        Ok(Self { a, gram })
    }

    pub fn embed(&self, y: &[f64]) -> Result<Vec<f64>, SensingError> {
        let w = self.gram.solve_vec(y)?;
        Ok(self.a.tr_matvec(&w)?)
    }
}

pub fn least_squares_embed(y: &[f64], a: &Matrix) -> Result<Vec<f64>, SensingError> {
    LeastSquaresEmbed::new(Arc::new(a.clone()))?.embed(y)
}

/// Signal families that can be synthesized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SignalFamily {
    Piecewise(PiecewiseSmoothSpec),
    /// `k` spikes at uniform positions with `N(0, amplitude²)` heights.
    Spikes { n: usize, k: usize, amplitude: f64 },
}

impl SignalFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            SignalFamily::Piecewise(_) => "piecewise",
            SignalFamily::Spikes { .. } => "spikes",
        }
    }

    pub fn n(&self) -> usize {
        match self {
            SignalFamily::Piecewise(spec) => spec.n,
            SignalFamily::Spikes { n, .. } => *n,
        }
    }

    /// `count × n` matrix of signals, pure in `(self, seed)`.
    pub fn generate(&self, count: usize, seed: u64) -> Matrix {
        let rng = SeededRng::with_stream(seed, SIGNAL_STREAM);
        let rows: Vec<Vec<f64>> = match self {
            SignalFamily::Piecewise(spec) => generate_piecewise_smooth(spec, count, &rng),
            SignalFamily::Spikes { n, k, amplitude } => (0..count)
                .map(|i| {
                    let mut r = rng.fork(i as u64);
                    let mut x = vec![0.0; *n];
                    for _ in 0..*k {
                        x[r.below(*n)] += amplitude * r.normal();
                    }
                    x
                })
                .collect(),
        };
        Matrix::from_fn(count, self.n(), |i, j| rows[i][j])
    }
}

/// Ground-truth signals `X`, optional coefficients `S`, observations `Y`,
/// and how they were measured.
#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub kind: String,
    pub signal_shape: Vec<usize>,
    pub x: Option<Matrix>,
    pub s: Option<Matrix>,
    pub y: Matrix,
    pub measurements: MeasurementSource,
    pub noise_var: f64,
    /// `None` means noiseless.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl DatasetBundle {
    pub fn len(&self) -> usize {
        self.y.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.y.rows() == 0
    }

    pub fn m(&self) -> usize {
        self.measurements.m()
    }

    pub fn n(&self) -> usize {
        self.measurements.n()
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        self.y.row(i)
    }
}

/// Measurement settings for [`observe`].
#[derive(Clone, Debug, PartialEq)]
pub struct ObserveConfig {
    pub m: usize,
    pub snr_db: Option<f64>,
    pub per_sample: bool,
    pub seed: u64,
}

/// Measures a batch of signals and packs a bundle; coefficients are filled
/// in when a dictionary is given.
pub fn observe(
    kind: &str,
    signal_shape: Vec<usize>,
    xs: Matrix,
    cfg: &ObserveConfig,
    dictionary: Option<&Dictionary>,
) -> Result<DatasetBundle, SensingError> {
    let n = xs.cols();
    let source = if cfg.per_sample {
        MeasurementSource::per_sample(cfg.m, n, cfg.seed)?
    } else {
        MeasurementSource::fixed(cfg.m, n, cfg.seed)?
    };
    let (y, noise_var) = corrupt(&xs, &source, cfg.snr_db, &SeededRng::with_stream(cfg.seed, NOISE_STREAM))?;
    let s = match dictionary {
        Some(d) => {
            let mut s = Matrix::zeros(xs.rows(), d.s());
            for i in 0..xs.rows() {
                s.row_mut(i).copy_from_slice(&d.analyze(xs.row(i))?);
            }
            Some(s)
        }
        None => None,
    };
    Ok(DatasetBundle {
        kind: kind.to_string(),
        signal_shape,
        x: Some(xs),
        s,
        y,
        measurements: source,
        noise_var,
        snr_db: cfg.snr_db,
        seed: cfg.seed,
    })
}

/// Synthesizes `count` signals of `family` and measures them.
pub fn generate_dataset(
    family: &SignalFamily,
    count: usize,
    cfg: &ObserveConfig,
    dictionary: Option<&Dictionary>,
) -> Result<DatasetBundle, SensingError> {
    let xs = family.generate(count, cfg.seed);
    observe(family.tag(), vec![family.n()], xs, cfg, dictionary)
}
