//! Data preparation and the per-method train/reconstruct steps shared by
//! the sweep runner and the command-line tools.

use super::config::ExperimentConfig;
use super::EvalError;
use crate::baselines::{lasso_tune, LassoCase, LassoConfig, LassoDomain, LassoSolver};
use crate::csgmm::{csgmm_fit, CsgmmConfig, CsgmmInference, GammaMixture};
use crate::csvae::{
    csvae_estimate_cme, csvae_estimate_map, fit, Problems, Targets, TrainingSet, VaeParams,
};
use crate::dictionary::{build_by_tag, build_identity, Dictionary};
use crate::numerics::{Matrix, SeededRng};
use crate::parallel::try_map_indexed;
use crate::posterior::SensingProblem;
use crate::sbl::sbl_reconstruct;
use crate::sensing::{
    generate_dataset, load_idx_images, observe, surrogate_noise_variance, DatasetBundle, LeastSquaresEmbed,
    MeasurementSource, ObserveConfig, PiecewiseSmoothSpec, SignalFamily,
};
use std::sync::Arc;
use std::time::Instant;

/// Which split of a cell a dataset seed is for.
#[derive(Clone, Copy, Debug)]
pub enum Split {
    Train = 1,
    Tune = 2,
    Test = 3,
    Model = 4,
    Estimator = 5,
}

/// Seed for one split of a sweep seed; independent of `M` so every grid
/// point of a seed sees the same signals.
pub fn split_seed(seed: u64, split: Split) -> u64 {
    SeededRng::with_stream(seed, 100 + split as u64).next_u64()
}

/// Signal shape of the configured dataset (one entry for 1D signals).
pub fn signal_shape(cfg: &ExperimentConfig) -> Result<Vec<usize>, EvalError> {
    match cfg.dataset.family.as_str() {
        "idx" => {
            let path = cfg.dataset.path.as_deref().expect("validated");
            let imgs = load_idx_images(path.as_ref())
                .map_err(|e| EvalError::Config(format!("cannot read image file {path}: {e}")))?;
            Ok(vec![imgs.rows, imgs.cols])
        }
        _ => Ok(vec![cfg.dataset.n]),
    }
}

pub fn is_image(shape: &[usize]) -> bool {
    shape.len() == 2
}

pub fn make_dictionary(cfg: &ExperimentConfig, shape: &[usize]) -> Result<Dictionary, EvalError> {
    Ok(build_by_tag(&cfg.dictionary.kind, shape, cfg.dictionary.level)?)
}

pub fn signal_family(cfg: &ExperimentConfig) -> Option<SignalFamily> {
    match cfg.dataset.family.as_str() {
        "piecewise" => Some(SignalFamily::Piecewise(PiecewiseSmoothSpec {
            n: cfg.dataset.n,
            ..PiecewiseSmoothSpec::default()
        })),
        "spikes" => Some(SignalFamily::Spikes {
            n: cfg.dataset.n,
            k: cfg.dataset.spikes,
            amplitude: cfg.dataset.amplitude,
        }),
        _ => None,
    }
}

/// `count` measured samples of the configured dataset.
///
/// Image files are split by a fixed permutation (seeded by the sweep seed):
/// training, tuning and test images never overlap.
pub fn make_bundle(
    cfg: &ExperimentConfig,
    seed: u64,
    split: Split,
    count: usize,
    m: usize,
    snr_db: Option<f64>,
) -> Result<DatasetBundle, EvalError> {
    let obs = ObserveConfig {
        m,
        snr_db,
        per_sample: cfg.dataset.per_sample,
        seed: split_seed(seed, split),
    };
    if let Some(family) = signal_family(cfg) {
        return Ok(generate_dataset(&family, count, &obs, None)?);
    }
    let imgs = load_idx_images(cfg.dataset.path.as_deref().expect("validated").as_ref())?;
    let total = imgs.images.rows();
    let mut order: Vec<usize> = (0..total).collect();
    SeededRng::with_stream(seed, 99).shuffle(&mut order);
    let max_train = cfg.sweep.n_train.iter().copied().max().unwrap_or(0);
    if max_train + cfg.lasso.n_tune + cfg.n_test > total {
        return Err(EvalError::Config(format!(
            "image file has {total} images, not enough for the training, tuning and test splits"
        )));
    }
    let (lo, hi) = match split {
        Split::Tune => (max_train, max_train + count),
        Split::Test => (total - count, total),
        _ => (0, count),
    };
    let xs = imgs.images.select_rows(&order[lo..hi]);
    Ok(observe("idx", vec![imgs.rows, imgs.cols], xs, &obs, None)?)
}

/// Noise variance assumed by the models: the true one, or a 40 dB
/// surrogate for noiseless data.
pub fn model_noise_var(bundle: &DatasetBundle) -> f64 {
    if bundle.noise_var > 0.0 {
        bundle.noise_var
    } else {
        surrogate_noise_variance(&bundle.y)
    }
}

/// Sensing problems of a bundle in the coefficient domain of `d`.
pub fn problems_for(bundle: &DatasetBundle, d: &Arc<Matrix>, noise_var: f64) -> Result<Problems, EvalError> {
    match &bundle.measurements {
        MeasurementSource::Fixed { matrix, .. } => {
            Ok(Problems::Shared(SensingProblem::new(Arc::clone(matrix), Arc::clone(d), noise_var)?))
        }
        MeasurementSource::PerSample { .. } => {
            let ps = try_map_indexed(bundle.len(), |i| {
                let phi = bundle.measurements.matrix(i).matmul(d)?;
                SensingProblem::from_phi(Arc::new(phi), Arc::clone(d), noise_var)
            })?;
            Ok(Problems::PerSample(ps))
        }
    }
}

/// Encoder inputs for every observation of a bundle.
pub fn encoder_inputs(bundle: &DatasetBundle, params_mode: crate::csvae::EncoderInput) -> Result<Matrix, EvalError> {
    use crate::csvae::EncoderInput;
    match params_mode {
        EncoderInput::Raw => Ok(bundle.y.clone()),
        EncoderInput::LeastSquares => {
            let rows = try_map_indexed(bundle.len(), |i| {
                LeastSquaresEmbed::new(bundle.measurements.matrix(i))?.embed(bundle.observation(i))
            })?;
            let n = bundle.n();
            Ok(Matrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
        }
    }
}

/// Everything a method needs for one grid cell.
pub struct CellData {
    pub dictionary: Arc<Matrix>,
    pub dictionary_meta: super::persist::DictionaryMeta,
    pub shape: Vec<usize>,
    pub train: DatasetBundle,
    pub test: DatasetBundle,
    pub test_problems: Problems,
    /// Ground-truth validation data for Lasso tuning, when requested.
    pub tune: Option<DatasetBundle>,
    pub seed: u64,
}

impl CellData {
    /// Packs measured splits; test problems use the test split's noise level.
    pub fn new(
        dictionary: &Dictionary,
        train: DatasetBundle,
        test: DatasetBundle,
        tune: Option<DatasetBundle>,
        seed: u64,
    ) -> Result<Self, EvalError> {
        let d = Arc::new(dictionary.matrix().clone());
        let test_problems = problems_for(&test, &d, model_noise_var(&test))?;
        Ok(CellData {
            dictionary: d,
            dictionary_meta: super::persist::DictionaryMeta::of(dictionary),
            shape: dictionary.shape().to_vec(),
            train,
            test,
            test_problems,
            tune,
            seed,
        })
    }
}

/// A fitted (or parameter-free) reconstruction method.
#[derive(Clone, Debug)]
pub enum Trained {
    Sbl { max_iters: usize, tol: f64 },
    Lasso { config: LassoConfig },
    Csgmm { model: GammaMixture, map: bool },
    Csvae { params: VaeParams, inputs: Matrix, n_samples: usize, map: bool },
}

impl Trained {
    pub fn method(&self) -> &'static str {
        match self {
            Trained::Sbl { .. } => "sbl",
            Trained::Lasso { .. } => "lasso",
            Trained::Csgmm { .. } => "csgmm",
            Trained::Csvae { .. } => "csvae",
        }
    }
}

/// Fits `method` on the cell's training split; returns the fitted method
/// and the wall-clock training time in seconds.
pub fn train_method(method: &str, cfg: &ExperimentConfig, cell: &CellData) -> Result<(Trained, f64), EvalError> {
    let start = Instant::now();
    let trained = match method {
        "sbl" => Trained::Sbl {
            max_iters: cfg.sbl.max_iters,
            tol: cfg.sbl.tol,
        },
        "lasso" => Trained::Lasso {
            config: tune_lasso(cfg, cell)?,
        },
        "csgmm" => {
            let noise_var = model_noise_var(&cell.train);
            let problems = problems_for(&cell.train, &cell.dictionary, noise_var)?;
            let Problems::Shared(p) = problems else {
                return Err(EvalError::Unsupported(
                    "csgmm needs one measurement matrix shared by all samples".into(),
                ));
            };
            let c = CsgmmConfig {
                k: cfg.csgmm.k,
                tol: cfg.csgmm.tol,
                max_iters: cfg.csgmm.max_iters,
                seed: split_seed(cell.seed, Split::Model),
            };
            let (model, _) = csgmm_fit(&p, &cell.train.y, &c)?;
            Trained::Csgmm {
                model,
                map: cfg.csgmm.estimator == "map",
            }
        }
        "csvae" => {
            let params = train_csvae(cfg, cell)?;
            let inputs = encoder_inputs(&cell.test, params.input_mode)?;
            Trained::Csvae {
                params,
                inputs,
                n_samples: cfg.csvae.n_samples,
                map: cfg.csvae.estimator == "map",
            }
        }
        other => return Err(EvalError::Config(format!("unknown method {other}"))),
    };
    Ok((trained, start.elapsed().as_secs_f64()))
}

fn train_csvae(cfg: &ExperimentConfig, cell: &CellData) -> Result<VaeParams, EvalError> {
    let mut tc = cfg.csvae.train.clone();
    tc.seed = split_seed(cell.seed, Split::Model);
    let mode = tc.encoder_input();
    let noise_var = model_noise_var(&cell.train);
    let problems = problems_for(&cell.train, &cell.dictionary, noise_var)?;
    let inputs = encoder_inputs(&cell.train, mode)?;
    let set = TrainingSet::new(
        inputs,
        Targets::Observations {
            ys: cell.train.y.clone(),
            problems,
        },
    )?;
    let n_val = tc.validation_size.clamp(1, set.len().saturating_sub(1).max(1));
    let (train, val) = set.split_validation(n_val)?;
    let mut rng = SeededRng::new(tc.seed);
    let params = VaeParams::new(
        train.inputs.cols(),
        cell.dictionary.cols(),
        tc.latent,
        tc.cap,
        mode,
        &mut rng,
    );
    let (params, history) = fit(params, &tc, &train, &val)?;
    log::info!(
        "csvae: {} epochs, best at {}, lr halved at {:?}",
        history.epochs,
        history.best_epoch,
        history.lr_halved_at
    );
    Ok(params)
}

fn lasso_base(cfg: &ExperimentConfig) -> Result<LassoConfig, EvalError> {
    let domain = LassoDomain::from_tag(&cfg.lasso.domain)
        .ok_or_else(|| EvalError::Config(format!("unknown lasso domain {}", cfg.lasso.domain)))?;
    Ok(LassoConfig {
        lambda: cfg.lasso.lambdas[0],
        domain,
        max_sweeps: cfg.lasso.max_sweeps,
        tol: cfg.lasso.tol,
    })
}

/// The dictionary Lasso works in: the pixel basis or the configured one.
pub fn lasso_dictionary(domain: LassoDomain, cell: &CellData) -> Arc<Matrix> {
    match domain {
        LassoDomain::Pixel => Arc::new(build_identity(cell.dictionary.rows()).into_matrix()),
        LassoDomain::Dictionary => Arc::clone(&cell.dictionary),
    }
}

fn tune_lasso(cfg: &ExperimentConfig, cell: &CellData) -> Result<LassoConfig, EvalError> {
    let base = lasso_base(cfg)?;
    let Some(tune) = cell.tune.as_ref().filter(|_| cfg.lasso.lambdas.len() > 1) else {
        return Ok(base);
    };
    let d = lasso_dictionary(base.domain, cell);
    let problems = problems_for(tune, &d, model_noise_var(tune))?;
    let xs = tune.x.as_ref().ok_or(EvalError::Config("tuning data has no ground truth".into()))?;
    let cases: Vec<LassoCase> = (0..tune.len())
        .map(|i| LassoCase {
            problem: problems.get(i),
            y: tune.observation(i),
            x: xs.row(i),
        })
        .collect();
    let t = lasso_tune(&cfg.lasso.lambdas, &cases, &base)?;
    log::info!("lasso: tuned lambda {} (scores {:?})", t.lambda, t.scores);
    Ok(LassoConfig {
        lambda: t.lambda,
        ..base
    })
}

/// Reconstructs test sample `i` of the cell.
pub fn reconstruct(trained: &Trained, cell: &CellData, i: usize) -> Result<Vec<f64>, EvalError> {
    let p = cell.test_problems.get(i);
    let y = cell.test.observation(i);
    match trained {
        Trained::Sbl { max_iters, tol } => Ok(sbl_reconstruct(p, y, *max_iters, *tol)?.x_hat),
        Trained::Lasso { config } => {
            let lp;
            let problem = match config.domain {
                LassoDomain::Dictionary => p,
                LassoDomain::Pixel => {
                    let a = cell.test.measurements.matrix(i);
                    lp = SensingProblem::new(a, lasso_dictionary(LassoDomain::Pixel, cell), p.noise_var())?;
                    &lp
                }
            };
            Ok(LassoSolver::new(problem).solve(y, config)?.x_hat)
        }
        Trained::Csgmm { model, map } => {
            let inf = CsgmmInference::new(model, p)?;
            let est = if *map { inf.map(y)? } else { inf.cme(y)? };
            Ok(est.x_hat)
        }
        Trained::Csvae {
            params,
            inputs,
            n_samples,
            map,
        } => {
            let input = inputs.row(i);
            let est = if *map {
                csvae_estimate_map(params, p, input, y)?
            } else {
                let mut rng = SeededRng::with_stream(split_seed(cell.seed, Split::Estimator), 0).fork(i as u64);
                csvae_estimate_cme(params, p, input, y, *n_samples, &mut rng)?
            };
            Ok(est.x_hat)
        }
    }
}

/// Reconstructs every test sample (in parallel, order preserved).
pub fn reconstruct_all(trained: &Trained, cell: &CellData) -> Result<Matrix, EvalError> {
    let rows = try_map_indexed(cell.test.len(), |i| reconstruct(trained, cell, i))?;
    let n = cell.test.n();
    let mut out = Matrix::zeros(rows.len(), n);
    for (i, r) in rows.iter().enumerate() {
        out.row_mut(i).copy_from_slice(r);
    }
    Ok(out)
}

/// Median wall-clock milliseconds of `reps` single reconstructions after
/// `warmup` untimed ones, cycling over the test samples.
pub fn time_reconstruction(trained: &Trained, cell: &CellData, warmup: usize, reps: usize) -> Result<Option<f64>, EvalError> {
    if reps == 0 {
        return Ok(None);
    }
    let n = cell.test.len();
    for k in 0..warmup {
        reconstruct(trained, cell, k % n)?;
    }
    let mut ms = Vec::with_capacity(reps);
    for k in 0..reps {
        let t = Instant::now();
        reconstruct(trained, cell, k % n)?;
        ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    ms.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    let mid = reps / 2;
    Ok(Some(if reps % 2 == 1 { ms[mid] } else { 0.5 * (ms[mid - 1] + ms[mid]) }))
}

/// Builds all data for grid point `(m, n_train, snr)` under `seed`.
pub fn prepare_cell(
    cfg: &ExperimentConfig,
    dictionary: &Dictionary,
    m: usize,
    n_train: usize,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<CellData, EvalError> {
    let train = make_bundle(cfg, seed, Split::Train, n_train, m, snr_db)?;
    let test = make_bundle(cfg, seed, Split::Test, cfg.n_test, m, snr_db)?;
    let tune = if cfg.methods.iter().any(|m| m == "lasso") && cfg.lasso.lambdas.len() > 1 && cfg.lasso.n_tune > 0 {
        Some(make_bundle(cfg, seed, Split::Tune, cfg.lasso.n_tune, m, snr_db)?)
    } else {
        None
    };
    CellData::new(dictionary, train, test, tune, seed)
}
