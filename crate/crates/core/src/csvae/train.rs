use super::{positive_variance, CsvaeError, EncoderInput, VaeParams, CAP_1D, DEFAULT_LATENT};
use crate::numerics::{Adam, Matrix, SeededRng, Tape, Var};
use crate::parallel::try_map_indexed;
use crate::posterior::{PosteriorOperator, SensingProblem};
use serde::{Deserialize, Serialize};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
// RNG streams derived from the training seed
const STREAM_EPOCH: u64 = 10;
const STREAM_VALIDATION: u64 = 11;

/// Sensing problems matching the rows of a training set.
#[derive(Clone, Debug)]
pub enum Problems {
    Shared(SensingProblem),
    PerSample(Vec<SensingProblem>),
}

impl Problems {
    pub fn get(&self, i: usize) -> &SensingProblem {
        match self {
            Problems::Shared(p) => p,
            Problems::PerSample(ps) => &ps[i],
        }
    }

    fn select(&self, idx: &[usize]) -> Problems {
        match self {
            Problems::Shared(p) => Problems::Shared(p.clone()),
            Problems::PerSample(ps) => Problems::PerSample(idx.iter().map(|&i| ps[i].clone()).collect()),
        }
    }
}

/// What each training row is scored against.
#[derive(Clone, Debug)]
pub enum Targets {
    /// Observations `y_i` (or signals `x_i` with `Φ = D`), scored by the
    /// Gaussian evidence `log N(y_i; 0, Φ Γ(z) Φᵀ + σ²I)`.
    Observations { ys: Matrix, problems: Problems },
    /// Ground-truth coefficients `s_i`, scored by `log N(s_i; 0, Γ(z))`.
    Coefficients(Matrix),
}

/// Encoder inputs paired with their targets, one row per sample.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub inputs: Matrix,
    pub targets: Targets,
}

impl TrainingSet {
    pub fn new(inputs: Matrix, targets: Targets) -> Result<Self, CsvaeError> {
        let n = inputs.rows();
        let rows = match &targets {
            Targets::Observations { ys, problems } => {
                if let Problems::PerSample(ps) = problems {
                    if ps.len() != n {
                        return Err(CsvaeError::ShapeMismatch {
                            expected: n,
                            found: ps.len(),
                        });
                    }
                }
                ys.rows()
            }
            Targets::Coefficients(s) => s.rows(),
        };
        if rows != n {
            return Err(CsvaeError::ShapeMismatch { expected: n, found: rows });
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> TrainingSet {
        let targets = match &self.targets {
            Targets::Observations { ys, problems } => Targets::Observations {
                ys: ys.select_rows(idx),
                problems: problems.select(idx),
            },
            Targets::Coefficients(s) => Targets::Coefficients(s.select_rows(idx)),
        };
        TrainingSet {
            inputs: self.inputs.select_rows(idx),
            targets,
        }
    }

    /// The last `n_val` rows become the validation set.
    pub fn split_validation(&self, n_val: usize) -> Result<(TrainingSet, TrainingSet), CsvaeError> {
        if n_val == 0 || n_val >= self.len() {
            return Err(CsvaeError::BadConfig(format!(
                "validation size {n_val} must be in 1..{}",
                self.len()
            )));
        }
        let cut = self.len() - n_val;
        let train: Vec<usize> = (0..cut).collect();
        let val: Vec<usize> = (cut..self.len()).collect();
        Ok((self.select(&train), self.select(&val)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub validation_size: usize,
    /// Epochs without validation improvement before the LR is halved
    /// (first time) or training stops (second time).
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub latent: usize,
    pub cap: usize,
    pub input_mode: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-5,
            batch_size: 64,
            validation_size: 100,
            patience: 5,
            max_epochs: 500,
            seed: 0,
            latent: DEFAULT_LATENT,
            cap: CAP_1D,
            input_mode: EncoderInput::Raw.tag().into(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CsvaeError> {
        let bad = |m: &str| Err(CsvaeError::BadConfig(m.into()));
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate must be non-negative");
        }
        if self.batch_size == 0 || self.latent == 0 || self.cap == 0 {
            return bad("batch size, latent dimension and width cap must be positive");
        }
        if EncoderInput::from_tag(&self.input_mode).is_none() {
            return bad("unknown encoder input mode");
        }
        Ok(())
    }

    pub fn encoder_input(&self) -> EncoderInput {
        EncoderInput::from_tag(&self.input_mode).unwrap_or(EncoderInput::Raw)
    }
}

/// Per-epoch record of a [`fit`] run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub train_elbo: Vec<f64>,
    /// Validation ELBO before training (index 0) and after each epoch.
    pub val_elbo: Vec<f64>,
    pub lr_halved_at: Option<usize>,
    pub best_epoch: usize,
    pub epochs: usize,
    pub stopped_early: bool,
}

/// Row values and gradients of the per-sample data term w.r.t. γ.
fn data_term(targets: &Targets, rows: &[usize], gamma: &Matrix) -> Result<(Vec<f64>, Matrix), CsvaeError> {
    let s = gamma.cols();
    let per_row = try_map_indexed(rows.len(), |b| -> Result<(f64, Vec<f64>), CsvaeError> {
        let g = gamma.row(b);
        let i = rows[b];
        match targets {
            Targets::Observations { ys, problems } => {
                let op = PosteriorOperator::new(problems.get(i), g)?;
                let post = op.apply(ys.row(i))?;
                let grad = op.loglik_gradient(&post);
                Ok((post.loglik, grad))
            }
            Targets::Coefficients(sm) => {
                let si = sm.row(i);
                let mut value = 0.0;
                let mut grad = Vec::with_capacity(s);
                for (&sj, &gj) in si.iter().zip(g) {
                    value -= 0.5 * (LN_2PI + gj.ln() + sj * sj / gj);
                    grad.push(0.5 * (sj * sj / (gj * gj) - 1.0 / gj));
                }
                Ok((value, grad))
            }
        }
    })?;
    let mut values = Vec::with_capacity(rows.len());
    let mut jac = Matrix::zeros(rows.len(), s);
    for (b, (v, g)) in per_row.into_iter().enumerate() {
        values.push(v);
        jac.row_mut(b).copy_from_slice(&g);
    }
    Ok((values, jac))
}

/// Records the negative mean ELBO of a batch; returns the loss var.
fn batch_loss(
    tape: &mut Tape,
    params: &VaeParams,
    set: &TrainingSet,
    rows: &[usize],
    eps: Matrix,
) -> Result<Var, CsvaeError> {
    let l = params.latent;
    let enc_vars = params.encoder.register(tape);
    let dec_vars = params.decoder.register(tape);
    let x = tape.leaf(set.inputs.select_rows(rows));
    let h = params.encoder.forward_tape(tape, &enc_vars, x)?;
    let mu = tape.col_slice(h, 0, l);
    let logvar = tape.col_slice(h, l, 2 * l);
    let half = tape.scale(logvar, 0.5);
    let std = tape.exp(half);
    let eps = tape.leaf(eps);
    let noise = tape.mul(std, eps)?;
    let z = tape.add(mu, noise)?;
    let out = params.decoder.forward_tape(tape, &dec_vars, z)?;
    let sp = tape.softplus(out);
    let gamma = tape.add_scalar(sp, super::GAMMA_OFFSET);
    let (values, jac) = data_term(&set.targets, rows, tape.value(gamma))?;
    let evidence = tape.row_functional(gamma, values, jac)?;
    // KL(q ‖ N(0, I)) = ½ Σ (μ² + σ² − 1 − log σ²)
    let mu2 = tape.square(mu);
    let var = tape.exp(logvar);
    let a = tape.add(mu2, var)?;
    let b = tape.sub(a, logvar)?;
    let kl = tape.sum_rows(b);
    let kl = tape.scale(kl, 0.5);
    let kl = tape.add_scalar(kl, -0.5 * l as f64);
    let elbo = tape.sub(evidence, kl)?;
    let total = tape.sum(elbo);
    Ok(tape.scale(total, -1.0 / rows.len() as f64))
}

/// Negative mean ELBO of the batch `rows` with fixed reparameterization
/// noise `eps` (`rows.len() × latent`).
pub fn batch_objective(params: &VaeParams, set: &TrainingSet, rows: &[usize], eps: &Matrix) -> Result<f64, CsvaeError> {
    let mut tape = Tape::new();
    let loss = batch_loss(&mut tape, params, set, rows, eps.clone())?;
    Ok(tape.scalar(loss))
}

/// [`batch_objective`] and its gradient, one matrix per parameter in
/// [`VaeParams::to_flat`] order.
pub fn batch_gradient(
    params: &VaeParams,
    set: &TrainingSet,
    rows: &[usize],
    eps: &Matrix,
) -> Result<(f64, Vec<Matrix>), CsvaeError> {
    let mut tape = Tape::new();
    let loss = batch_loss(&mut tape, params, set, rows, eps.clone())?;
    let value = tape.scalar(loss);
    Ok((value, tape.backward(loss)?))
}

/// One pass over `set` in shuffled mini-batches; returns the mean ELBO.
pub fn train_epoch(
    params: &mut VaeParams,
    adam: &mut Adam,
    config: &TrainConfig,
    set: &TrainingSet,
    rng: &mut SeededRng,
    epoch: usize,
) -> Result<f64, CsvaeError> {
    if set.is_empty() {
        return Err(CsvaeError::Empty);
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    rng.shuffle(&mut order);
    let mut flat = params.to_flat();
    let mut elbo_sum = 0.0;
    for (batch, rows) in order.chunks(config.batch_size).enumerate() {
        let eps = Matrix::from_fn(rows.len(), params.latent, |_, _| rng.normal());
        let mut tape = Tape::new();
        let loss = batch_loss(&mut tape, params, set, rows, eps)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(CsvaeError::NonFiniteLoss {
                epoch,
                batch,
                loss: value,
            });
        }
        let grads = tape.backward(loss)?;
        adam.step(&mut flat, &grads)?;
        params.set_flat(&flat);
        elbo_sum -= value * rows.len() as f64;
    }
    Ok(elbo_sum / set.len() as f64)
}

/// Mean single-sample ELBO over `set` with a fixed noise stream, so
/// repeated calls on the same parameters give the same value.
pub fn validation_elbo(params: &VaeParams, set: &TrainingSet, seed: u64) -> Result<f64, CsvaeError> {
    if set.is_empty() {
        return Err(CsvaeError::Empty);
    }
    let l = params.latent;
    let h = params.encoder.forward(&set.inputs)?;
    let base = SeededRng::with_stream(seed, STREAM_VALIDATION);
    let mut zs = Matrix::zeros(set.len(), l);
    let mut kl = vec![0.0; set.len()];
    for i in 0..set.len() {
        let row = h.row(i);
        let mut r = base.fork(i as u64);
        for j in 0..l {
            let (m, lv) = (row[j], row[l + j]);
            zs[(i, j)] = m + (0.5 * lv).exp() * r.normal();
            kl[i] += 0.5 * (m * m + lv.exp() - 1.0 - lv);
        }
    }
    let mut gamma = params.decoder.forward(&zs)?;
    for v in gamma.as_mut_slice() {
        *v = positive_variance(*v);
    }
    let rows: Vec<usize> = (0..set.len()).collect();
    let (values, _) = data_term(&set.targets, &rows, &gamma)?;
    Ok(values.iter().zip(&kl).map(|(v, k)| v - k).sum::<f64>() / set.len() as f64)
}

/// Adam on the negative ELBO with validation-driven LR halving and early
/// stopping; returns the parameters with the best validation ELBO.
pub fn fit(
    params: VaeParams,
    config: &TrainConfig,
    train: &TrainingSet,
    val: &TrainingSet,
) -> Result<(VaeParams, History), CsvaeError> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(CsvaeError::Empty);
    }
    let mut params = params;
    let mut adam = Adam::for_params(config.learning_rate, &params.to_flat());
    let mut history = History::default();
    let mut best = validation_elbo(&params, val, config.seed)?;
    history.val_elbo.push(best);
    let mut best_params = params.clone();
    let mut stale = 0;
    for epoch in 0..config.max_epochs {
        let mut rng = SeededRng::with_stream(config.seed, STREAM_EPOCH).fork(epoch as u64);
        let train_elbo = train_epoch(&mut params, &mut adam, config, train, &mut rng, epoch)?;
        let v = validation_elbo(&params, val, config.seed)?;
        history.train_elbo.push(train_elbo);
        history.val_elbo.push(v);
        history.epochs = epoch + 1;
        log::debug!("epoch {epoch}: train elbo {train_elbo:.4}, val elbo {v:.4}");
        if v > best {
            best = v;
            best_params = params.clone();
            history.best_epoch = epoch + 1;
            stale = 0;
            continue;
        }
        stale += 1;
        if stale > config.patience {
            if history.lr_halved_at.is_none() {
                adam.learning_rate *= 0.5;
                history.lr_halved_at = Some(epoch + 1);
                stale = 0;
            } else {
                history.stopped_early = true;
                break;
            }
        }
    }
    Ok((best_params, history))
}

/// Training on ground-truth coefficients: maximizes
/// `Σ log N(s_i; 0, Γ(z̃_i)) − KL(q(z|y_i) ‖ p(z))`. The term
/// `log p(y_i|s_i)` does not depend on the parameters and is dropped.
pub fn fit_groundtruth(
    params: VaeParams,
    config: &TrainConfig,
    inputs: &Matrix,
    coefficients: &Matrix,
) -> Result<(VaeParams, History), CsvaeError> {
    let set = TrainingSet::new(inputs.clone(), Targets::Coefficients(coefficients.clone()))?;
    let (train, val) = set.split_validation(config.validation_size.min(set.len().saturating_sub(1)).max(1))?;
    fit(params, config, &train, &val)
}
