use crate::{AuditArgs, ConfigArg, DictArgs, EvaluateArgs, GenDataArgs, ReconstructArgs, SweepArgs, TrainArgs};
use anyhow::{bail, ensure, Context, Result};
use csbayes::baselines::{LassoConfig, LassoDomain};
use csbayes::dictionary::Dictionary;
use csbayes::eval::experiment::{encoder_inputs, is_image, make_bundle, model_noise_var, reconstruct_all};
use csbayes::eval::{
    audit_decoder, audit_mixture, clip_unit, load_model, load_model_checked, mean_std, nmse, run_sweep, save_model, ssim,
    train_method, CellData, ExperimentConfig, Model, ModelFile, Split, Trained,
};
use csbayes::sensing::{read_bundle, write_bundle, DatasetBundle};
use csbayes::{Matrix, SeededRng};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;

fn base_config(arg: &ConfigArg) -> Result<ExperimentConfig> {
    match &arg.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn apply_dict(cfg: &mut ExperimentConfig, d: &DictArgs) {
    if let Some(k) = &d.dict {
        cfg.dictionary.kind = k.clone();
    }
    if d.level.is_some() {
        cfg.dictionary.level = d.level;
    }
}

fn load_bundle(path: &Path) -> Result<DatasetBundle> {
    read_bundle(path).with_context(|| format!("reading bundle {}", path.display()))
}

fn dictionary_for(cfg: &ExperimentConfig, bundle: &DatasetBundle) -> Result<Dictionary> {
    Ok(csbayes::dictionary::build_by_tag(
        &cfg.dictionary.kind,
        &bundle.signal_shape,
        cfg.dictionary.level,
    )?)
}

pub fn gen_data(a: &GenDataArgs) -> Result<ExitCode> {
    let mut cfg = base_config(&a.base)?;
    if let Some(k) = &a.kind {
        cfg.dataset.family = k.clone();
    }
    if let Some(n) = a.n {
        cfg.dataset.n = n;
    }
    if let Some(s) = a.spikes {
        cfg.dataset.spikes = s;
    }
    if let Some(p) = &a.idx {
        cfg.dataset.path = Some(p.display().to_string());
    }
    if let Some(n) = a.n_test {
        cfg.n_test = n;
    }
    cfg.dataset.per_sample |= a.per_sample;
    cfg.sweep.n_train = vec![a.n_train];
    cfg.lasso.n_tune = a.n_tune;
    cfg.validate()?;
    let snr = a.snr_db.is_finite().then_some(a.snr_db);
    std::fs::create_dir_all(&a.out_dir)?;
    let mut splits = vec![("train", Split::Train, a.n_train), ("test", Split::Test, cfg.n_test)];
    if a.n_tune > 0 {
        splits.push(("tune", Split::Tune, a.n_tune));
    }
    for (name, split, count) in splits {
        let bundle = make_bundle(&cfg, a.seed, split, count, a.m, snr)?;
        let path = a.out_dir.join(format!("{name}.bin"));
        write_bundle(&path, &bundle)?;
        log::info!(
            "{}: {} samples, m = {}, n = {}, noise variance {:.3e}",
            path.display(),
            bundle.len(),
            bundle.m(),
            bundle.n(),
            bundle.noise_var
        );
    }
    Ok(ExitCode::SUCCESS)
}

pub fn train(a: &TrainArgs) -> Result<ExitCode> {
    let mut cfg = base_config(&a.base)?;
    apply_dict(&mut cfg, &a.dict);
    match a.method.as_str() {
        "csgmm" => {
            if let Some(k) = a.k {
                cfg.csgmm.k = k;
            }
            if let Some(t) = a.tol {
                cfg.csgmm.tol = t;
            }
            if let Some(n) = a.max_iters {
                cfg.csgmm.max_iters = n;
            }
        }
        "csvae" => {
            let t = &mut cfg.csvae.train;
            if let Some(v) = a.latent {
                t.latent = v;
            }
            if let Some(v) = a.lr {
                t.learning_rate = v;
            }
            if let Some(v) = a.batch {
                t.batch_size = v;
            }
            if let Some(v) = a.max_epochs {
                t.max_epochs = v;
            }
            if let Some(v) = a.patience {
                t.patience = v;
            }
            if let Some(v) = a.cap {
                t.cap = v;
            }
            if let Some(v) = &a.input_mode {
                t.input_mode = v.clone();
            }
            if let Some(v) = a.validation_size {
                t.validation_size = v;
            }
        }
        "sbl" | "lasso" => bail!("{} has no trainable prior; use `reconstruct` directly", a.method),
        other => bail!("unknown method {other}"),
    }
    cfg.validate()?;
    let bundle = load_bundle(&a.data)?;
    let dictionary = dictionary_for(&cfg, &bundle)?;
    let m = bundle.m();
    let noise_var = model_noise_var(&bundle);
    // train_method only reads the training slot of the cell.
    let cell = CellData::new(&dictionary, bundle.clone(), bundle, None, a.seed)?;
    let (trained, secs) = train_method(&a.method, &cfg, &cell)?;
    let model = match trained {
        Trained::Csgmm { model, .. } => Model::Csgmm(model),
        Trained::Csvae { params, .. } => Model::Csvae(params),
        _ => unreachable!("only trainable methods reach here"),
    };
    let file = ModelFile {
        model,
        dictionary: cell.dictionary_meta.clone(),
        m,
        noise_var,
        config_hash: cfg.hash(),
    };
    save_model(&a.out, &file)?;
    log::info!("trained {} in {secs:.2} s, saved {}", a.method, a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.split(',')
                .map(|v| v.trim().parse::<f64>().with_context(|| format!("line {}: bad value {v:?}", i + 1)))
                .collect()
        })
        .collect::<Result<_>>()?;
    ensure!(!rows.is_empty(), "{} holds no estimates", path.display());
    let n = rows[0].len();
    ensure!(rows.iter().all(|r| r.len() == n), "ragged rows in {}", path.display());
    Ok(Matrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

pub fn reconstruct(a: &ReconstructArgs) -> Result<ExitCode> {
    let mut cfg = base_config(&a.base)?;
    apply_dict(&mut cfg, &a.dict);
    let bundle = load_bundle(&a.data)?;
    let trained_model = match (a.method.as_str(), &a.model) {
        ("csgmm" | "csvae", Some(path)) => {
            // Only a config file gives a meaningful hash to compare against.
            let file = if a.base.config.is_some() {
                load_model_checked(path, &cfg.hash())?.0
            } else {
                load_model(path)?
            };
            ensure!(
                file.model.method() == a.method,
                "{} holds a {} model",
                path.display(),
                file.model.method()
            );
            ensure!(
                file.m == bundle.m(),
                "model trained for m = {}, data has m = {}",
                file.m,
                bundle.m()
            );
            Some(file)
        }
        ("csgmm" | "csvae", None) => bail!("--model is required for {}", a.method),
        _ => None,
    };
    let dictionary = match &trained_model {
        Some(f) => f.dictionary.build()?,
        None => dictionary_for(&cfg, &bundle)?,
    };
    let map = a.estimator.as_deref() == Some("map");
    if let Some(e) = a.estimator.as_deref() {
        ensure!(e == "cme" || e == "map", "estimator must be cme or map");
    }
    let trained = match (a.method.as_str(), trained_model) {
        ("sbl", _) => Trained::Sbl {
            max_iters: a.max_iters.unwrap_or(cfg.sbl.max_iters),
            tol: a.tol.unwrap_or(cfg.sbl.tol),
        },
        ("lasso", _) => {
            let domain_tag = a.domain.clone().unwrap_or(cfg.lasso.domain.clone());
            Trained::Lasso {
                config: LassoConfig {
                    lambda: a.lambda.unwrap_or(cfg.lasso.lambdas[0]),
                    domain: LassoDomain::from_tag(&domain_tag)
                        .with_context(|| format!("unknown lasso domain {domain_tag}"))?,
                    max_sweeps: a.max_iters.unwrap_or(cfg.lasso.max_sweeps),
                    tol: a.tol.unwrap_or(cfg.lasso.tol),
                },
            }
        }
        (_, Some(ModelFile { model: Model::Csgmm(model), .. })) => Trained::Csgmm { model, map },
        (_, Some(ModelFile { model: Model::Csvae(params), .. })) => {
            let inputs = encoder_inputs(&bundle, params.input_mode)?;
            Trained::Csvae {
                params,
                inputs,
                n_samples: a.n_samples.unwrap_or(cfg.csvae.n_samples),
                map,
            }
        }
        (other, None) => bail!("unknown method {other}"),
    };
    let cell = CellData::new(&dictionary, bundle.clone(), bundle, None, a.seed)?;
    let mut est = reconstruct_all(&trained, &cell)?;
    if is_image(&cell.shape) {
        clip_unit(&mut est);
    }
    write_matrix_csv(&a.out, &est)?;
    if let Some(x) = &cell.test.x {
        let r = nmse(&est, x)?;
        log::info!("{}: mean nMSE {:.4e} over {} samples", a.method, r.mean, est.rows());
    }
    log::info!("wrote {}", a.out.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct EvaluationReport {
    samples: usize,
    nmse_mean: f64,
    nmse_std: f64,
    ssim_mean: Option<f64>,
    ssim_std: Option<f64>,
    nmse: Vec<f64>,
    ssim: Option<Vec<f64>>,
}

pub fn evaluate(a: &EvaluateArgs) -> Result<ExitCode> {
    let bundle = load_bundle(&a.data)?;
    let truth = bundle.x.as_ref().context("bundle has no ground-truth signals")?;
    let mut est = read_matrix_csv(&a.estimates)?;
    let image = is_image(&bundle.signal_shape);
    if image {
        clip_unit(&mut est);
    }
    let r = nmse(&est, truth)?;
    let ssims = if image {
        let shape = (bundle.signal_shape[0], bundle.signal_shape[1]);
        Some(
            (0..est.rows())
                .map(|i| ssim(est.row(i), truth.row(i), shape))
                .collect::<Result<Vec<_>, _>>()?,
        )
    } else {
        None
    };
    let ss = ssims.as_deref().map(mean_std);
    let report = EvaluationReport {
        samples: est.rows(),
        nmse_mean: r.mean,
        nmse_std: r.std,
        ssim_mean: ss.map(|s| s.0),
        ssim_std: ss.map(|s| s.1),
        nmse: r.per_sample,
        ssim: ssims,
    };
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(p) = &a.out {
        std::fs::write(p, format!("{json}\n"))?;
    }
    let mut line = format!("nmse_mean={:.6e} nmse_std={:.6e}", report.nmse_mean, report.nmse_std);
    if let (Some(m), Some(s)) = (report.ssim_mean, report.ssim_std) {
        let _ = write!(line, " ssim_mean={m:.6} ssim_std={s:.6}");
    }
    println!("{line}");
    Ok(ExitCode::SUCCESS)
}

pub fn sweep(a: &SweepArgs) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    if let Some(d) = &a.output_dir {
        cfg.output_dir = d.display().to_string();
    }
    let out = run_sweep(&cfg)?;
    let failed = out.reports.iter().filter(|r| r.status != "ok").count();
    for f in &out.files {
        println!("{}", f.display());
    }
    if failed > 0 {
        log::warn!("{failed} of {} method runs failed; see results.csv", out.reports.len());
    }
    Ok(ExitCode::SUCCESS)
}

pub fn audit_bound(a: &AuditArgs) -> Result<ExitCode> {
    let file = load_model(&a.model)?;
    let mut rng = SeededRng::new(a.seed);
    let report = match &file.model {
        Model::Csgmm(g) => audit_mixture(g, a.draws, &mut rng)?,
        Model::Csvae(p) => audit_decoder(p, a.draws, &mut rng)?,
    };
    println!("{}", serde_json::to_string(&report)?);
    if report.violations > 0 {
        eprintln!("{} of {} draws exceed the sparsity envelope", report.violations, report.draws);
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}
