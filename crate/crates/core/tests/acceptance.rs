//! Acceptance suite. Runs every criterion at its stated tolerance and time
//! budget and prints one PASS/FAIL line each.
//!
//! `cargo test --release --test acceptance` runs all of them; pass criterion
//! numbers to run a subset (`cargo test --test acceptance -- 1 5 10`).

use csbayes::csgmm::{csgmm_fit, csgmm_fit_from, CsgmmConfig, CsgmmInference, GammaMixture};
use csbayes::csvae::{
    batch_gradient, batch_objective, elbo_sample, elbo_sample_reference, fit, latent_entropy, EncoderInput, Problems,
    Targets, TrainConfig, TrainingSet, VaeParams,
};
use csbayes::dictionary::build_by_tag;
use csbayes::eval::{audit_decoder, audit_mixture, run_grid, ExperimentConfig};
use csbayes::posterior::{
    logdet_posterior_cov, observation_cov, posterior_moments_fast, posterior_moments_reference, SensingProblem,
};
use csbayes::sbl::{sbl_em_step, sbl_reconstruct, SblState};
use csbayes::sensing::{PiecewiseSmoothSpec, SignalFamily};
use csbayes::{Matrix, SeededRng};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    // entries far below the vector's scale are compared against that scale
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-8 * scale))
        .fold(0.0, f64::max)
}

fn gaussian_matrix(rng: &mut SeededRng, m: usize, s: usize) -> Matrix {
    let scale = 1.0 / (m as f64).sqrt();
    Matrix::from_fn(m, s, |_, _| scale * rng.normal())
}

fn compressed_problem(rng: &mut SeededRng, m: usize, s: usize, noise_var: f64) -> SensingProblem {
    SensingProblem::new(Arc::new(gaussian_matrix(rng, m, s)), Arc::new(Matrix::identity(s)), noise_var).unwrap()
}

fn noisy(p: &SensingProblem, s: &[f64], rng: &mut SeededRng) -> Vec<f64> {
    let sd = p.noise_var().sqrt();
    p.phi().matvec(s).unwrap().into_iter().map(|v| v + sd * rng.normal()).collect()
}

// 1. Fast posterior, log-determinant and ELBO against their direct forms.
fn oracle_equivalence() -> Outcome {
    let mut rng = SeededRng::new(101);
    let (mut worst_moments, mut worst_logdet, mut worst_elbo) = (0.0f64, 0.0f64, 0.0f64);
    let problems = 40;
    for _ in 0..problems {
        let s = 2 + rng.below(63);
        let m = 1 + rng.below(32.min(s));
        let noise_var = 10f64.powf(rng.uniform(-4.0, 0.0));
        let p = compressed_problem(&mut rng, m, s, noise_var);
        let gamma: Vec<f64> = (0..s).map(|_| 10f64.powf(rng.uniform(-3.0, 1.0))).collect();
        let y = rng.normal_vec(m);
        let fast = posterior_moments_fast(&p, &gamma, &y).map_err(|e| e.to_string())?;
        let slow = posterior_moments_reference(&p, &gamma, &y).map_err(|e| e.to_string())?;
        worst_moments = worst_moments
            .max(max_rel(&fast.mean, &slow.mean))
            .max(max_rel(&fast.diag_cov, &slow.diag_cov));
        let obs = observation_cov(&p, &gamma).map_err(|e| e.to_string())?;
        let ld = logdet_posterior_cov(&p, &gamma, &obs).map_err(|e| e.to_string())?;
        worst_logdet = worst_logdet.max((ld - slow.logdet_cov).abs() / slow.logdet_cov.abs().max(1.0));

        let latent = 1 + rng.below(4);
        let params = VaeParams::new(m, s, latent, 16, EncoderInput::Raw, &mut rng);
        let z = rng.normal_vec(latent);
        let a = elbo_sample(&params, &p, &y, &y, &z).map_err(|e| e.to_string())?;
        let b = elbo_sample_reference(&params, &p, &y, &y, &z).map_err(|e| e.to_string())?;
        for (u, v) in [
            (a.reconstruction, b.reconstruction),
            (a.kl_coefficients, b.kl_coefficients),
            (a.total, b.total),
        ] {
            worst_elbo = worst_elbo.max((u - v).abs() / v.abs().max(1.0));
        }
    }
    check(
        worst_moments <= 1e-8 && worst_logdet <= 1e-8 && worst_elbo <= 1e-8,
        format!(
            "{problems} problems; max rel err: moments {worst_moments:.1e}, logdet {worst_logdet:.1e}, elbo {worst_elbo:.1e}"
        ),
    )
}

fn sparse_mixture_truth(rng: &mut SeededRng, k: usize, s: usize) -> GammaMixture {
    // each component switches on a few coordinates
    let gammas = Matrix::from_fn(k, s, |_, _| if rng.bernoulli(0.2) { rng.uniform(0.5, 2.0) } else { 1e-3 });
    GammaMixture {
        weights: vec![1.0 / k as f64; k],
        gammas,
    }
}

fn sample_mixture(truth: &GammaMixture, n: usize, rng: &mut SeededRng) -> Matrix {
    let mut out = Matrix::zeros(n, truth.s());
    for i in 0..n {
        let k = rng.below(truth.k());
        for j in 0..truth.s() {
            out[(i, j)] = truth.gamma(k)[j].sqrt() * rng.normal();
        }
    }
    out
}

fn observe_all(p: &SensingProblem, coeffs: &Matrix, rng: &mut SeededRng) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..coeffs.rows()).map(|i| noisy(p, coeffs.row(i), rng)).collect();
    Matrix::from_fn(rows.len(), p.m(), |i, j| rows[i][j])
}

// 2. CSGMM log-evidence never decreases.
fn csgmm_monotone() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut fits = 0;
    let mut reseeds = 0;
    for &k in &[1usize, 4, 8] {
        for seed in 0..10u64 {
            let mut rng = SeededRng::new(200 + seed);
            let p = compressed_problem(&mut rng, 16, 32, 1e-2);
            let truth = sparse_mixture_truth(&mut rng, 4, 32);
            let ys = observe_all(&p, &sample_mixture(&truth, 200, &mut rng), &mut rng);
            let cfg = CsgmmConfig {
                k,
                tol: 0.0,
                max_iters: 50,
                seed,
            };
            let (_, trace) = csgmm_fit(&p, &ys, &cfg).map_err(|e| e.to_string())?;
            reseeds += trace.reseeded.len();
            for w in trace.log_evidence.windows(2) {
                worst = worst.min(w[1] - w[0]);
            }
            fits += 1;
        }
    }
    check(
        worst >= -1e-8,
        format!("{fits} fits, smallest per-iteration change {worst:.3e}, {reseeds} re-seeded components"),
    )
}

fn vae_toy_set(rng: &mut SeededRng, p: &SensingProblem, truth: &GammaMixture, n: usize) -> TrainingSet {
    let ys = observe_all(p, &sample_mixture(truth, n, rng), rng);
    TrainingSet::new(
        ys.clone(),
        Targets::Observations {
            ys,
            problems: Problems::Shared(p.clone()),
        },
    )
    .unwrap()
}

// 3. No sampled prior density exceeds the sparsity envelope.
fn bound_audit() -> Outcome {
    let mut rng = SeededRng::new(300);
    let p = compressed_problem(&mut rng, 16, 32, 1e-2);
    let truth = sparse_mixture_truth(&mut rng, 4, 32);
    let ys = observe_all(&p, &sample_mixture(&truth, 400, &mut rng), &mut rng);
    let cfg = CsgmmConfig {
        k: 8,
        tol: 1e-4,
        max_iters: 100,
        seed: 3,
    };
    let (gmm, _) = csgmm_fit(&p, &ys, &cfg).map_err(|e| e.to_string())?;
    let a = audit_mixture(&gmm, 10_000, &mut rng).map_err(|e| e.to_string())?;

    let set = vae_toy_set(&mut rng, &p, &truth, 400);
    let (train, val) = set.split_validation(50).unwrap();
    let tc = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 32,
        max_epochs: 20,
        latent: 4,
        cap: 32,
        seed: 3,
        ..TrainConfig::default()
    };
    let init = VaeParams::new(16, 32, tc.latent, tc.cap, EncoderInput::Raw, &mut rng);
    let (vae, _) = fit(init, &tc, &train, &val).map_err(|e| e.to_string())?;
    let b = audit_decoder(&vae, 10_000, &mut rng).map_err(|e| e.to_string())?;
    check(
        a.violations == 0 && b.violations == 0 && a.draws == 10_000 && b.draws == 10_000,
        format!(
            "csgmm {}/{} violations (max log gap {:.2}), csvae {}/{} (max log gap {:.2})",
            a.violations, a.draws, a.max_log_gap, b.violations, b.draws, b.max_log_gap
        ),
    )
}

// 4. Tape gradient of the training loss against central differences.
fn gradient_fidelity() -> Outcome {
    let (s, m, latent, n) = (8, 6, 4, 5);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for point in 0..10u64 {
        let mut rng = SeededRng::new(400 + point);
        let p = compressed_problem(&mut rng, m, s, 0.05);
        let truth = sparse_mixture_truth(&mut rng, 2, s);
        let set = vae_toy_set(&mut rng, &p, &truth, n);
        let params = VaeParams::new(m, s, latent, 12, EncoderInput::Raw, &mut rng);
        let rows: Vec<usize> = (0..n).collect();
        let eps = Matrix::from_fn(n, latent, |_, _| rng.normal());
        let (_, grads) = batch_gradient(&params, &set, &rows, &eps).map_err(|e| e.to_string())?;
        let flat = params.to_flat();
        let h = 1e-6;
        for (pi, pm) in flat.iter().enumerate() {
            for k in 0..pm.as_slice().len() {
                let eval = |d: f64| {
                    let mut f = flat.clone();
                    f[pi].as_mut_slice()[k] += d;
                    let mut q = params.clone();
                    q.set_flat(&f);
                    batch_objective(&q, &set, &rows, &eps).unwrap()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = grads[pi].as_slice()[k];
                worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-4));
                checked += 1;
            }
        }
    }
    check(
        worst <= 1e-4,
        format!("{checked} partial derivatives at 10 points, max rel err {worst:.2e}"),
    )
}

// 5. CSGMM posterior mean and evidence against 2D quadrature.
fn cme_quadrature() -> Outcome {
    let mut worst_mean = 0.0f64;
    let mut worst_ev = 0.0f64;
    for case in 0..6u64 {
        let mut rng = SeededRng::new(500 + case);
        let a = Matrix::from_fn(1, 2, |_, _| rng.uniform(0.3, 1.5) * if rng.bernoulli(0.5) { 1.0 } else { -1.0 });
        let noise_var = rng.uniform(0.1, 0.5);
        let p = SensingProblem::new(Arc::new(a.clone()), Arc::new(Matrix::identity(2)), noise_var).unwrap();
        let w0 = rng.uniform(0.2, 0.8);
        let model = GammaMixture {
            weights: vec![w0, 1.0 - w0],
            gammas: Matrix::from_fn(2, 2, |_, _| rng.uniform(0.2, 2.0)),
        };
        let y = [rng.uniform(-2.0, 2.0)];
        let inf = CsgmmInference::new(&model, &p).map_err(|e| e.to_string())?;
        let est = inf.cme(&y).map_err(|e| e.to_string())?.x_hat;
        let ev = inf.log_evidence(&y).map_err(|e| e.to_string())?;

        // trapezoid rule on a box covering ±12 prior standard deviations
        let gmax = model.gammas.as_slice().iter().cloned().fold(0.0, f64::max);
        let half = 12.0 * gmax.sqrt();
        let nodes = 1601;
        let h = 2.0 * half / (nodes - 1) as f64;
        let density = |s0: f64, s1: f64| {
            let r = y[0] - a[(0, 0)] * s0 - a[(0, 1)] * s1;
            let lik = (-0.5 * r * r / noise_var).exp() / (2.0 * PI * noise_var).sqrt();
            let prior: f64 = (0..2)
                .map(|k| {
                    let g = model.gamma(k);
                    model.weights[k] * (-0.5 * (s0 * s0 / g[0] + s1 * s1 / g[1])).exp() / (2.0 * PI * (g[0] * g[1]).sqrt())
                })
                .sum();
            lik * prior
        };
        let (mut z, mut m0, mut m1) = (0.0, 0.0, 0.0);
        for i in 0..nodes {
            let s0 = -half + i as f64 * h;
            let wi = if i == 0 || i == nodes - 1 { 0.5 } else { 1.0 };
            for j in 0..nodes {
                let s1 = -half + j as f64 * h;
                let wj = if j == 0 || j == nodes - 1 { 0.5 } else { 1.0 };
                let f = wi * wj * density(s0, s1);
                z += f;
                m0 += f * s0;
                m1 += f * s1;
            }
        }
        let quad_mean = [m0 / z, m1 / z];
        let quad_ev = (z * h * h).ln();
        worst_mean = worst_mean.max((est[0] - quad_mean[0]).abs()).max((est[1] - quad_mean[1]).abs());
        worst_ev = worst_ev.max((ev - quad_ev).abs());
    }
    check(
        worst_mean <= 1e-4 && worst_ev <= 1e-6,
        format!("6 problems; max |E[x|y] err| {worst_mean:.1e}, max |log-evidence err| {worst_ev:.1e}"),
    )
}

/// Configuration of the desk-scale ordering experiment.
fn desk_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(
        r#"
output_dir = "target/acceptance-desk"
seeds = [0, 1, 2]
n_test = 40
methods = ["csvae", "sbl", "lasso"]

[dataset]
family = "piecewise"
n = 256
per_sample = true

[dictionary]
kind = "db4-1d"

[sweep]
m = [80, 100, 140]
n_train = [1000]
snr_db = [10.0]

[csvae]
learning_rate = 1e-3
batch_size = 64
validation_size = 100
patience = 5
max_epochs = 60
input_mode = "least-squares"
n_samples = 16

[sbl]
max_iters = 300
tol = 1e-6

[lasso]
n_tune = 40
tol = 1e-6

[timing]
reps = 0
"#,
    )
    .unwrap();
    cfg.output_dir = std::env::temp_dir().join("csbayes-desk").display().to_string();
    cfg
}

// 6. Desk-scale ordering on piecewise-smooth signals.
fn desk_ordering() -> Outcome {
    let cfg = desk_config();
    let reports = run_grid(&cfg).map_err(|e| e.to_string())?;
    if let Some(r) = reports.iter().find(|r| r.status != "ok") {
        return Err(format!("{} at m={} seed={}: {}", r.method, r.m, r.seed, r.status));
    }
    // method -> m -> mean over seeds
    let mut curves: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in &reports {
        curves
            .entry(r.method.clone())
            .or_default()
            .entry(r.m)
            .or_default()
            .push(r.nmse_mean);
    }
    let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let at = |method: &str, m: usize| mean(&curves[method][&m]);
    let mut ok = true;
    let mut parts = Vec::new();
    for &m in &cfg.sweep.m {
        let (v, s, l) = (at("csvae", m), at("sbl", m), at("lasso", m));
        ok &= v < s && v < l;
        parts.push(format!("M={m}: csvae {v:.2e} sbl {s:.2e} lasso {l:.2e}"));
    }
    for (method, curve) in &curves {
        let means: Vec<f64> = curve.values().map(mean).collect();
        if means.windows(2).any(|w| w[1] > w[0]) {
            ok = false;
            parts.push(format!("{method} not decreasing in M"));
        }
    }
    check(ok, parts.join("; "))
}

// 7. SBL recovers exactly sparse coefficients.
fn sbl_sparse_recovery() -> Outcome {
    let (s, m, k, trials) = (64, 32, 4, 50);
    let mut hits = 0;
    let mut errs = Vec::new();
    for t in 0..trials {
        let mut rng = SeededRng::new(700 + t as u64);
        let a = gaussian_matrix(&mut rng, m, s);
        let mut x = vec![0.0; s];
        let mut support: Vec<usize> = (0..s).collect();
        rng.shuffle(&mut support);
        for &j in &support[..k] {
            x[j] = rng.normal();
        }
        let clean = a.matvec(&x).unwrap();
        let power = clean.iter().map(|v| v * v).sum::<f64>() / m as f64;
        let noise_var = power / 1e4;
        let y: Vec<f64> = clean.iter().map(|v| v + noise_var.sqrt() * rng.normal()).collect();
        let p = SensingProblem::new(Arc::new(a), Arc::new(Matrix::identity(s)), noise_var).unwrap();
        let est = sbl_reconstruct(&p, &y, 1000, 1e-8).map_err(|e| e.to_string())?.x_hat;
        let e = est.iter().zip(&x).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / s as f64;
        if e < 1e-3 {
            hits += 1;
        }
        errs.push(e);
    }
    errs.sort_by(f64::total_cmp);
    check(
        hits * 10 >= trials * 9,
        format!("{hits}/{trials} trials below 1e-3 (median nMSE {:.1e})", errs[trials / 2]),
    )
}

fn welch_one_sided(a: &[f64], b: &[f64]) -> (f64, f64) {
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, var)
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let se2 = va / na + vb / nb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    // H1: mean(a) < mean(b)
    let p = StudentsT::new(0.0, 1.0, df).unwrap().cdf(t);
    (t, p)
}

// 8. Latent entropy separates the training family from another family.
fn entropy_ood() -> Outcome {
    let (n, m, n_train, n_eval) = (128, 48, 1000, 500);
    let mut rng = SeededRng::new(800);
    let d = Arc::new(build_by_tag("db4-1d", &[n], None).map_err(|e| e.to_string())?.into_matrix());
    let a = Arc::new(gaussian_matrix(&mut rng, m, n));
    let piecewise = SignalFamily::Piecewise(PiecewiseSmoothSpec {
        n,
        ..PiecewiseSmoothSpec::default()
    });
    let train_x = piecewise.generate(n_train, 1);
    let in_x = piecewise.generate(n_eval, 2);
    // the spikes family at its default settings
    let ood_x = SignalFamily::Spikes {
        n,
        k: 4,
        amplitude: 1.0,
    }
    .generate(n_eval, 3);
    // and rescaled to the training family's mean energy, reported only
    let energy = |x: &Matrix| x.as_slice().iter().map(|v| v * v).sum::<f64>() / x.rows() as f64;
    let matched_x = ood_x.scale((energy(&in_x) / energy(&ood_x)).sqrt());

    let clean = train_x.matmul(&a.transpose()).unwrap();
    let power = clean.as_slice().iter().map(|v| v * v).sum::<f64>() / clean.as_slice().len() as f64;
    // 20 dB
    let noise_var = power / 100.0;
    let measure = |x: &Matrix, rng: &mut SeededRng| {
        let mut y = x.matmul(&a.transpose()).unwrap();
        for v in y.as_mut_slice() {
            *v += noise_var.sqrt() * rng.normal();
        }
        y
    };
    let ys = measure(&train_x, &mut rng);
    let p = SensingProblem::new(Arc::clone(&a), Arc::clone(&d), noise_var).map_err(|e| e.to_string())?;
    let set = TrainingSet::new(
        ys.clone(),
        Targets::Observations {
            ys,
            problems: Problems::Shared(p),
        },
    )
    .map_err(|e| e.to_string())?;
    let (train, val) = set.split_validation(100).unwrap();
    let tc = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 64,
        max_epochs: 300,
        patience: 20,
        seed: 8,
        ..TrainConfig::default()
    };
    let init = VaeParams::new(m, d.cols(), tc.latent, tc.cap, EncoderInput::Raw, &mut rng);
    let (vae, history) = fit(init, &tc, &train, &val).map_err(|e| e.to_string())?;
    let entropies = |x: &Matrix, rng: &mut SeededRng| -> Result<Vec<f64>, String> {
        let y = measure(x, rng);
        (0..y.rows())
            .map(|i| latent_entropy(&vae, y.row(i)).map_err(|e| e.to_string()))
            .collect()
    };
    let h_in = entropies(&in_x, &mut rng)?;
    let h_ood = entropies(&ood_x, &mut rng)?;
    let h_matched = entropies(&matched_x, &mut rng)?;
    let (t, pval) = welch_one_sided(&h_in, &h_ood);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    check(
        pval < 0.01,
        format!(
            "mean entropy in-family {:.3}, spikes {:.3}; Welch t {t:.2}, one-sided p {pval:.1e}; \
             energy-matched spikes {:.3} ({} epochs)",
            mean(&h_in),
            mean(&h_ood),
            mean(&h_matched),
            history.epochs
        ),
    )
}

// 9. Identical configs give byte-identical CSVs.
fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = ExperimentConfig::from_toml(
        r#"
output_dir = "unused"
seeds = [5, 6]
n_test = 8
methods = ["csvae", "csgmm", "sbl", "lasso"]

[dataset]
family = "piecewise"
n = 64

[dictionary]
kind = "db4-1d"

[sweep]
m = [16, 24]
n_train = [60]
snr_db = [10.0, inf]

[csvae]
learning_rate = 1e-3
batch_size = 16
validation_size = 10
max_epochs = 4
cap = 32
latent = 4
n_samples = 8

[csgmm]
k = 4
max_iters = 20

[sbl]
max_iters = 100

[lasso]
lambdas = [0.001, 0.01, 0.1]
n_tune = 8

[timing]
reps = 0
"#,
    )
    .map_err(|e| e.to_string())?;
    cfg.output_dir = dir.path().display().to_string();
    let files = ["results.csv", "summary.csv", "per_sample.csv", "manifest.json"];
    let read_all = || -> Result<Vec<Vec<u8>>, String> {
        csbayes::eval::run_sweep(&cfg).map_err(|e| e.to_string())?;
        files
            .iter()
            .map(|f| std::fs::read(dir.path().join(f)).map_err(|e| e.to_string()))
            .collect()
    };
    let first = read_all()?;
    let second = read_all()?;
    let differing: Vec<&str> = files
        .iter()
        .zip(first.iter().zip(&second))
        .filter(|(_, (a, b))| a != b)
        .map(|(f, _)| *f)
        .collect();
    let rows = String::from_utf8_lossy(&first[0]).lines().count() - 1;
    check(
        differing.is_empty(),
        format!("{rows} result rows over 4 methods; differing files: {differing:?}"),
    )
}

// 10. K = 1 CSGMM on one observation follows the SBL trajectory.
fn em_sbl_equivalence() -> Outcome {
    let mut rng = SeededRng::new(1000);
    let p = compressed_problem(&mut rng, 12, 24, 1e-2);
    let mut s = vec![0.0; 24];
    for j in [2, 7, 19] {
        s[j] = rng.normal();
    }
    let y = noisy(&p, &s, &mut rng);
    let ys = Matrix::from_vec(1, 12, y.clone()).unwrap();
    let mut state = SblState::new(24);
    let mut worst = 0.0f64;
    for t in 1..=20 {
        state = sbl_em_step(&state, &p, &y).map_err(|e| e.to_string())?;
        let init = GammaMixture {
            weights: vec![1.0],
            gammas: Matrix::from_vec(1, 24, vec![1.0; 24]).unwrap(),
        };
        let (model, _) = csgmm_fit_from(init, &p, &ys, 0.0, t).map_err(|e| e.to_string())?;
        for (a, b) in model.gamma(0).iter().zip(&state.gamma) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    check(worst <= 1e-12, format!("20 iterations, max γ difference {worst:.1e}"))
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "oracle equivalence", budget: Duration::from_secs(10), run: oracle_equivalence },
        Criterion { id: 2, name: "csgmm log-evidence monotone", budget: Duration::from_secs(60), run: csgmm_monotone },
        Criterion { id: 3, name: "sparsity bound audit", budget: Duration::from_secs(30), run: bound_audit },
        Criterion { id: 4, name: "gradient fidelity", budget: Duration::from_secs(60), run: gradient_fidelity },
        Criterion { id: 5, name: "cme against quadrature", budget: Duration::from_secs(60), run: cme_quadrature },
        Criterion { id: 6, name: "desk-scale ordering", budget: Duration::from_secs(1800), run: desk_ordering },
        Criterion { id: 7, name: "sbl sparse recovery", budget: Duration::from_secs(120), run: sbl_sparse_recovery },
        Criterion { id: 8, name: "latent entropy separates families", budget: Duration::from_secs(600), run: entropy_ood },
        Criterion { id: 9, name: "byte-identical sweep reruns", budget: Duration::from_secs(300), run: reproducibility },
        Criterion { id: 10, name: "csgmm K=1 equals sbl", budget: Duration::from_secs(60), run: em_sbl_equivalence },
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let result = std::panic::catch_unwind(c.run).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let in_budget = elapsed <= c.budget;
        let (status, detail) = match (&result, in_budget) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("{d}; over the {:?} budget", c.budget)),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("[{status}] criterion {:>2} {}: {detail} ({:.1} s)", c.id, c.name, elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
