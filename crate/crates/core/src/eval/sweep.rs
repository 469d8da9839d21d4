//! Grid sweeps over `(M, N_t, SNR, seed)` with CSV and JSON outputs.
//!
//! Output files in `output_dir`:
//!
//! - `results.csv`: one row per method × grid point × seed (schema in
//!   [`RESULT_COLUMNS`]).
//! - `summary.csv`: one row per method × grid point, aggregated over seeds
//!   ([`SUMMARY_COLUMNS`]). Spreads are reported both across seeds and
//!   across pooled test samples.
//! - `per_sample.csv`: every test sample's nMSE (and SSIM for images).
//! - `manifest.json`: the full configuration, its hash and the schemas.
//! - `timings.csv`: training seconds and median reconstruction time. This
//!   is the only file that differs between reruns.

use super::config::ExperimentConfig;
use super::experiment::{
    is_image, make_dictionary, prepare_cell, reconstruct_all, signal_shape, time_reconstruction, train_method,
};
use super::metrics::{clip_unit, mean_std, nmse, ssim};
use super::EvalError;
use crate::numerics::RNG_ALGORITHM;
use crate::parallel::map_indexed;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const RESULT_COLUMNS: [&str; 13] = [
    "method",
    "dataset",
    "m",
    "n_train",
    "snr_db",
    "seed",
    "n_test",
    "nmse_mean",
    "nmse_std",
    "ssim_mean",
    "ssim_std",
    "status",
    "config_hash",
];

pub const SUMMARY_COLUMNS: [&str; 11] = [
    "method",
    "m",
    "n_train",
    "snr_db",
    "n_seeds",
    "nmse_mean",
    "nmse_std_seeds",
    "nmse_std_samples",
    "ssim_mean",
    "ssim_std_seeds",
    "ssim_std_samples",
];

pub const TIMING_COLUMNS: [&str; 8] = [
    "method",
    "m",
    "n_train",
    "snr_db",
    "seed",
    "train_seconds",
    "recon_ms_median",
    "reps",
];

/// Metrics of one method at one grid point and seed.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub method: String,
    pub m: usize,
    pub n_train: usize,
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub nmse: Vec<f64>,
    pub nmse_mean: f64,
    pub nmse_std: f64,
    /// Empty for one-dimensional signals.
    pub ssim: Vec<f64>,
    pub ssim_mean: Option<f64>,
    pub ssim_std: Option<f64>,
    pub train_seconds: f64,
    pub recon_ms: Option<f64>,
    /// `ok`, or the error that stopped this cell.
    pub status: String,
    pub config_hash: String,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub reports: Vec<MetricReport>,
    pub files: Vec<PathBuf>,
}

#[derive(Clone, Copy, Debug)]
struct GridPoint {
    m: usize,
    n_train: usize,
    snr_db: Option<f64>,
    seed: u64,
}

fn grid(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        for &snr in &cfg.sweep.snr_db {
            for &n_train in &cfg.sweep.n_train {
                for &m in &cfg.sweep.m {
                    out.push(GridPoint {
                        m,
                        n_train,
                        snr_db: if snr.is_finite() { Some(snr) } else { None },
                        seed,
                    });
                }
            }
        }
    }
    out
}

fn failed(cfg_hash: &str, method: &str, g: &GridPoint, err: &EvalError) -> MetricReport {
    MetricReport {
        method: method.to_string(),
        m: g.m,
        n_train: g.n_train,
        snr_db: g.snr_db,
        seed: g.seed,
        nmse: Vec::new(),
        nmse_mean: f64::NAN,
        nmse_std: f64::NAN,
        ssim: Vec::new(),
        ssim_mean: None,
        ssim_std: None,
        train_seconds: 0.0,
        recon_ms: None,
        status: format!("error: {err}").replace([',', '\n'], ";"),
        config_hash: cfg_hash.to_string(),
    }
}

fn run_cell(cfg: &ExperimentConfig, hash: &str, shape: &[usize], g: &GridPoint) -> Vec<MetricReport> {
    let dictionary = match make_dictionary(cfg, shape) {
        Ok(d) => d,
        Err(e) => return cfg.methods.iter().map(|m| failed(hash, m, g, &e)).collect(),
    };
    let cell = match prepare_cell(cfg, &dictionary, g.m, g.n_train, g.snr_db, g.seed) {
        Ok(c) => c,
        Err(e) => return cfg.methods.iter().map(|m| failed(hash, m, g, &e)).collect(),
    };
    let image = is_image(shape);
    let truths = cell.test.x.clone().expect("generated data keeps ground truth");
    cfg.methods
        .iter()
        .map(|method| {
            let run = || -> Result<MetricReport, EvalError> {
                let (trained, train_seconds) = train_method(method, cfg, &cell)?;
                let mut est = reconstruct_all(&trained, &cell)?;
                if image {
                    clip_unit(&mut est);
                }
                let nm = nmse(&est, &truths)?;
                let ssims = if image {
                    (0..est.rows())
                        .map(|i| ssim(est.row(i), truths.row(i), (shape[0], shape[1])))
                        .collect::<Result<Vec<_>, _>>()?
                } else {
                    Vec::new()
                };
                let (ssim_mean, ssim_std) = if image {
                    let (a, b) = mean_std(&ssims);
                    (Some(a), Some(b))
                } else {
                    (None, None)
                };
                let recon_ms = time_reconstruction(&trained, &cell, cfg.timing.warmup, cfg.timing.reps)?;
                log::info!(
                    "{method} m={} n_train={} seed={}: nmse {:.4e}",
                    g.m,
                    g.n_train,
                    g.seed,
                    nm.mean
                );
                Ok(MetricReport {
                    method: method.clone(),
                    m: g.m,
                    n_train: g.n_train,
                    snr_db: g.snr_db,
                    seed: g.seed,
                    nmse_mean: nm.mean,
                    nmse_std: nm.std,
                    nmse: nm.per_sample,
                    ssim: ssims,
                    ssim_mean,
                    ssim_std,
                    train_seconds,
                    recon_ms,
                    status: "ok".into(),
                    config_hash: hash.to_string(),
                })
            };
            run().unwrap_or_else(|e| {
                log::warn!("{method} m={} n_train={} seed={} failed: {e}", g.m, g.n_train, g.seed);
                failed(hash, method, g, &e)
            })
        })
        .collect()
}

/// Runs every grid cell (cells in parallel up to the worker limit) and
/// returns the reports in grid order.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<Vec<MetricReport>, EvalError> {
    cfg.validate()?;
    let shape = signal_shape(cfg)?;
    let hash = cfg.hash();
    let points = grid(cfg);
    let per_cell = map_indexed(points.len(), |i| run_cell(cfg, &hash, &shape, &points[i]));
    Ok(per_cell.into_iter().flatten().collect())
}

/// [`run_grid`] plus all output files.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome, EvalError> {
    let reports = run_grid(cfg)?;
    let files = write_outputs(cfg, &reports, Path::new(&cfg.output_dir))?;
    Ok(SweepOutcome { reports, files })
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.9e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

fn fmt_snr(v: Option<f64>) -> String {
    v.map(|s| format!("{s}")).unwrap_or_else(|| "inf".into())
}

pub fn results_csv(cfg: &ExperimentConfig, reports: &[MetricReport]) -> String {
    let mut out = RESULT_COLUMNS.join(",") + "\n";
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method,
            cfg.dataset.family,
            r.m,
            r.n_train,
            fmt_snr(r.snr_db),
            r.seed,
            r.nmse.len(),
            fmt_f(r.nmse_mean),
            fmt_f(r.nmse_std),
            fmt_opt(r.ssim_mean),
            fmt_opt(r.ssim_std),
            r.status,
            r.config_hash
        );
    }
    out
}

pub fn per_sample_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("method,m,n_train,snr_db,seed,index,nmse,ssim\n");
    for r in reports {
        for (i, v) in r.nmse.iter().enumerate() {
            let s = r.ssim.get(i).copied().map(fmt_f).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.method,
                r.m,
                r.n_train,
                fmt_snr(r.snr_db),
                r.seed,
                i,
                fmt_f(*v),
                s
            );
        }
    }
    out
}

/// Mean over seeds of the per-seed means, with spreads across seeds and
/// across all pooled test samples.
pub fn summary_csv(reports: &[MetricReport]) -> String {
    let mut keys: Vec<(String, usize, usize, String)> = Vec::new();
    for r in reports {
        let k = (r.method.clone(), r.m, r.n_train, fmt_snr(r.snr_db));
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out = SUMMARY_COLUMNS.join(",") + "\n";
    for k in keys {
        let group: Vec<&MetricReport> = reports
            .iter()
            .filter(|r| r.status == "ok" && (r.method.clone(), r.m, r.n_train, fmt_snr(r.snr_db)) == k)
            .collect();
        let seed_means: Vec<f64> = group.iter().map(|r| r.nmse_mean).collect();
        let pooled: Vec<f64> = group.iter().flat_map(|r| r.nmse.iter().copied()).collect();
        let (nm, nsd) = mean_std(&seed_means);
        let (_, npool) = mean_std(&pooled);
        let ssim_means: Vec<f64> = group.iter().filter_map(|r| r.ssim_mean).collect();
        let ssim_pool: Vec<f64> = group.iter().flat_map(|r| r.ssim.iter().copied()).collect();
        let (sm, ssd) = mean_std(&ssim_means);
        let (_, spool) = mean_std(&ssim_pool);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            k.0,
            k.1,
            k.2,
            k.3,
            group.len(),
            fmt_f(nm),
            fmt_f(nsd),
            fmt_f(npool),
            fmt_f(sm),
            fmt_f(ssd),
            fmt_f(spool)
        );
    }
    out
}

pub fn timings_csv(reports: &[MetricReport], reps: usize) -> String {
    let mut out = TIMING_COLUMNS.join(",") + "\n";
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.6},{},{}",
            r.method,
            r.m,
            r.n_train,
            fmt_snr(r.snr_db),
            r.seed,
            r.train_seconds,
            r.recon_ms.map(|v| format!("{v:.6}")).unwrap_or_default(),
            reps
        );
    }
    out
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    config_hash: String,
    rng: &'static str,
    version: &'static str,
    results_columns: &'static [&'static str],
    summary_columns: &'static [&'static str],
    timing_columns: &'static [&'static str],
    cells: usize,
    failed: Vec<String>,
}

pub fn manifest_json(cfg: &ExperimentConfig, reports: &[MetricReport]) -> String {
    let m = Manifest {
        config: cfg,
        config_hash: cfg.hash(),
        rng: RNG_ALGORITHM,
        version: env!("CARGO_PKG_VERSION"),
        results_columns: &RESULT_COLUMNS,
        summary_columns: &SUMMARY_COLUMNS,
        timing_columns: &TIMING_COLUMNS,
        cells: reports.len(),
        failed: reports
            .iter()
            .filter(|r| r.status != "ok")
            .map(|r| format!("{} m={} n_train={} seed={}: {}", r.method, r.m, r.n_train, r.seed, r.status))
            .collect(),
    };
    serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n"
}

pub fn write_outputs(cfg: &ExperimentConfig, reports: &[MetricReport], dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    std::fs::create_dir_all(dir)?;
    let files = [
        ("results.csv", results_csv(cfg, reports)),
        ("summary.csv", summary_csv(reports)),
        ("per_sample.csv", per_sample_csv(reports)),
        ("manifest.json", manifest_json(cfg, reports)),
        ("timings.csv", timings_csv(reports, cfg.timing.reps)),
    ];
    let mut out = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        out.push(p);
    }
    Ok(out)
}
