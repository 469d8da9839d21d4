use super::EvalError;
use crate::numerics::Matrix;
use serde::{Deserialize, Serialize};

/// Per-sample normalized errors `‖x̂ − x‖²/N` with their mean and
/// (population) standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmseReport {
    pub per_sample: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn nmse(estimates: &Matrix, truths: &Matrix) -> Result<NmseReport, EvalError> {
    if estimates.shape() != truths.shape() {
        return Err(EvalError::LengthMismatch {
            expected: truths.shape(),
            found: estimates.shape(),
        });
    }
    let n = truths.cols() as f64;
    let per_sample: Vec<f64> = (0..truths.rows())
        .map(|i| {
            estimates
                .row(i)
                .iter()
                .zip(truths.row(i))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / n
        })
        .collect();
    let (mean, std) = mean_std(&per_sample);
    Ok(NmseReport { per_sample, mean, std })
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" Gaussian filtering of an `h × w` image.
fn filter_valid(img: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = taps.iter().enumerate().map(|(t, c)| c * img[i * w + j + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = taps.iter().enumerate().map(|(t, c)| c * rows[(i + t) * ow + j]).sum();
        }
    }
    out
}

/// Mean SSIM over all full windows, with an 11×11 Gaussian window
/// (σ = 1.5), K₁ = 0.01, K₂ = 0.03 and data range 1. Images smaller than
/// the window use the largest odd window that fits.
pub fn ssim(a: &[f64], b: &[f64], shape: (usize, usize)) -> Result<f64, EvalError> {
    let (h, w) = shape;
    if a.len() != h * w || b.len() != h * w {
        return Err(EvalError::LengthMismatch {
            expected: (h, w),
            found: (a.len(), b.len()),
        });
    }
    if h == 0 || w == 0 {
        return Err(EvalError::Empty);
    }
    let mut size = SSIM_WINDOW.min(h).min(w);
    if size % 2 == 0 {
        size -= 1;
    }
    let taps = gaussian_taps(size, SSIM_SIGMA);
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(a, h, w, &taps);
    let mu_b = filter_valid(b, h, w, &taps);
    let e_aa = filter_valid(&prod(a, a), h, w, &taps);
    let e_bb = filter_valid(&prod(b, b), h, w, &taps);
    let e_ab = filter_valid(&prod(a, b), h, w, &taps);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// Clamps every entry to `[0, 1]`.
pub fn clip_unit(m: &mut Matrix) {
    for v in m.as_mut_slice() {
        *v = v.clamp(0.0, 1.0);
    }
}
