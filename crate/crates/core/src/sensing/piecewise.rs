//! Synthetic piecewise-smooth 1D signals: three segments of quadratics plus a
//! sinusoid, with random breakpoints.

use crate::numerics::SeededRng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseSmoothSpec {
    /// Number of equidistant samples on `[0, 4)`.
    pub n: usize,
    /// Polynomial coefficients take `±h_level` with probability ½ each.
    pub h_level: f64,
    /// Standard deviation of the sinusoid amplitudes.
    pub a_std: f64,
    /// Draw a separate amplitude for the third segment instead of reusing the
    /// second segment's.
    pub independent_third_amplitude: bool,
}

impl Default for PiecewiseSmoothSpec {
    fn default() -> Self {
        Self {
            n: 256,
            h_level: 0.4,
            a_std: 0.1,
            independent_third_amplitude: false,
        }
    }
}

/// All random quantities of one signal.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PiecewiseCoefficients {
    /// `h[segment][degree]`.
    pub h: [[f64; 3]; 3],
    /// Sinusoid amplitude per segment.
    pub a: [f64; 3],
    /// Sinusoid phase per segment.
    pub eta: [f64; 3],
    pub g1: f64,
    pub g2: f64,
}

impl PiecewiseSmoothSpec {
    pub fn draw_coefficients(&self, rng: &mut SeededRng) -> PiecewiseCoefficients {
        let mut c = PiecewiseCoefficients::default();
        for seg in c.h.iter_mut() {
            for h in seg.iter_mut() {
                *h = if rng.bernoulli(0.5) { self.h_level } else { -self.h_level };
            }
        }
        for a in c.a.iter_mut() {
            *a = self.a_std * rng.normal();
        }
        if !self.independent_third_amplitude {
            c.a[2] = c.a[1];
        }
        for eta in c.eta.iter_mut() {
            *eta = rng.uniform(0.0, 2.0 * PI);
        }
        c.g1 = rng.uniform(0.0, 2.0);
        c.g2 = rng.uniform(2.0, 4.0);
        c
    }

    /// Samples the signal at `t_j = 4j/n`.
    pub fn evaluate(&self, c: &PiecewiseCoefficients) -> Vec<f64> {
        (0..self.n)
            .map(|j| {
                let t = 4.0 * j as f64 / self.n as f64;
                let seg = if t < c.g1 {
                    0
                } else if t < c.g2 {
                    1
                } else {
                    2
                };
                let h = &c.h[seg];
                h[0] + h[1] * t + h[2] * t * t + c.a[seg] * (4.0 * PI * t + c.eta[seg]).sin()
            })
            .collect()
    }
}

/// `count` signals; signal `i` uses the stream `rng.fork(i)`.
pub fn generate_piecewise_smooth(spec: &PiecewiseSmoothSpec, count: usize, rng: &SeededRng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let mut r = rng.fork(i as u64);
            let c = spec.draw_coefficients(&mut r);
            spec.evaluate(&c)
        })
        .collect()
}
