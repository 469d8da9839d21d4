//! db4 filter bank with symmetric (half-sample) boundary extension.
//!
//! Band lengths follow the decimated convention `⌊(n + 7)/2⌋`, so every level
//! of the decomposition is slightly redundant and the multi-level transform is
//! overcomplete.

pub const FILTER_LEN: usize = 8;

pub const DEC_LO: [f64; FILTER_LEN] = [
    -0.010597401784997278,
    0.032883011666982945,
    0.030841381835986965,
    -0.18703481171888114,
    -0.02798376941698385,
    0.6308807679295904,
    0.7148465705525415,
    0.23037781330885523,
];

pub const DEC_HI: [f64; FILTER_LEN] = [
    -0.23037781330885523,
    0.7148465705525415,
    -0.6308807679295904,
    -0.02798376941698385,
    0.18703481171888114,
    0.030841381835986965,
    -0.032883011666982945,
    -0.010597401784997278,
];

/// The db4 analysis/synthesis filters.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletFilterBank {
    pub dec_lo: [f64; FILTER_LEN],
    pub dec_hi: [f64; FILTER_LEN],
    pub rec_lo: [f64; FILTER_LEN],
    pub rec_hi: [f64; FILTER_LEN],
}

impl Default for WaveletFilterBank {
    fn default() -> Self {
        Self::db4()
    }
}

impl WaveletFilterBank {
    pub fn db4() -> Self {
        let mut rec_lo = DEC_LO;
        rec_lo.reverse();
        let mut rec_hi = DEC_HI;
        rec_hi.reverse();
        Self {
            dec_lo: DEC_LO,
            dec_hi: DEC_HI,
            rec_lo,
            rec_hi,
        }
    }

    /// One analysis step: `(approximation, detail)`, each of length `⌊(n+7)/2⌋`.
    pub fn analyze(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        let out_len = band_len(n);
        let mut lo = vec![0.0; out_len];
        let mut hi = vec![0.0; out_len];
        for o in 0..out_len {
            let (mut a, mut d) = (0.0, 0.0);
            for j in 0..FILTER_LEN {
                let v = x[symmetric_index(2 * o as isize + 1 - j as isize, n)];
                a += self.dec_lo[j] * v;
                d += self.dec_hi[j] * v;
            }
            lo[o] = a;
            hi[o] = d;
        }
        (lo, hi)
    }

    /// One synthesis step; output length `2·len − 6`.
    pub fn synthesize(&self, approx: &[f64], detail: &[f64]) -> Vec<f64> {
        assert_eq!(approx.len(), detail.len(), "band lengths must agree");
        let len = approx.len();
        let out_len = (2 * len).saturating_sub(FILTER_LEN - 2);
        let mut out = vec![0.0; out_len];
        for (o, slot) in out.iter_mut().enumerate() {
            // output[o] = Σ_k c[k]·rec[o + 6 − 2k], taps in 0..8
            let t = o + FILTER_LEN - 2;
            let k_lo = (t + 1).saturating_sub(FILTER_LEN).div_ceil(2);
            let k_hi = (t / 2).min(len - 1);
            let mut s = 0.0;
            for k in k_lo..=k_hi {
                let tap = t - 2 * k;
                s += approx[k] * self.rec_lo[tap] + detail[k] * self.rec_hi[tap];
            }
            *slot = s;
        }
        out
    }

    /// Multi-level decomposition, bands ordered `[cA_L, cD_L, …, cD_1]`.
    pub fn wavedec(&self, x: &[f64], level: usize) -> Vec<Vec<f64>> {
        let mut details = Vec::with_capacity(level);
        let mut a = x.to_vec();
        for _ in 0..level {
            let (lo, hi) = self.analyze(&a);
            details.push(hi);
            a = lo;
        }
        let mut bands = vec![a];
        bands.extend(details.into_iter().rev());
        bands
    }

    /// Inverse of [`wavedec`](Self::wavedec), truncated to `n` samples.
    pub fn waverec(&self, bands: &[Vec<f64>], n: usize) -> Vec<f64> {
        let mut a = bands[0].clone();
        for d in &bands[1..] {
            if a.len() == d.len() + 1 {
                a.pop();
            }
            a = self.synthesize(&a, d);
        }
        a.truncate(n);
        a
    }
}

/// Length of each band after one analysis step on `n` samples.
pub fn band_len(n: usize) -> usize {
    (n + FILTER_LEN - 1) / 2
}

/// Band lengths `[cA_L, cD_L, …, cD_1]` for an `n`-sample signal.
pub fn band_lengths(n: usize, level: usize) -> Vec<usize> {
    let mut details = Vec::with_capacity(level);
    let mut len = n;
    for _ in 0..level {
        len = band_len(len);
        details.push(len);
    }
    let mut out = vec![len];
    out.extend(details.into_iter().rev());
    out
}

/// Deepest admissible level for `n` samples (at least one).
pub fn max_level(n: usize) -> usize {
    if n < FILTER_LEN - 1 {
        return 0;
    }
    let ratio = n as f64 / (FILTER_LEN - 1) as f64;
    (ratio.log2().floor() as usize).max(1)
}

// Half-sample symmetric reflection: x[-1-m] = x[m], x[n+m] = x[n-1-m].
fn symmetric_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut r = i.rem_euclid(period);
    if r >= n {
        r = period - 1 - r;
    }
    r as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_mirror_relation() {
        let fb = WaveletFilterBank::db4();
        for k in 0..FILTER_LEN {
            let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
            assert!((fb.dec_hi[k] - sign * fb.dec_lo[FILTER_LEN - 1 - k]).abs() < 1e-15);
        }
        let sum: f64 = fb.dec_lo.iter().sum();
        assert!((sum - 2f64.sqrt()).abs() < 1e-12);
        let energy: f64 = fb.dec_lo.iter().map(|c| c * c).sum();
        assert!((energy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reflection_indices() {
        assert_eq!(symmetric_index(-1, 5), 0);
        assert_eq!(symmetric_index(-3, 5), 2);
        assert_eq!(symmetric_index(5, 5), 4);
        assert_eq!(symmetric_index(7, 5), 2);
        assert_eq!(symmetric_index(3, 5), 3);
    }

    #[test]
    fn single_step_roundtrip() {
        let fb = WaveletFilterBank::db4();
        for n in [8usize, 9, 16, 31, 64] {
            let x: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
            let (a, d) = fb.analyze(&x);
            assert_eq!(a.len(), (n + 7) / 2);
            let r = fb.synthesize(&a, &d);
            assert!(r.len() >= n);
            for i in 0..n {
                assert!((r[i] - x[i]).abs() < 1e-10, "n={n} i={i}");
            }
        }
    }

    #[test]
    fn lengths_for_256() {
        assert_eq!(max_level(256), 5);
        assert_eq!(band_lengths(256, 5), vec![14, 14, 22, 38, 69, 131]);
        assert_eq!(band_lengths(256, 5).iter().sum::<usize>(), 288);
        assert_eq!(max_level(8), 1);
        assert_eq!(max_level(28), 2);
    }
}
