//! Fixed dictionaries `D` (signal = `D·s`): identity, db4 wavelet synthesis
//! operators in 1D and separable 2D, and block-diagonal stacks.

pub mod wavelet;

use crate::numerics::Matrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;
pub use wavelet::WaveletFilterBank;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DictionaryError {
    #[error("level {level} too deep for {n} samples (max {max})")]
    LevelTooDeep { n: usize, level: usize, max: usize },
    #[error("signal too short: {0} samples, need at least 8")]
    TooShort(usize),
    #[error("block-diagonal dictionary needs at least one block")]
    NoBlocks,
    #[error("signal length {found} does not match dictionary length {expected}")]
    LengthMismatch { expected: usize, found: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DictionaryKind {
    Identity,
    Db4_1d,
    Db4_2d,
    BlockDiagonal,
}

impl DictionaryKind {
    pub fn tag(self) -> &'static str {
        match self {
            DictionaryKind::Identity => "identity",
            DictionaryKind::Db4_1d => "db4-1d",
            DictionaryKind::Db4_2d => "db4-2d",
            DictionaryKind::BlockDiagonal => "block-diagonal",
        }
    }
}

/// How a dictionary's analysis operator acts on a signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Analysis {
    Identity(usize),
    Wavelet1d { n: usize, level: usize },
    Wavelet2d { h: usize, w: usize, level: usize },
    Blocks(Vec<Analysis>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    matrix: Matrix,
    kind: DictionaryKind,
    level: usize,
    /// Signal shape, `[n]` for 1D or `[h, w]` for images (per block).
    shape: Vec<usize>,
    analysis: Analysis,
}

impl Dictionary {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn kind(&self) -> DictionaryKind {
        self.kind
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Signal dimension N.
    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    /// Coefficient dimension S.
    pub fn s(&self) -> usize {
        self.matrix.cols()
    }

    /// `D·c`.
    pub fn synthesize(&self, c: &[f64]) -> Vec<f64> {
        self.matrix.matvec(c).expect("coefficient length must equal S")
    }

    /// Coefficients `c` with `D·c = x`, computed by direct filtering rather
    /// than through `D`.
    pub fn analyze(&self, x: &[f64]) -> Result<Vec<f64>, DictionaryError> {
        if x.len() != self.n() {
            return Err(DictionaryError::LengthMismatch {
                expected: self.n(),
                found: x.len(),
            });
        }
        Ok(run_analysis(&self.analysis, x))
    }
}

fn analysis_len(a: &Analysis) -> usize {
    match a {
        Analysis::Identity(n) => *n,
        Analysis::Wavelet1d { n, .. } => *n,
        Analysis::Wavelet2d { h, w, .. } => h * w,
        Analysis::Blocks(bs) => bs.iter().map(analysis_len).sum(),
    }
}

fn run_analysis(a: &Analysis, x: &[f64]) -> Vec<f64> {
    let fb = WaveletFilterBank::db4();
    match a {
        Analysis::Identity(_) => x.to_vec(),
        Analysis::Wavelet1d { level, .. } => fb.wavedec(x, *level).concat(),
        Analysis::Wavelet2d { h, w, level } => {
            // rows first, then columns
            let sw = wavelet::band_lengths(*w, *level).iter().sum::<usize>();
            let sh = wavelet::band_lengths(*h, *level).iter().sum::<usize>();
            let mut tmp = vec![0.0; h * sw];
            for i in 0..*h {
                let c = fb.wavedec(&x[i * w..(i + 1) * w], *level).concat();
                tmp[i * sw..(i + 1) * sw].copy_from_slice(&c);
            }
            let mut out = vec![0.0; sh * sw];
            let mut col = vec![0.0; *h];
            for q in 0..sw {
                for i in 0..*h {
                    col[i] = tmp[i * sw + q];
                }
                let c = fb.wavedec(&col, *level).concat();
                for (p, v) in c.into_iter().enumerate() {
                    out[p * sw + q] = v;
                }
            }
            out
        }
        Analysis::Blocks(bs) => {
            let mut out = Vec::new();
            let mut off = 0;
            for b in bs {
                let n = analysis_len(b);
                out.extend(run_analysis(b, &x[off..off + n]));
                off += n;
            }
            out
        }
    }
}

fn check_level(n: usize, level: usize) -> Result<(), DictionaryError> {
    if n < wavelet::FILTER_LEN {
        return Err(DictionaryError::TooShort(n));
    }
    let max = wavelet::max_level(n);
    if level == 0 || level > max {
        return Err(DictionaryError::LevelTooDeep { n, level, max });
    }
    Ok(())
}

/// Dense 1D synthesis matrix; column j is the reconstruction of the j-th
/// canonical coefficient vector.
fn synthesis_1d(n: usize, level: usize) -> Matrix {
    let fb = WaveletFilterBank::db4();
    let lens = wavelet::band_lengths(n, level);
    let s: usize = lens.iter().sum();
    let mut d = Matrix::zeros(n, s);
    let mut j = 0;
    for (b, &len) in lens.iter().enumerate() {
        for k in 0..len {
            let mut bands: Vec<Vec<f64>> = lens.iter().map(|&l| vec![0.0; l]).collect();
            bands[b][k] = 1.0;
            let col = fb.waverec(&bands, n);
            for (i, v) in col.into_iter().enumerate() {
                d[(i, j)] = v;
            }
            j += 1;
        }
    }
    d
}

pub fn build_identity(n: usize) -> Dictionary {
    Dictionary {
        matrix: Matrix::identity(n),
        kind: DictionaryKind::Identity,
        level: 0,
        shape: vec![n],
        analysis: Analysis::Identity(n),
    }
}

pub fn build_db4_1d(n: usize, level: usize) -> Result<Dictionary, DictionaryError> {
    check_level(n, level)?;
    Ok(Dictionary {
        matrix: synthesis_1d(n, level),
        kind: DictionaryKind::Db4_1d,
        level,
        shape: vec![n],
        analysis: Analysis::Wavelet1d { n, level },
    })
}

/// Separable 2D operator `D_h ⊗ D_w` acting on row-major flattened images.
pub fn build_db4_2d(h: usize, w: usize, level: usize) -> Result<Dictionary, DictionaryError> {
    check_level(h, level)?;
    check_level(w, level)?;
    let dh = synthesis_1d(h, level);
    let dw = synthesis_1d(w, level);
    let (sh, sw) = (dh.cols(), dw.cols());
    let mut d = Matrix::zeros(h * w, sh * sw);
    for i in 0..h {
        for p in 0..sh {
            let a = dh[(i, p)];
            if a == 0.0 {
                continue;
            }
            for j in 0..w {
                let row = d.row_mut(i * w + j);
                let dwj = dw.row(j);
                for q in 0..sw {
                    row[p * sw + q] = a * dwj[q];
                }
            }
        }
    }
    Ok(Dictionary {
        matrix: d,
        kind: DictionaryKind::Db4_2d,
        level,
        shape: vec![h, w],
        analysis: Analysis::Wavelet2d { h, w, level },
    })
}

pub fn build_block_diagonal(blocks: &[Dictionary]) -> Result<Dictionary, DictionaryError> {
    let first = blocks.first().ok_or(DictionaryError::NoBlocks)?;
    if blocks.len() == 1 {
        return Ok(first.clone());
    }
    let n: usize = blocks.iter().map(Dictionary::n).sum();
    let s: usize = blocks.iter().map(Dictionary::s).sum();
    let mut d = Matrix::zeros(n, s);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        let m = b.matrix();
        for i in 0..m.rows() {
            d.row_mut(r0 + i)[c0..c0 + m.cols()].copy_from_slice(m.row(i));
        }
        r0 += m.rows();
        c0 += m.cols();
    }
    Ok(Dictionary {
        matrix: d,
        kind: DictionaryKind::BlockDiagonal,
        level: first.level,
        shape: first.shape.clone(),
        analysis: Analysis::Blocks(blocks.iter().map(|b| b.analysis.clone()).collect()),
    })
}

/// Dictionary selected by a CLI-style tag (`identity`, `db4-1d`, `db4-2d`)
/// for a signal of the given shape; `level = None` picks the deepest level.
pub fn build_by_tag(tag: &str, shape: &[usize], level: Option<usize>) -> Result<Dictionary, DictionaryError> {
    let n: usize = shape.iter().product();
    match tag {
        "identity" | "pixel" => Ok(build_identity(n)),
        "db4-1d" => build_db4_1d(n, level.unwrap_or_else(|| wavelet::max_level(n))),
        "db4-2d" if shape.len() == 2 => {
            let max = wavelet::max_level(shape[0].min(shape[1]));
            build_db4_2d(shape[0], shape[1], level.unwrap_or(max))
        }
        _ => Err(DictionaryError::LengthMismatch { expected: n, found: 0 }),
    }
}
