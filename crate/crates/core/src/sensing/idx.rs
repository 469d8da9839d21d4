//! Reader for IDX image files (the MNIST container format).

use super::SensingError;
use crate::numerics::Matrix;
use std::path::Path;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;

/// Images as rows of a `count × (rows·cols)` matrix, scaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub images: Matrix,
}

pub fn load_idx_images(path: &Path) -> Result<IdxImages, SensingError> {
    let bytes = std::fs::read(path)?;
    parse_idx_images(&bytes)
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages, SensingError> {
    let word = |i: usize| -> Result<u32, SensingError> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or(SensingError::TruncatedFile {
                expected: 16,
                found: bytes.len(),
            })
    };
    let magic = word(0)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(SensingError::BadMagic(magic));
    }
    let count = word(1)? as usize;
    let rows = word(2)? as usize;
    let cols = word(3)? as usize;
    let pixels = rows * cols;
    let expected = 16 + count * pixels;
    if bytes.len() < expected || count == 0 {
        return Err(SensingError::TruncatedFile {
            expected: expected.max(17),
            found: bytes.len(),
        });
    }
    let data = bytes[16..expected].iter().map(|&b| b as f64 / 255.0).collect();
    Ok(IdxImages {
        rows,
        cols,
        images: Matrix::from_vec(count, pixels, data)?,
    })
}

/// Serializes images (values in `[0,1]`) back to IDX bytes; used for tests
/// and for writing small fixtures.
pub fn encode_idx_images(rows: usize, cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for w in [IDX_IMAGE_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&w.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}
