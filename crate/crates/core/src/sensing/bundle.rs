//! Binary dataset container.
//!
//! Layout: 8-byte magic `CSBUNDLE`, `u32` LE version, `u64` LE header
//! length, a JSON header describing metadata and the matrix sections, then
//! each section's entries as raw `f64` little-endian in row-major order.

use super::{DatasetBundle, MatrixMode, MeasurementSource, SensingError};
use crate::numerics::Matrix;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

pub const BUNDLE_MAGIC: &[u8; 8] = b"CSBUNDLE";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Section {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    signal_shape: Vec<usize>,
    count: usize,
    noise_var: f64,
    snr_db: Option<f64>,
    seed: u64,
    mode: MatrixMode,
    matrix_seed: u64,
    m: usize,
    n: usize,
    sections: Vec<Section>,
}

pub fn encode_bundle(b: &DatasetBundle) -> Vec<u8> {
    let mut sections: Vec<(&str, &Matrix)> = vec![("y", &b.y)];
    if let Some(x) = &b.x {
        sections.push(("x", x));
    }
    if let Some(s) = &b.s {
        sections.push(("s", s));
    }
    if let MeasurementSource::Fixed { matrix, .. } = &b.measurements {
        sections.push(("a", matrix));
    }
    let header = Header {
        kind: b.kind.clone(),
        signal_shape: b.signal_shape.clone(),
        count: b.len(),
        noise_var: b.noise_var,
        snr_db: b.snr_db,
        seed: b.seed,
        mode: b.measurements.mode(),
        matrix_seed: b.measurements.seed(),
        m: b.m(),
        n: b.n(),
        sections: sections
            .iter()
            .map(|(name, m)| Section {
                name: name.to_string(),
                rows: m.rows(),
                cols: m.cols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(BUNDLE_MAGIC);
    out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, m) in sections {
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_bundle(bytes: &[u8]) -> Result<DatasetBundle, SensingError> {
    let truncated = |expected: usize| SensingError::TruncatedFile {
        expected,
        found: bytes.len(),
    };
    if bytes.len() < 20 {
        return Err(truncated(20));
    }
    if &bytes[..8] != BUNDLE_MAGIC {
        return Err(SensingError::BadMagic(u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != BUNDLE_VERSION {
        return Err(SensingError::VersionMismatch {
            expected: BUNDLE_VERSION,
            found: version,
        });
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = 20usize.checked_add(hlen).ok_or_else(|| SensingError::Corrupt("header length".into()))?;
    if bytes.len() < body {
        return Err(truncated(body));
    }
    let header: Header =
        serde_json::from_slice(&bytes[20..body]).map_err(|e| SensingError::Corrupt(e.to_string()))?;
    let total = body + header.sections.iter().map(|s| s.rows * s.cols * 8).sum::<usize>();
    if bytes.len() < total {
        return Err(truncated(total));
    }
    let mut off = body;
    let mut y = None;
    let mut x = None;
    let mut s = None;
    let mut a = None;
    for sec in &header.sections {
        let len = sec.rows * sec.cols;
        let data: Vec<f64> = bytes[off..off + 8 * len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        off += 8 * len;
        let m = Matrix::from_vec(sec.rows, sec.cols, data)?;
        match sec.name.as_str() {
            "y" => y = Some(m),
            "x" => x = Some(m),
            "s" => s = Some(m),
            "a" => a = Some(m),
            other => return Err(SensingError::Corrupt(format!("unknown section {other}"))),
        }
    }
    let y = y.ok_or_else(|| SensingError::Corrupt("missing observations".into()))?;
    let measurements = match header.mode {
        MatrixMode::FixedShared => MeasurementSource::Fixed {
            seed: header.matrix_seed,
            matrix: Arc::new(a.ok_or_else(|| SensingError::Corrupt("missing measurement matrix".into()))?),
        },
        MatrixMode::PerSample => MeasurementSource::per_sample(header.m, header.n, header.matrix_seed)?,
    };
    if y.rows() != header.count || y.cols() != header.m {
        return Err(SensingError::Corrupt("observation shape disagrees with header".into()));
    }
    Ok(DatasetBundle {
        kind: header.kind,
        signal_shape: header.signal_shape,
        x,
        s,
        y,
        measurements,
        noise_var: header.noise_var,
        snr_db: header.snr_db,
        seed: header.seed,
    })
}

pub fn write_bundle(path: &Path, b: &DatasetBundle) -> Result<(), SensingError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_bundle(b))?;
    Ok(())
}

pub fn read_bundle(path: &Path) -> Result<DatasetBundle, SensingError> {
    decode_bundle(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::{generate_dataset, ObserveConfig, PiecewiseSmoothSpec, SignalFamily};

    fn sample(per_sample: bool) -> DatasetBundle {
        let fam = SignalFamily::Piecewise(PiecewiseSmoothSpec {
            n: 32,
            ..Default::default()
        });
        let cfg = ObserveConfig {
            m: 10,
            snr_db: Some(20.0),
            per_sample,
            seed: 3,
        };
        generate_dataset(&fam, 4, &cfg, None).unwrap()
    }

    #[test]
    fn roundtrip() {
        for per_sample in [false, true] {
            let b = sample(per_sample);
            let back = decode_bundle(&encode_bundle(&b)).unwrap();
            assert_eq!(back.y, b.y);
            assert_eq!(back.x, b.x);
            assert_eq!(back.measurements, b.measurements);
            assert_eq!(back.noise_var.to_bits(), b.noise_var.to_bits());
            assert_eq!(back.snr_db, b.snr_db);
        }
    }

    #[test]
    fn rejects_damage() {
        let bytes = encode_bundle(&sample(false));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_bundle(&bad), Err(SensingError::BadMagic(_))));
        let mut ver = bytes.clone();
        ver[8] = 9;
        assert!(matches!(decode_bundle(&ver), Err(SensingError::VersionMismatch { found: 9, .. })));
        assert!(matches!(
            decode_bundle(&bytes[..bytes.len() - 1]),
            Err(SensingError::TruncatedFile { .. })
        ));
        let mut json = bytes.clone();
        json[21] = b'!';
        assert!(matches!(decode_bundle(&json), Err(SensingError::Corrupt(_))));
    }
}
