//! Model files.
//!
//! Layout: 8-byte magic `CSBMODEL`, `u32` LE version, `u64` LE header
//! length, a JSON header (method, config hash, dictionary metadata, tensor
//! names and shapes), then each tensor as raw `f64` little-endian values in
//! row-major order.

use super::EvalError;
use crate::csgmm::GammaMixture;
use crate::csvae::{EncoderInput, Mlp, VaeParams};
use crate::dictionary::{build_by_tag, Dictionary};
use crate::numerics::Matrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MODEL_MAGIC: &[u8; 8] = b"CSBMODEL";
pub const MODEL_VERSION: u32 = 1;
const PREAMBLE: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Csgmm(GammaMixture),
    Csvae(VaeParams),
}

impl Model {
    pub fn method(&self) -> &'static str {
        match self {
            Model::Csgmm(_) => "csgmm",
            Model::Csvae(_) => "csvae",
        }
    }

    pub fn s(&self) -> usize {
        match self {
            Model::Csgmm(m) => m.s(),
            Model::Csvae(p) => p.s(),
        }
    }
}

/// Enough to rebuild the dictionary a model was trained with.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryMeta {
    pub kind: String,
    pub shape: Vec<usize>,
    pub level: usize,
}

impl DictionaryMeta {
    pub fn of(d: &Dictionary) -> Self {
        Self {
            kind: d.kind().tag().to_string(),
            shape: d.shape().to_vec(),
            level: d.level(),
        }
    }

    pub fn build(&self) -> Result<Dictionary, EvalError> {
        Ok(build_by_tag(&self.kind, &self.shape, Some(self.level))?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub model: Model,
    pub dictionary: DictionaryMeta,
    /// Measurement dimension the model was trained for.
    pub m: usize,
    pub noise_var: f64,
    pub config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    method: String,
    config_hash: String,
    dictionary: DictionaryMeta,
    m: usize,
    noise_var: f64,
    latent: Option<usize>,
    input_mode: Option<String>,
    encoder_layers: Option<usize>,
    tensors: Vec<Tensor>,
}

fn tensors(model: &Model) -> Vec<(String, Matrix)> {
    match model {
        Model::Csgmm(g) => vec![
            ("weights".into(), Matrix::from_vec(1, g.k(), g.weights.clone()).expect("row")),
            ("gammas".into(), g.gammas.clone()),
        ],
        Model::Csvae(p) => {
            let mut out = Vec::new();
            for (prefix, net) in [("enc", &p.encoder), ("dec", &p.decoder)] {
                for (l, (w, b)) in net.weights.iter().zip(&net.biases).enumerate() {
                    out.push((format!("{prefix}.w{l}"), w.clone()));
                    out.push((format!("{prefix}.b{l}"), b.clone()));
                }
            }
            out
        }
    }
}

pub fn encode_model(file: &ModelFile) -> Vec<u8> {
    let ts = tensors(&file.model);
    let (latent, input_mode, encoder_layers) = match &file.model {
        Model::Csvae(p) => (
            Some(p.latent),
            Some(p.input_mode.tag().to_string()),
            Some(p.encoder.num_layers()),
        ),
        Model::Csgmm(_) => (None, None, None),
    };
    let header = Header {
        method: file.model.method().into(),
        config_hash: file.config_hash.clone(),
        dictionary: file.dictionary.clone(),
        m: file.m,
        noise_var: file.noise_var,
        latent,
        input_mode,
        encoder_layers,
        tensors: ts
            .iter()
            .map(|(name, m)| Tensor {
                name: name.clone(),
                rows: m.rows(),
                cols: m.cols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, m) in &ts {
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn corrupt(msg: impl Into<String>) -> EvalError {
    EvalError::Corrupt(msg.into())
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelFile, EvalError> {
    if bytes.len() < PREAMBLE {
        return Err(corrupt("file shorter than its preamble"));
    }
    if &bytes[..8] != MODEL_MAGIC {
        return Err(corrupt("not a model file (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(EvalError::VersionMismatch {
            expected: MODEL_VERSION,
            found: version,
        });
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = PREAMBLE.checked_add(hlen).filter(|&b| b <= bytes.len()).ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[PREAMBLE..body]).map_err(|e| corrupt(e.to_string()))?;
    let need: usize = header.tensors.iter().map(|t| t.rows * t.cols * 8).sum();
    if bytes.len() != body + need {
        return Err(corrupt(format!(
            "expected {} bytes of tensor data, found {}",
            need,
            bytes.len() - body
        )));
    }
    let mut off = body;
    let mut mats = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        let len = t.rows * t.cols;
        let data = bytes[off..off + 8 * len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        off += 8 * len;
        mats.push(Matrix::from_vec(t.rows, t.cols, data).map_err(|e| corrupt(e.to_string()))?);
    }
    let model = match header.method.as_str() {
        "csgmm" => {
            let [w, g]: [Matrix; 2] = mats.try_into().map_err(|_| corrupt("csgmm needs two tensors"))?;
            if w.rows() != 1 || w.cols() != g.rows() {
                return Err(corrupt("csgmm tensor shapes disagree"));
            }
            Model::Csgmm(GammaMixture {
                weights: w.into_vec(),
                gammas: g,
            })
        }
        "csvae" => {
            let enc_layers = header.encoder_layers.ok_or_else(|| corrupt("missing encoder layer count"))?;
            let latent = header.latent.ok_or_else(|| corrupt("missing latent dimension"))?;
            let mode = header
                .input_mode
                .as_deref()
                .and_then(EncoderInput::from_tag)
                .ok_or_else(|| corrupt("missing or unknown input mode"))?;
            if mats.len() % 2 != 0 || mats.len() / 2 <= enc_layers {
                return Err(corrupt("csvae tensor count"));
            }
            let mut it = mats.into_iter();
            let mut take = |layers: usize| {
                let mut net = Mlp {
                    weights: Vec::new(),
                    biases: Vec::new(),
                };
                for _ in 0..layers {
                    net.weights.push(it.next().expect("counted"));
                    net.biases.push(it.next().expect("counted"));
                }
                net
            };
            let encoder = take(enc_layers);
            let dec_layers = header.tensors.len() / 2 - enc_layers;
            let decoder = take(dec_layers);
            let chained = encoder.weights.windows(2).all(|w| w[0].cols() == w[1].rows())
                && decoder.weights.windows(2).all(|w| w[0].cols() == w[1].rows());
            if !chained || encoder.output_dim() != 2 * latent || decoder.input_dim() != latent {
                return Err(corrupt("csvae layer shapes do not chain"));
            }
            Model::Csvae(VaeParams {
                encoder,
                decoder,
                latent,
                input_mode: mode,
            })
        }
        other => return Err(corrupt(format!("unknown method {other}"))),
    };
    Ok(ModelFile {
        model,
        dictionary: header.dictionary,
        m: header.m,
        noise_var: header.noise_var,
        config_hash: header.config_hash,
    })
}

pub fn save_model(path: &Path, file: &ModelFile) -> Result<(), EvalError> {
    std::fs::write(path, encode_model(file))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile, EvalError> {
    decode_model(&std::fs::read(path)?)
}

/// Loads a model and warns (via `log`) when it was trained under a
/// different configuration hash; returns whether the hashes matched.
pub fn load_model_checked(path: &Path, expected_hash: &str) -> Result<(ModelFile, bool), EvalError> {
    let file = load_model(path)?;
    let matches = file.config_hash == expected_hash;
    if !matches {
        log::warn!(
            "model {} was trained with config {} but the current config hashes to {}",
            path.display(),
            file.config_hash,
            expected_hash
        );
    }
    Ok((file, matches))
}
