//! SMDL1 model files.
//!
//! A model file is one JSON object:
//!
//! ```text
//! {"format": "SMDL1", "class": ..., "channel": ..., "dim": n,
//!  "hyperparams": {...}, "bias": b,
//!  "standardization": {"mean": B64, "scale": B64},
//!  "weights": B64}
//! ```
//!
//! where `B64` is standard base64 of `n` little-endian `f64` values. A
//! multi-class model is a directory of `NNN_<class>.smdl` files plus
//! `provenance.json` listing the channel, the files in class order and the
//! training ids.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Hyperparams, LinearModel, MultiModel, Standardization};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "SMDL1";
const PROVENANCE: &str = "provenance.json";

#[derive(Serialize, Deserialize)]
struct EncodedStandardization {
    mean: String,
    scale: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    class: String,
    channel: String,
    dim: usize,
    hyperparams: Hyperparams,
    bias: f64,
    standardization: EncodedStandardization,
    weights: String,
}

#[derive(Serialize, Deserialize)]
struct Provenance {
    channel: String,
    files: Vec<String>,
    training_ids: Vec<String>,
}

fn encode(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(text: &str, dim: usize, field: &str, location: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::parse(location, format!("{field}: {e}")))?;
    if bytes.len() != dim * 8 {
        return Err(Error::parse(
            location,
            format!("{field}: expected {} bytes for dimension {dim}, found {}", dim * 8, bytes.len()),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::parse(location, format!("{field}: non-finite value")));
    }
    Ok(values)
}

pub fn model_to_json(model: &LinearModel) -> String {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        class: model.class_name.clone(),
        channel: model.channel.clone(),
        dim: model.dim(),
        hyperparams: model.hyperparams,
        bias: model.bias,
        standardization: EncodedStandardization {
            mean: encode(&model.standardization.mean),
            scale: encode(&model.standardization.scale),
        },
        weights: encode(&model.weights),
    };
    let mut s = serde_json::to_string(&file).expect("model serializes");
    s.push('\n');
    s
}

pub fn model_from_json(text: &str, location: &str) -> Result<LinearModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::parse(location, e))?;
    if file.format != MODEL_FORMAT {
        return Err(Error::parse(location, format!("unsupported model format `{}`", file.format)));
    }
    file.hyperparams
        .validate()
        .map_err(|e| Error::parse(location, e.to_string()))?;
    if !file.bias.is_finite() {
        return Err(Error::parse(location, "non-finite bias"));
    }
    Ok(LinearModel {
        class_name: file.class,
        channel: file.channel,
        weights: decode(&file.weights, file.dim, "weights", location)?,
        bias: file.bias,
        hyperparams: file.hyperparams,
        standardization: Standardization {
            mean: decode(&file.standardization.mean, file.dim, "standardization.mean", location)?,
            scale: decode(&file.standardization.scale, file.dim, "standardization.scale", location)?,
        },
    })
}

pub fn save_model(model: &LinearModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LinearModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text, &path.display().to_string())
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Write a multi-class model into `dir` (created if needed).
pub fn save_multi_model(model: &MultiModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(model.models.len());
    for (i, m) in model.models.iter().enumerate() {
        let name = format!("{i:03}_{}.smdl", sanitize(&m.class_name));
        save_model(m, dir.join(&name))?;
        files.push(name);
    }
    let prov = Provenance {
        channel: model.channel.clone(),
        files,
        training_ids: model.training_ids.clone(),
    };
    let path = dir.join(PROVENANCE);
    let mut text = serde_json::to_string_pretty(&prov).expect("provenance serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn load_multi_model(dir: impl AsRef<Path>) -> Result<MultiModel> {
    let dir = dir.as_ref();
    let path = dir.join(PROVENANCE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let prov: Provenance = serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
    let models = prov
        .files
        .iter()
        .map(|f| load_model(dir.join(f)))
        .collect::<Result<Vec<_>>>()?;
    MultiModel::new(prov.channel, models, prov.training_ids)
}
