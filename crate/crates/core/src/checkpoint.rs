//! Versioned weight checkpoints: a JSON manifest mapping parameter names to
//! shapes and base64-encoded little-endian f64 arrays, plus the model
//! metadata needed to rebuild the module.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::intensive::{IfvVariant, IntensiveReader, MatchingKind};
use crate::model::{ModuleKind, ReaderModel};
use crate::sketchy::SketchyReader;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    /// base64 of the row-major values as little-endian f64 bytes
    data: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    module: ModuleKind,
    encoder: EncoderConfig,
    #[serde(default)]
    ifv_variant: Option<IfvVariant>,
    #[serde(default)]
    matching: Option<MatchingKind>,
    params: Vec<ParamEntry>,
}

pub fn save(path: impl AsRef<Path>, model: &ReaderModel) -> Result<()> {
    let params = model
        .named_params()
        .into_iter()
        .map(|(name, t)| {
            let mut bytes = Vec::with_capacity(t.numel() * 8);
            for v in t.to_vec() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            ParamEntry {
                name,
                shape: t.shape(),
                data: B64.encode(bytes),
            }
        })
        .collect();
    let file = CheckpointFile {
        format_version: FORMAT_VERSION,
        module: model.kind(),
        encoder: model.encoder_config().clone(),
        ifv_variant: model.ifv_variant(),
        matching: model.matching_kind(),
        params,
    };
    let path = path.as_ref();
    let text = serde_json::to_string(&file).expect("checkpoint serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load(path: impl AsRef<Path>) -> Result<ReaderModel> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    // rebuild the module skeleton, then overwrite every parameter by name
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = match file.module {
        ModuleKind::Sketchy => ReaderModel::Sketchy(SketchyReader::init(file.encoder, &mut rng)?),
        ModuleKind::Intensive => ReaderModel::Intensive(IntensiveReader::init(
            file.encoder,
            file.ifv_variant
                .ok_or_else(|| Error::Checkpoint("intensive checkpoint missing ifv_variant".into()))?,
            file.matching.unwrap_or(MatchingKind::None),
            &mut rng,
        )?),
    };
    let mut by_name: std::collections::HashMap<String, crate::tensor::Tensor> =
        model.named_params().into_iter().collect();
    for entry in &file.params {
        let t = by_name.remove(&entry.name).ok_or_else(|| {
            Error::Checkpoint(format!("unexpected parameter `{}`", entry.name))
        })?;
        if t.shape() != entry.shape {
            return Err(Error::Checkpoint(format!(
                "shape mismatch for `{}`: {:?} vs {:?}",
                entry.name,
                t.shape(),
                entry.shape
            )));
        }
        let bytes = B64
            .decode(&entry.data)
            .map_err(|e| Error::Checkpoint(format!("bad base64 for `{}`: {e}", entry.name)))?;
        if bytes.len() != t.numel() * 8 {
            return Err(Error::Checkpoint(format!(
                "wrong byte count for `{}`",
                entry.name
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        t.set_data(&values);
    }
    if !by_name.is_empty() {
        let missing: Vec<String> = by_name.into_keys().collect();
        return Err(Error::Checkpoint(format!(
            "checkpoint is missing parameters: {}",
            missing.join(", ")
        )));
    }
    Ok(model)
}
