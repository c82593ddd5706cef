//! The two reading modules behind one handle, for training, checkpointing,
//! and prediction.

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::intensive::{IfvVariant, IntensiveReader, MatchingKind};
use crate::sketchy::SketchyReader;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModuleKind {
    Sketchy,
    Intensive,
}

impl std::str::FromStr for ModuleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<ModuleKind> {
        match s.to_ascii_lowercase().as_str() {
            "sketchy" => Ok(ModuleKind::Sketchy),
            "intensive" => Ok(ModuleKind::Intensive),
            other => Err(Error::Config(format!("unknown module `{other}`"))),
        }
    }
}

pub enum ReaderModel {
    Sketchy(SketchyReader),
    Intensive(IntensiveReader),
}

impl ReaderModel {
    pub fn kind(&self) -> ModuleKind {
        match self {
            ReaderModel::Sketchy(_) => ModuleKind::Sketchy,
            ReaderModel::Intensive(_) => ModuleKind::Intensive,
        }
    }

    pub fn encoder_config(&self) -> &EncoderConfig {
        match self {
            ReaderModel::Sketchy(m) => &m.encoder.config,
            ReaderModel::Intensive(m) => &m.encoder.config,
        }
    }

    pub fn ifv_variant(&self) -> Option<IfvVariant> {
        match self {
            ReaderModel::Sketchy(_) => None,
            ReaderModel::Intensive(m) => Some(m.ifv_variant()),
        }
    }

    pub fn matching_kind(&self) -> Option<MatchingKind> {
        match self {
            ReaderModel::Sketchy(_) => None,
            ReaderModel::Intensive(m) => Some(m.matching_kind()),
        }
    }

    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        match self {
            ReaderModel::Sketchy(m) => m.named_params(),
            ReaderModel::Intensive(m) => m.named_params(),
        }
    }
}
