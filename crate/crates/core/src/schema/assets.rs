use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::SchemaError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssetKind {
    Image,
    Video,
    Audio,
    ModelAdapter,
}

impl AssetKind {
    pub fn is_timed(self) -> bool {
        matches!(self, AssetKind::Video | AssetKind::Audio)
    }

    pub fn extension(self) -> &'static str {
        match self {
            AssetKind::Image => "ppm",
            AssetKind::Video => "mvid",
            AssetKind::Audio => "wav",
            AssetKind::ModelAdapter => "adapter.json",
        }
    }
}

impl fmt::Display for AssetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            AssetKind::Image => "image",
            AssetKind::Video => "video",
            AssetKind::Audio => "audio",
            AssetKind::ModelAdapter => "model-adapter",
        })
    }
}

/// Handle to a stored media artifact. `uri` is relative to the run directory
/// and is empty until the asset has been materialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetRef {
    pub id: String,
    pub kind: AssetKind,
    pub uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_seconds: Option<f64>,
}

impl AssetRef {
    pub fn new(id: impl Into<String>, kind: AssetKind) -> Self {
        Self { id: id.into(), kind, uri: String::new(), duration_seconds: None }
    }

    pub fn with_duration(mut self, seconds: f64) -> Self {
        self.duration_seconds = Some(seconds);
        self
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        match (self.kind.is_timed(), self.duration_seconds) {
            (true, None) => {
                Err(SchemaError::Shape(format!("{} asset `{}` has no duration", self.kind, self.id)))
            }
            (false, Some(_)) => Err(SchemaError::Shape(format!(
                "{} asset `{}` must not carry a duration",
                self.kind, self.id
            ))),
            (true, Some(d)) if !(d >= 0.0) => {
                Err(SchemaError::Shape(format!("asset `{}` has negative duration", self.id)))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Text,
    T2i,
    I2v,
    T2a,
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            PromptKind::Text => "text",
            PromptKind::T2i => "t2i",
            PromptKind::I2v => "i2v",
            PromptKind::T2a => "t2a",
        })
    }
}

/// A generation request `p_i`: free-text body plus structured side inputs.
///
/// `metadata` carries machine-readable inputs (canonical JSON of upstream
/// artifacts, durations, catalogs) that offline backends read instead of
/// parsing the body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub kind: PromptKind,
    pub body: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attachments: Vec<AssetRef>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl PromptSpec {
    pub fn new(kind: PromptKind, body: impl Into<String>) -> Self {
        Self { kind, body: body.into(), attachments: Vec::new(), metadata: BTreeMap::new() }
    }

    pub fn text(body: impl Into<String>) -> Self {
        Self::new(PromptKind::Text, body)
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn with_attachment(mut self, asset: AssetRef) -> Self {
        self.attachments.push(asset);
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.body.trim().is_empty() {
            return Err(SchemaError::Shape(format!("{} prompt has an empty body", self.kind)));
        }
        if self.kind == PromptKind::I2v {
            let images = self.attachments.iter().filter(|a| a.kind == AssetKind::Image).count();
            if images != 1 || self.attachments.len() != 1 {
                return Err(SchemaError::Shape(format!(
                    "i2v prompt needs exactly one image attachment, found {}",
                    self.attachments.len()
                )));
            }
        }
        Ok(())
    }
}
