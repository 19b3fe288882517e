//! Versioned JSON model bundle with a SHA-256 content checksum.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{RaeError, RaeModel};
use crate::detector::Threshold;
use crate::preprocess::ScalerParams;
use crate::windowing::FeatureSchema;

pub const BUNDLE_FORMAT: &str = "rxads-model-bundle";
pub const BUNDLE_VERSION: u32 = 1;

/// Everything needed to score new captures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub schema: FeatureSchema,
    pub scaler: ScalerParams,
    pub model: RaeModel,
    pub threshold: Threshold,
    /// Window size (seconds) the features were extracted with.
    pub window_size: f64,
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    format: String,
    version: u32,
    content: ModelBundle,
    checksum: String,
}

fn checksum(content: &ModelBundle) -> Result<String, RaeError> {
    let bytes = serde_json::to_vec(content).map_err(|e| RaeError::Format(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl ModelBundle {
    pub fn to_json(&self) -> Result<String, RaeError> {
        let file = BundleFile {
            format: BUNDLE_FORMAT.to_string(),
            version: BUNDLE_VERSION,
            checksum: checksum(self)?,
            content: self.clone(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| RaeError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, RaeError> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| RaeError::Format(e.to_string()))?;
        if raw.get("format").and_then(|f| f.as_str()) != Some(BUNDLE_FORMAT) {
            return Err(RaeError::Format("not a model bundle".into()));
        }
        let version = raw
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| RaeError::Format("missing version".into()))?;
        if version != BUNDLE_VERSION as u64 {
            return Err(RaeError::VersionMismatch {
                found: version as u32,
                expected: BUNDLE_VERSION,
            });
        }
        let file: BundleFile =
            serde_json::from_value(raw).map_err(|e| RaeError::Format(e.to_string()))?;
        if checksum(&file.content)? != file.checksum {
            return Err(RaeError::ChecksumMismatch);
        }
        let b = file.content;
        b.model.validate()?;
        if b.schema.len() != b.model.input_dim() || b.scaler.len() != b.model.input_dim() {
            return Err(RaeError::Format("schema, scaler and model widths disagree".into()));
        }
        Ok(b)
    }
}

pub fn save_bundle(path: &Path, bundle: &ModelBundle) -> Result<(), RaeError> {
    fs::write(path, bundle.to_json()?)?;
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle, RaeError> {
    ModelBundle::from_json(&fs::read_to_string(path)?)
}
