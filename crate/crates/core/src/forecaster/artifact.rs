//! Model persistence: a versioned JSON envelope with a SHA-256 checksum over
//! the exact payload bytes.
//!
//! Numeric arrays serialize as decimal with shortest round-trip formatting,
//! so `load(save(a))` reproduces forecasts bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ModelConfig;
use crate::data::StaticStats;
use crate::net::ffn::FfnWeights;
use crate::net::NetworkWeights;

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum WeightsPayload {
    Lstm(NetworkWeights),
    Ffn(FfnWeights),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nmae: f64,
}

/// Everything needed to reproduce forecasts: configuration, weights,
/// normalization statistics, vocabulary, and the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub config: ModelConfig,
    pub weights: WeightsPayload,
    pub static_stats: StaticStats,
    /// Sorted system ids seen at training time; indexes the embedding table.
    pub vocabulary: Vec<String>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

#[derive(Debug)]
pub enum ArtifactError {
    Io(std::io::Error),
    /// Unreadable or checksum-failing file (truncation, bit rot, edits).
    Corrupt(String),
    VersionMismatch { found: u32, supported: u32 },
}

impl std::fmt::Display for ArtifactError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ArtifactError::Io(e) => write!(f, "artifact io error: {e}"),
            ArtifactError::Corrupt(m) => write!(f, "artifact corrupt: {m}"),
            ArtifactError::VersionMismatch { found, supported } => {
                write!(f, "artifact version {found} unsupported (this build reads {supported})")
            }
        }
    }
}

impl std::error::Error for ArtifactError {}

impl From<std::io::Error> for ArtifactError {
    fn from(e: std::io::Error) -> Self {
        ArtifactError::Io(e)
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    sha256: String,
    /// The artifact JSON, embedded verbatim so the checksum covers exact bytes.
    payload: String,
}

pub fn save(artifact: &ModelArtifact, path: &Path) -> Result<(), ArtifactError> {
    let payload = serde_json::to_string(artifact)
        .map_err(|e| ArtifactError::Corrupt(format!("serialize: {e}")))?;
    let sha256 = hex_digest(&payload);
    let env = Envelope { format: "helios-model".into(), version: ARTIFACT_VERSION, sha256, payload };
    let bytes = serde_json::to_string(&env)
        .map_err(|e| ArtifactError::Corrupt(format!("serialize envelope: {e}")))?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelArtifact, ArtifactError> {
    let bytes = std::fs::read_to_string(path)?;
    let env: Envelope = serde_json::from_str(&bytes)
        .map_err(|e| ArtifactError::Corrupt(format!("envelope parse: {e}")))?;
    if env.version != ARTIFACT_VERSION {
        return Err(ArtifactError::VersionMismatch {
            found: env.version,
            supported: ARTIFACT_VERSION,
        });
    }
    if hex_digest(&env.payload) != env.sha256 {
        return Err(ArtifactError::Corrupt("payload checksum mismatch".into()));
    }
    let artifact: ModelArtifact = serde_json::from_str(&env.payload)
        .map_err(|e| ArtifactError::Corrupt(format!("payload parse: {e}")))?;
    if artifact.format_version != ARTIFACT_VERSION {
        return Err(ArtifactError::VersionMismatch {
            found: artifact.format_version,
            supported: ARTIFACT_VERSION,
        });
    }
    Ok(artifact)
}

fn hex_digest(s: &str) -> String {
    let mut h = Sha256::new();
    h.update(s.as_bytes());
    let out = h.finalize();
    let mut hex = String::with_capacity(64);
    for b in out {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}
