//! Artifact writing: content digests, CSV/JSON helpers and sidecar
//! metadata. Result bodies never contain wall-clock data.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use ermf::{Error, Result};

/// FNV-1a over the payload, hex-encoded. Stable across platforms; used
/// to stamp artifacts with the exact configuration that produced them.
pub fn digest(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Digest of the config plus any imported input files.
pub fn inputs_digest(config_bytes: &[u8], imports: &[PathBuf]) -> Result<String> {
    let mut all = config_bytes.to_vec();
    for path in imports {
        all.extend_from_slice(&std::fs::read(path)?);
    }
    Ok(digest(&all))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Parse(format!("json encode: {e}")))?;
    write_bytes(path, &body)
}

/// Run metadata that would break byte-reproducibility if it lived in the
/// result bodies.
#[derive(Serialize)]
pub struct Sidecar {
    pub unix_time: u64,
    pub wall_secs: f64,
    pub config_digest: String,
    pub inputs_digest: String,
}

impl Sidecar {
    pub fn new(wall_secs: f64, config_digest: String, inputs_digest: String) -> Self {
        Sidecar {
            unix_time: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_secs,
            config_digest,
            inputs_digest,
        }
    }
}
