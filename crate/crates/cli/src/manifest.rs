//! Run manifest: what was planned, what finished, and the inputs it ran
//! against.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MANIFEST_SCHEMA: &str = "econ-audit/manifest";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Pending,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub id: String,
    /// Relative to the output directory.
    pub path: String,
    pub agent: String,
    pub condition: String,
    pub replication: u32,
    pub profile_index: usize,
    pub status: SessionStatus,
    pub rounds_done: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub protocol_error: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_unix: Option<u64>,
}

/// Inputs that determine results beyond the config itself.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub seed: u64,
    /// Per-profile-index environment seeds.
    pub environment_seeds: Vec<u64>,
    pub templates: BTreeMap<String, String>,
    #[serde(default)]
    pub human_traces: BTreeMap<String, String>,
    #[serde(default)]
    pub oracle_reserves: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub version: u32,
    pub config_hash: String,
    pub created_unix: u64,
    pub updated_unix: u64,
    pub fingerprint: Fingerprint,
    pub sessions: Vec<SessionEntry>,
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(config_hash: String, fingerprint: Fingerprint, sessions: Vec<SessionEntry>) -> Self {
        let now = now_unix();
        RunManifest {
            schema: MANIFEST_SCHEMA.into(),
            version: MANIFEST_VERSION,
            config_hash,
            created_unix: now,
            updated_unix: now,
            fingerprint,
            sessions,
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::io(path.display().to_string(), e))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if m.schema != MANIFEST_SCHEMA || m.version != MANIFEST_VERSION {
            return Err(CliError::Config(format!(
                "{}: unsupported manifest {} v{}",
                path.display(),
                m.schema,
                m.version
            )));
        }
        Ok(m)
    }

    /// Writes via a temporary file and rename so a crash never leaves a
    /// half-written manifest.
    pub fn save(&mut self, dir: &Path) -> Result<()> {
        self.updated_unix = now_unix();
        let path = dir.join(MANIFEST_FILE);
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&tmp, text).map_err(|e| CliError::io(tmp.display().to_string(), e))?;
        std::fs::rename(&tmp, &path).map_err(|e| CliError::io(path.display().to_string(), e))
    }

    pub fn count(&self, status: SessionStatus) -> usize {
        self.sessions.iter().filter(|s| s.status == status).count()
    }

    pub fn failed(&self) -> impl Iterator<Item = &SessionEntry> {
        self.sessions
            .iter()
            .filter(|s| s.status == SessionStatus::Failed)
    }
}
