use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::digest::{canonical_json, sha256_hex};
use crate::stages::StageId;

pub const STATE_FILE: &str = "run.json";
pub const LOCK_FILE: &str = "run.lock";
pub const CALL_LOG: &str = "calls.log";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Pending,
    Running,
    Complete,
    Failed,
}

impl std::fmt::Display for StageStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            StageStatus::Pending => "pending",
            StageStatus::Running => "running",
            StageStatus::Complete => "complete",
            StageStatus::Failed => "failed",
        })
    }
}

/// Next stage to execute, or `Done`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cursor {
    Stage(StageId),
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: StageId,
    pub status: StageStatus,
    /// Wall-clock seconds of the last attempt.
    #[serde(default)]
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Durable run state kept in `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub run_id: String,
    pub seed: u64,
    pub config_digest: String,
    pub cursor: Cursor,
    pub stages: Vec<StageRecord>,
    /// Relative path to `sha256-<hex>` of every committed artifact.
    pub manifest: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl RunState {
    pub fn new(run_id: String, seed: u64, config_digest: String) -> Self {
        Self {
            run_id,
            seed,
            config_digest,
            cursor: Cursor::Stage(StageId::Script),
            stages: StageId::ALL
                .iter()
                .map(|&stage| StageRecord { stage, status: StageStatus::Pending, seconds: 0.0, error: None })
                .collect(),
            manifest: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn status(&self, stage: StageId) -> StageStatus {
        self.stages[stage.position()].status
    }

    pub fn record_mut(&mut self, stage: StageId) -> &mut StageRecord {
        &mut self.stages[stage.position()]
    }

    pub fn is_done(&self) -> bool {
        self.cursor == Cursor::Done
    }

    pub fn failed_stage(&self) -> Option<StageId> {
        self.stages.iter().find(|r| r.status == StageStatus::Failed).map(|r| r.stage)
    }

    /// Checks the ordering invariant: a stage is running, complete or failed
    /// only if every earlier stage is complete, and the cursor points at the
    /// first incomplete stage.
    pub fn check(&self) -> Result<(), RunError> {
        if self.stages.len() != StageId::ALL.len()
            || self.stages.iter().zip(StageId::ALL).any(|(r, s)| r.stage != s)
        {
            return Err(RunError::State("stage list does not match the pipeline".into()));
        }
        let first_open = self.stages.iter().position(|r| r.status != StageStatus::Complete);
        if let Some(i) = first_open {
            if let Some(bad) = self.stages[i + 1..].iter().find(|r| r.status != StageStatus::Pending) {
                return Err(RunError::State(format!(
                    "stage {} is {:?} although {} is not complete",
                    bad.stage, bad.status, self.stages[i].stage
                )));
            }
        }
        let expected = first_open.map_or(Cursor::Done, |i| Cursor::Stage(StageId::ALL[i]));
        if self.cursor != expected {
            return Err(RunError::State(format!("cursor {:?} should be {expected:?}", self.cursor)));
        }
        Ok(())
    }

    pub fn load(run_dir: &Path) -> Result<Self, RunError> {
        let path = run_dir.join(STATE_FILE);
        let bytes = fs::read(&path).map_err(|e| RunError::io(&path, e))?;
        let state: RunState = serde_json::from_slice(&bytes)
            .map_err(|e| RunError::State(format!("{}: {e}", path.display())))?;
        state.check()?;
        Ok(state)
    }

    pub fn save(&self, run_dir: &Path) -> Result<(), RunError> {
        write_atomic(&run_dir.join(STATE_FILE), &canonical_json(self))
    }

    /// Re-hashes every manifest entry on disk.
    pub fn verify_manifest(&self, run_dir: &Path) -> Result<(), RunError> {
        for (rel, expected) in &self.manifest {
            let path = run_dir.join(rel);
            let found = match fs::read(&path) {
                Ok(bytes) => file_digest(&bytes),
                Err(_) => "missing".to_string(),
            };
            if &found != expected {
                return Err(RunError::ManifestMismatch {
                    path: rel.clone(),
                    expected: expected.clone(),
                    found,
                });
            }
        }
        Ok(())
    }
}

pub fn file_digest(bytes: &[u8]) -> String {
    format!("sha256-{}", sha256_hex(bytes))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    }
    let tmp = path.with_extension(format!("{}.tmp", path.extension().and_then(|e| e.to_str()).unwrap_or("")));
    let mut f = fs::File::create(&tmp).map_err(|e| RunError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| RunError::io(&tmp, e))?;
    f.sync_all().map_err(|e| RunError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| RunError::io(path, e))
}

/// Exclusive writer lock on a run directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(run_dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(run_dir).map_err(|e| RunError::io(run_dir, e))?;
        let path = run_dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(RunError::Locked(path)),
            Err(e) => Err(RunError::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
