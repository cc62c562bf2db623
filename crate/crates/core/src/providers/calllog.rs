use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::CallKey;

/// One journal line of `calls.log`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub id: String,
    pub key: String,
    pub provider: String,
    pub request_digest: String,
    pub response_digest: String,
    pub latency_ms: u64,
    pub ok: bool,
}

/// Append-only call journal. Calls get sequential ids under a single lock;
/// when backed by a file every record is written as one JSON line as soon
/// as the call returns.
#[derive(Debug, Default)]
pub struct CallLog {
    inner: Mutex<Inner>,
}

#[derive(Debug, Default)]
struct Inner {
    next: u64,
    records: Vec<CallRecord>,
    path: Option<PathBuf>,
}

impl CallLog {
    /// Journal appending to `path`; numbering continues after any lines already there.
    pub fn with_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let next = match std::fs::read_to_string(&path) {
            Ok(s) => s.lines().filter(|l| !l.trim().is_empty()).count() as u64,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => 0,
            Err(e) => return Err(e),
        };
        Ok(Self { inner: Mutex::new(Inner { next, records: Vec::new(), path: Some(path) }) })
    }

    pub(crate) fn append(
        &self,
        provider: &str,
        key: &CallKey,
        request_digest: String,
        response_digest: String,
        latency: Duration,
        ok: bool,
    ) -> String {
        let mut inner = self.inner.lock().expect("call log lock poisoned");
        inner.next += 1;
        let record = CallRecord {
            id: format!("call-{:06}", inner.next),
            key: key.to_string(),
            provider: provider.to_string(),
            request_digest,
            response_digest,
            latency_ms: latency.as_millis() as u64,
            ok,
        };
        if let Some(path) = &inner.path {
            let line = serde_json::to_string(&record).expect("call record serializes");
            // The journal is best-effort; a write failure must not fail the call.
            if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(path) {
                let _ = writeln!(f, "{line}");
            }
        }
        let id = record.id.clone();
        inner.records.push(record);
        id
    }

    /// Calls made through this handle (not those already on disk).
    pub fn records(&self) -> Vec<CallRecord> {
        self.inner.lock().expect("call log lock poisoned").records.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("call log lock poisoned").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn read(path: impl AsRef<Path>) -> std::io::Result<Vec<CallRecord>> {
        let text = std::fs::read_to_string(path)?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str(l).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
            })
            .collect()
    }
}
