//! One JSON file per session under the data directory, written atomically.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use layrev_core::orchestrator::SessionState;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSession {
    pub token: String,
    pub backend: String,
    /// Unix seconds.
    pub created_at: u64,
    pub updated_at: u64,
    pub state: SessionState,
}

pub fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
    ttl: Duration,
}

fn valid_token(token: &str) -> bool {
    !token.is_empty() && token.len() <= 64 && token.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>, ttl: Duration) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, ttl })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, token: &str) -> Option<PathBuf> {
        valid_token(token).then(|| self.dir.join(format!("{token}.json")))
    }

    fn expired(&self, s: &ApiSession, now: u64) -> bool {
        now.saturating_sub(s.updated_at) > self.ttl.as_secs()
    }

    /// Loads a live session; expired sessions are deleted and reported missing.
    pub fn get(&self, token: &str) -> std::io::Result<Option<ApiSession>> {
        let Some(path) = self.path(token) else {
            return Ok(None);
        };
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        let session: ApiSession = serde_json::from_slice(&bytes).map_err(std::io::Error::other)?;
        if self.expired(&session, now_secs()) {
            let _ = std::fs::remove_file(&path);
            return Ok(None);
        }
        Ok(Some(session))
    }

    pub fn put(&self, session: &ApiSession) -> std::io::Result<()> {
        let path = self.path(&session.token).ok_or_else(|| std::io::Error::other("invalid session token"))?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer(&mut tmp, session).map_err(std::io::Error::other)?;
        tmp.flush()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }

    /// Every live session on disk.
    pub fn list(&self) -> std::io::Result<Vec<ApiSession>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let path = entry?.path();
            let Some(token) = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix(".json")) else {
                continue;
            };
            if let Some(s) = self.get(token)? {
                out.push(s);
            }
        }
        out.sort_by(|a, b| a.token.cmp(&b.token));
        Ok(out)
    }

    /// Deletes expired sessions, returning how many were removed.
    pub fn sweep(&self) -> std::io::Result<usize> {
        let before = std::fs::read_dir(&self.dir)?.filter(|e| e.as_ref().is_ok_and(|e| e.path().extension().is_some_and(|x| x == "json"))).count();
        let live = self.list()?.len();
        Ok(before - live)
    }
}
