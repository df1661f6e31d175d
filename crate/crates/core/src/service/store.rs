//! On-disk layout: `<root>/<session id>/session.json` (manifest) and
//! `<root>/<session id>/log.jsonl` (one observation per line).

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use super::session::{Session, SessionManifest};
use super::ServiceError;
use crate::learner::{ChoiceLog, Observation};

const MANIFEST: &str = "session.json";
const LOG: &str = "log.jsonl";

/// Session persistence; `None` keeps everything in memory.
#[derive(Debug, Clone, Default)]
pub struct Store {
    root: Option<PathBuf>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

impl Store {
    pub fn in_memory() -> Self {
        Self { root: None }
    }

    pub fn on_disk(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(crate::Error::from)?;
        Ok(Self { root: Some(root) })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    fn dir(&self, id: &str) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join(id))
    }

    pub fn save_manifest(&self, session: &Session) -> Result<(), ServiceError> {
        let Some(dir) = self.dir(&session.id) else {
            return Ok(());
        };
        fs::create_dir_all(&dir).map_err(crate::Error::from)?;
        let json = serde_json::to_vec_pretty(&session.manifest()).map_err(crate::Error::from)?;
        write_atomic(&dir.join(MANIFEST), &json).map_err(crate::Error::from)?;
        let log = dir.join(LOG);
        if !log.exists() {
            File::create(log).map_err(crate::Error::from)?;
        }
        Ok(())
    }

    pub fn append(&self, session_id: &str, obs: &Observation) -> Result<(), ServiceError> {
        let Some(dir) = self.dir(session_id) else {
            return Ok(());
        };
        let mut line = serde_json::to_vec(obs).map_err(crate::Error::from)?;
        line.push(b'\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(LOG))
            .map_err(crate::Error::from)?;
        f.write_all(&line).map_err(crate::Error::from)?;
        f.sync_data().map_err(crate::Error::from)?;
        Ok(())
    }

    /// Replaces the log file with `log`.
    pub fn rewrite_log(&self, session_id: &str, log: &ChoiceLog) -> Result<(), ServiceError> {
        let Some(dir) = self.dir(session_id) else {
            return Ok(());
        };
        write_atomic(&dir.join(LOG), log.to_jsonl().as_bytes()).map_err(crate::Error::from)?;
        Ok(())
    }

    pub fn load(&self, session_id: &str) -> Result<Session, ServiceError> {
        let dir = self
            .dir(session_id)
            .ok_or_else(|| ServiceError::SessionNotFound(session_id.to_string()))?;
        let manifest_path = dir.join(MANIFEST);
        if !manifest_path.exists() {
            return Err(ServiceError::SessionNotFound(session_id.to_string()));
        }
        let file = File::open(manifest_path).map_err(crate::Error::from)?;
        let manifest: SessionManifest =
            serde_json::from_reader(BufReader::new(file)).map_err(crate::Error::from)?;
        let log_path = dir.join(LOG);
        let log = if log_path.exists() {
            ChoiceLog::load(log_path)?
        } else {
            ChoiceLog::new(session_id)
        };
        Session::rebuild(manifest, log)
    }

    /// Every persisted session, sorted by id.
    pub fn load_all(&self) -> Result<Vec<Session>, ServiceError> {
        let Some(root) = &self.root else {
            return Ok(Vec::new());
        };
        let mut ids: Vec<String> = fs::read_dir(root)
            .map_err(crate::Error::from)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join(MANIFEST).exists())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        ids.sort();
        ids.iter().map(|id| self.load(id)).collect()
    }
}
