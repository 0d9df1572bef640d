use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use rlfa_core::{AuditError, AuditSession, Population, Result};
use tokio::sync::Mutex;

pub type SessionHandle = Arc<Mutex<AuditSession>>;

/// Populations and sessions held by the server, optionally mirrored to a
/// directory as JSON so a restarted server picks up where it stopped.
///
/// Each session sits behind its own async mutex. Requests that mutate a
/// session hold the lock for the whole mutation, including the write to disk,
/// so rounds are applied and persisted in arrival order.
#[derive(Debug, Default)]
pub struct Store {
    populations: RwLock<HashMap<String, Arc<Population>>>,
    sessions: RwLock<HashMap<String, SessionHandle>>,
    persist_dir: Option<PathBuf>,
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn json_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.push((stem.to_string(), path.clone()));
        }
    }
    out.sort();
    Ok(out)
}

impl Store {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a persistence directory and loads every
    /// population and session found in it.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(dir.join("populations"))?;
        std::fs::create_dir_all(dir.join("sessions"))?;
        let mut populations = HashMap::new();
        for (id, path) in json_files(&dir.join("populations"))? {
            let pop: Population = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
            populations.insert(id, Arc::new(pop));
        }
        let mut sessions = HashMap::new();
        for (id, path) in json_files(&dir.join("sessions"))? {
            let session = AuditSession::from_json(&std::fs::read_to_string(&path)?)
                .map_err(|e| AuditError::Format(format!("{}: {e}", path.display())))?;
            sessions.insert(id, Arc::new(Mutex::new(session)));
        }
        tracing::info!(
            populations = populations.len(),
            sessions = sessions.len(),
            dir = %dir.display(),
            "loaded persisted state"
        );
        Ok(Self {
            populations: RwLock::new(populations),
            sessions: RwLock::new(sessions),
            persist_dir: Some(dir),
        })
    }

    pub fn persist_dir(&self) -> Option<&Path> {
        self.persist_dir.as_deref()
    }

    pub fn insert_population(&self, population: Population) -> Result<(String, Arc<Population>)> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        if let Some(dir) = &self.persist_dir {
            let path = dir.join("populations").join(format!("{id}.json"));
            write_atomic(&path, &serde_json::to_string(&population)?)?;
        }
        let population = Arc::new(population);
        self.populations
            .write()
            .expect("population map poisoned")
            .insert(id.clone(), population.clone());
        Ok((id, population))
    }

    pub fn population(&self, id: &str) -> Option<Arc<Population>> {
        self.populations
            .read()
            .expect("population map poisoned")
            .get(id)
            .cloned()
    }

    pub fn insert_session(&self, session: AuditSession) -> Result<SessionHandle> {
        self.save(&session)?;
        let id = session.id().to_string();
        let handle = Arc::new(Mutex::new(session));
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(id, handle.clone());
        Ok(handle)
    }

    pub fn session(&self, id: &str) -> Option<SessionHandle> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
    }

    /// Writes the session snapshot when persistence is enabled. Call with the
    /// session lock held.
    pub fn save(&self, session: &AuditSession) -> Result<()> {
        if let Some(dir) = &self.persist_dir {
            let path = dir.join("sessions").join(format!("{}.json", session.id()));
            write_atomic(&path, &session.to_json()?)?;
        }
        Ok(())
    }
}
