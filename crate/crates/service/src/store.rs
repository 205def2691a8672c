//! Sessions kept in memory and mirrored to one append-only JSONL log each.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use prefsum::config::RunConfig;
use prefsum::session::{Event, Session};
use prefsum::DocumentCluster;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};

const INDEX_FILE: &str = "index.jsonl";

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub seq: usize,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub cluster_id: String,
    pub created: u64,
}

pub struct Entry {
    pub session: Session,
    log: PathBuf,
}

impl Entry {
    /// Append `events` to the log, numbered after what is already there.
    fn persist(&self, events: &[Event]) -> ApiResult<()> {
        if events.is_empty() {
            return Ok(());
        }
        let first = self.session.events().len() - events.len();
        let mut file = OpenOptions::new().create(true).append(true).open(&self.log).map_err(storage)?;
        let mut buf = Vec::new();
        for (i, event) in events.iter().enumerate() {
            let line = LogLine { seq: first + i, timestamp: now(), event: event.clone() };
            serde_json::to_writer(&mut buf, &line).map_err(storage)?;
            buf.push(b'\n');
        }
        file.write_all(&buf).map_err(storage)?;
        file.sync_data().map_err(storage)
    }

    /// Run a command and log whatever it emitted.
    pub fn run<T>(&mut self, f: impl FnOnce(&mut Session) -> prefsum::Result<(T, Vec<Event>)>) -> ApiResult<T> {
        let (out, events) = f(&mut self.session)?;
        self.persist(&events)?;
        Ok(out)
    }
}

fn storage(e: impl std::fmt::Display) -> ApiError {
    ApiError::Storage(e.to_string())
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

pub struct Store {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    index: Mutex<()>,
}

impl Store {
    /// Open a data directory, replaying every indexed session.
    pub fn open(dir: impl Into<PathBuf>) -> ApiResult<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(storage)?;
        let mut sessions = HashMap::new();
        for entry in read_index(&dir.join(INDEX_FILE))? {
            let log = dir.join(format!("{}.jsonl", entry.id));
            let events = read_log(&log)?;
            let mut session = Session::replay(&events)?;
            let resumed = session.resume()?;
            let restored = Entry { session, log };
            restored.persist(&resumed)?;
            tracing::info!(id = %entry.id, events = restored.session.events().len(), "restored session");
            sessions.insert(entry.id, Arc::new(Mutex::new(restored)));
        }
        Ok(Self { dir, sessions: RwLock::new(sessions), index: Mutex::new(()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn create(&self, cluster: DocumentCluster, config: RunConfig) -> ApiResult<String> {
        let (session, events) = Session::create(cluster, config)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let entry = Entry { session, log: self.dir.join(format!("{id}.jsonl")) };
        entry.persist(&events)?;
        {
            let _guard = self.index.lock().expect("index lock");
            let line = IndexEntry { id: id.clone(), cluster_id: entry.session.cluster().id.clone(), created: now() };
            let mut file =
                OpenOptions::new().create(true).append(true).open(self.dir.join(INDEX_FILE)).map_err(storage)?;
            let mut raw = serde_json::to_vec(&line).map_err(storage)?;
            raw.push(b'\n');
            file.write_all(&raw).map_err(storage)?;
            file.sync_data().map_err(storage)?;
        }
        self.sessions.write().expect("session map lock").insert(id.clone(), Arc::new(Mutex::new(entry)));
        Ok(id)
    }

    pub fn get(&self, id: &str) -> ApiResult<Arc<Mutex<Entry>>> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<_> = self.sessions.read().expect("session map lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// The persisted log of one session.
    pub fn log(&self, id: &str) -> ApiResult<Vec<LogLine>> {
        self.get(id)?;
        read_lines(&self.dir.join(format!("{id}.jsonl")))
    }
}

fn read_index(path: &Path) -> ApiResult<Vec<IndexEntry>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(storage)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(storage)?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(storage)?);
        }
    }
    Ok(out)
}

fn read_lines(path: &Path) -> ApiResult<Vec<LogLine>> {
    let file = File::open(path).map_err(storage)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(storage)?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line).map_err(|e| storage(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if parsed.seq != out.len() {
            return Err(storage(format!("{}: event {} out of sequence", path.display(), parsed.seq)));
        }
        out.push(parsed);
    }
    Ok(out)
}

fn read_log(path: &Path) -> ApiResult<Vec<Event>> {
    Ok(read_lines(path)?.into_iter().map(|l| l.event).collect())
}
