//! Append-only run log.
//!
//! Layout under the runs root:
//!
//! ```text
//! <runs_root>/<run_id>/log.jsonl     one JSON entry per line, write order
//! <runs_root>/<run_id>/config.json   config snapshot for replay
//! ```
//!
//! Appends go through a single mutex-guarded writer per run and each entry is
//! written with one `write_all` followed by a flush, so lines never interleave.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const LOG_FILE: &str = "log.jsonl";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Error)]
pub enum RunLogError {
    #[error("run log io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed run log line {line} in {path}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogEntry {
    pub run_id: String,
    pub seq: u64,
    pub timestamp: String,
    pub record_id: String,
    pub component: String,
    pub payload: Value,
}

struct Sink {
    file: Option<File>,
    seq: u64,
    memory: Vec<RunLogEntry>,
}

pub struct RunLog {
    run_id: String,
    dir: Option<PathBuf>,
    sink: Mutex<Sink>,
}

impl std::fmt::Debug for RunLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunLog").field("run_id", &self.run_id).field("dir", &self.dir).finish()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunLogError + '_ {
    move |source| RunLogError::Io { path: path.to_path_buf(), source }
}

pub fn run_dir(runs_root: &Path, run_id: &str) -> PathBuf {
    runs_root.join(run_id)
}

impl RunLog {
    /// Opens (creating if needed) the log of `run_id` under `runs_root`. Existing
    /// entries are kept and new ones are appended after them.
    pub fn create(runs_root: &Path, run_id: &str) -> Result<Self, RunLogError> {
        let dir = run_dir(runs_root, run_id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(LOG_FILE);
        let existing = if path.exists() { read_entries(&path)?.len() as u64 } else { 0 };
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        Ok(Self {
            run_id: run_id.to_string(),
            dir: Some(dir),
            sink: Mutex::new(Sink { file: Some(file), seq: existing, memory: Vec::new() }),
        })
    }

    /// Log kept in memory only; used by tests and library callers without a run directory.
    pub fn in_memory(run_id: &str) -> Self {
        Self {
            run_id: run_id.to_string(),
            dir: None,
            sink: Mutex::new(Sink { file: None, seq: 0, memory: Vec::new() }),
        }
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn append(&self, record_id: &str, component: &str, payload: Value) -> Result<(), RunLogError> {
        let mut sink = self.sink.lock().unwrap_or_else(|p| p.into_inner());
        let entry = RunLogEntry {
            run_id: self.run_id.clone(),
            seq: sink.seq,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true),
            record_id: record_id.to_string(),
            component: component.to_string(),
            payload,
        };
        match sink.file.as_mut() {
            Some(file) => {
                let mut line = serde_json::to_vec(&entry)?;
                line.push(b'\n');
                let path = self.dir.as_deref().unwrap_or(Path::new("")).join(LOG_FILE);
                file.write_all(&line).map_err(io_err(&path))?;
                file.flush().map_err(io_err(&path))?;
            }
            None => sink.memory.push(entry),
        }
        sink.seq += 1;
        Ok(())
    }

    /// Entries written through this handle (in-memory logs) or read back from disk.
    pub fn entries(&self) -> Result<Vec<RunLogEntry>, RunLogError> {
        let sink = self.sink.lock().unwrap_or_else(|p| p.into_inner());
        match &self.dir {
            Some(dir) => read_entries(&dir.join(LOG_FILE)),
            None => Ok(sink.memory.clone()),
        }
    }

    pub fn write_config_snapshot<T: Serialize>(&self, config: &T) -> Result<(), RunLogError> {
        if let Some(dir) = &self.dir {
            let path = dir.join(CONFIG_FILE);
            let body = serde_json::to_vec_pretty(config)?;
            fs::write(&path, body).map_err(io_err(&path))?;
        }
        Ok(())
    }
}

fn read_entries(path: &Path) -> Result<Vec<RunLogEntry>, RunLogError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|e| RunLogError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(entry);
    }
    Ok(out)
}

/// Entries of `run_id` in write order. An unknown run yields an empty list and a warning.
pub fn replay_runlog(runs_root: &Path, run_id: &str) -> Result<Vec<RunLogEntry>, RunLogError> {
    let path = run_dir(runs_root, run_id).join(LOG_FILE);
    if !path.exists() {
        tracing::warn!(run_id, path = %path.display(), "no run log found for run");
        return Ok(Vec::new());
    }
    read_entries(&path)
}

pub fn read_config_snapshot(runs_root: &Path, run_id: &str) -> Result<Value, RunLogError> {
    let path = run_dir(runs_root, run_id).join(CONFIG_FILE);
    let body = fs::read(&path).map_err(io_err(&path))?;
    Ok(serde_json::from_slice(&body)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::sync::Arc;

    #[test]
    fn replay_returns_write_order() {
        let tmp = tempfile::tempdir().unwrap();
        let log = RunLog::create(tmp.path(), "run-a").unwrap();
        for i in 0..3 {
            log.append("rec", "test", json!({ "i": i })).unwrap();
        }
        let entries = replay_runlog(tmp.path(), "run-a").unwrap();
        assert_eq!(entries.len(), 3);
        for (i, e) in entries.iter().enumerate() {
            assert_eq!(e.seq, i as u64);
            assert_eq!(e.payload["i"], i);
        }
    }

    #[test]
    fn reopening_continues_sequence() {
        let tmp = tempfile::tempdir().unwrap();
        RunLog::create(tmp.path(), "r").unwrap().append("x", "c", json!(1)).unwrap();
        let log = RunLog::create(tmp.path(), "r").unwrap();
        log.append("x", "c", json!(2)).unwrap();
        let entries = replay_runlog(tmp.path(), "r").unwrap();
        assert_eq!(entries.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn concurrent_appends_stay_intact() {
        let tmp = tempfile::tempdir().unwrap();
        let log = Arc::new(RunLog::create(tmp.path(), "par").unwrap());
        let big = "x".repeat(64 * 1024);
        std::thread::scope(|s| {
            for session in 0..2 {
                let log = Arc::clone(&log);
                let big = big.clone();
                s.spawn(move || {
                    for i in 0..50 {
                        log.append("rec", "session", json!({ "session": session, "i": i, "pad": big })).unwrap();
                    }
                });
            }
        });
        let entries = replay_runlog(tmp.path(), "par").unwrap();
        assert_eq!(entries.len(), 100);
        for session in 0..2 {
            let mine: Vec<_> = entries.iter().filter(|e| e.payload["session"] == session).collect();
            assert_eq!(mine.len(), 50);
            assert!(mine.iter().all(|e| e.payload["pad"].as_str().unwrap().len() == 64 * 1024));
        }
    }

    #[test]
    fn unknown_run_is_empty() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(replay_runlog(tmp.path(), "nope").unwrap().is_empty());
    }

    #[test]
    fn in_memory_log_keeps_entries() {
        let log = RunLog::in_memory("m");
        log.append("a", "b", json!(null)).unwrap();
        assert_eq!(log.entries().unwrap().len(), 1);
    }
}
