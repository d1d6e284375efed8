use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Ticket;

use super::{AuditRecord, ServeError, StoredPrediction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Ticket { ticket: Ticket },
    Prediction { prediction: StoredPrediction },
    Delivered { ticket_id: String },
    Resolved { ticket_id: String, entries: Vec<AuditRecord> },
}

/// Full service state; replaying the event log over it reproduces the live state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Number of log events folded into this snapshot.
    pub events: u64,
    pub tickets: BTreeMap<String, Ticket>,
    pub predictions: BTreeMap<String, StoredPrediction>,
    pub delivered: BTreeMap<String, bool>,
    pub resolutions: BTreeMap<String, Vec<AuditRecord>>,
}

impl Snapshot {
    pub fn apply(&mut self, e: &Event) {
        self.events += 1;
        match e {
            Event::Ticket { ticket } => {
                self.tickets.insert(ticket.id.clone(), ticket.clone());
            }
            Event::Prediction { prediction } => {
                self.predictions.insert(prediction.ticket_id.clone(), prediction.clone());
            }
            Event::Delivered { ticket_id } => {
                self.delivered.insert(ticket_id.clone(), true);
            }
            Event::Resolved { ticket_id, entries } => {
                self.resolutions.insert(ticket_id.clone(), entries.clone());
            }
        }
    }
}

/// Durable storage behind the service.
pub trait TicketStore: Send {
    /// State to start from.
    fn load(&mut self) -> Result<Snapshot, ServeError>;
    fn append(&mut self, event: &Event) -> Result<(), ServeError>;
    fn audit(&mut self, records: &[AuditRecord]) -> Result<(), ServeError>;
}

/// Keeps everything in memory; for tests and throwaway servers.
#[derive(Debug, Default)]
pub struct MemoryStore {
    pub events: Vec<Event>,
    pub audit: Vec<AuditRecord>,
}

impl TicketStore for MemoryStore {
    fn load(&mut self) -> Result<Snapshot, ServeError> {
        let mut s = Snapshot::default();
        for e in &self.events {
            s.apply(e);
        }
        Ok(s)
    }

    fn append(&mut self, event: &Event) -> Result<(), ServeError> {
        self.events.push(event.clone());
        Ok(())
    }

    fn audit(&mut self, records: &[AuditRecord]) -> Result<(), ServeError> {
        self.audit.extend_from_slice(records);
        Ok(())
    }
}

/// Append-only `events.jsonl` and `audit.jsonl` plus a `snapshot.json`
/// rewritten every `snapshot_every` events.
pub struct FileStore {
    dir: PathBuf,
    snapshot_every: u64,
    state: Snapshot,
    log: Option<File>,
    audit: Option<File>,
}

impl FileStore {
    pub const EVENTS: &'static str = "events.jsonl";
    pub const AUDIT: &'static str = "audit.jsonl";
    pub const SNAPSHOT: &'static str = "snapshot.json";

    pub fn open(dir: &Path, snapshot_every: u64) -> Result<Self, ServeError> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), snapshot_every: snapshot_every.max(1), state: Snapshot::default(), log: None, audit: None })
    }

    fn append_line(file: &mut Option<File>, path: PathBuf, line: &[u8]) -> Result<(), ServeError> {
        if file.is_none() {
            *file = Some(OpenOptions::new().create(true).append(true).open(path)?);
        }
        let f = file.as_mut().expect("opened");
        f.write_all(line)?;
        f.flush()?;
        Ok(())
    }

    fn write_snapshot(&self) -> Result<(), ServeError> {
        let tmp = self.dir.join("snapshot.json.tmp");
        fs::write(&tmp, serde_json::to_vec(&self.state)?)?;
        fs::rename(tmp, self.dir.join(Self::SNAPSHOT))?;
        Ok(())
    }
}

impl TicketStore for FileStore {
    fn load(&mut self) -> Result<Snapshot, ServeError> {
        let snap_path = self.dir.join(Self::SNAPSHOT);
        let mut state: Snapshot =
            if snap_path.exists() { serde_json::from_slice(&fs::read(snap_path)?)? } else { Snapshot::default() };
        let log = self.dir.join(Self::EVENTS);
        if log.exists() {
            let skip = state.events as usize;
            for (i, line) in BufReader::new(File::open(log)?).lines().enumerate() {
                let line = line?;
                if i < skip || line.trim().is_empty() {
                    continue;
                }
                let e: Event = serde_json::from_str(&line)
                    .map_err(|err| ServeError::Storage(format!("event log line {}: {err}", i + 1)))?;
                state.apply(&e);
            }
        }
        self.state = state.clone();
        Ok(state)
    }

    fn append(&mut self, event: &Event) -> Result<(), ServeError> {
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        Self::append_line(&mut self.log, self.dir.join(Self::EVENTS), &line)?;
        self.state.apply(event);
        if self.state.events % self.snapshot_every == 0 {
            self.write_snapshot()?;
        }
        Ok(())
    }

    fn audit(&mut self, records: &[AuditRecord]) -> Result<(), ServeError> {
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        Self::append_line(&mut self.audit, self.dir.join(Self::AUDIT), &buf)
    }
}
