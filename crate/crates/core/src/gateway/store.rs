//! Append-only command log with periodic snapshots.
//!
//! Log file: one JSON header line `{"format":"peerlingo-log","version":1}`,
//! then one [`LogRecord`] per line. A torn final line (crash mid-write) is
//! dropped on recovery. Snapshots are separate files holding a header line
//! and the full [`State`] after a given position.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::content::Catalog;
use crate::error::Error;
use crate::ids::Timestamp;
use crate::platform::{Command, Platform, State};

pub const LOG_FORMAT: &str = "peerlingo-log";
pub const SNAPSHOT_FORMAT: &str = "peerlingo-snapshot";
pub const FORMAT_VERSION: u32 = 1;
pub const SNAPSHOT_EVERY: u64 = 10_000;

const LOG_FILE: &str = "events.log";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub position: u64,
    pub at: Timestamp,
    pub event: Command,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bad header in {0}")]
    BadHeader(PathBuf),
    #[error("corrupt record at line {line} of {path}")]
    Corrupt { path: PathBuf, line: usize },
    #[error("log positions jump from {expected} to {found}")]
    Gap { expected: u64, found: u64 },
    #[error("replay of position {position} failed: {error}")]
    Replay { position: u64, error: Error },
}

/// Where applied commands go. The hub appends after each successful apply.
pub trait Journal: Send {
    fn append(&mut self, rec: &LogRecord, state: &State) -> io::Result<()>;
}

/// Keeps the log in memory; used by the harness and tests.
#[derive(Debug, Clone, Default)]
pub struct MemJournal {
    pub records: Vec<LogRecord>,
}

impl Journal for MemJournal {
    fn append(&mut self, rec: &LogRecord, _: &State) -> io::Result<()> {
        self.records.push(rec.clone());
        Ok(())
    }
}

impl<J: Journal + ?Sized> Journal for Box<J> {
    fn append(&mut self, rec: &LogRecord, state: &State) -> io::Result<()> {
        (**self).append(rec, state)
    }
}

impl<J: Journal + ?Sized> Journal for &mut J {
    fn append(&mut self, rec: &LogRecord, state: &State) -> io::Result<()> {
        (**self).append(rec, state)
    }
}

/// Rebuilds state by applying `records` in order on top of `base`. Every
/// logged command applied cleanly when it was written, so any error here
/// means the log and the code disagree.
pub fn replay<'a>(
    mut platform: Platform,
    records: impl IntoIterator<Item = &'a LogRecord>,
) -> Result<Platform, StoreError> {
    for rec in records {
        platform.apply(&rec.event).map_err(|error| StoreError::Replay {
            position: rec.position,
            error,
        })?;
    }
    Ok(platform)
}

fn write_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> io::Result<()> {
    let mut buf = serde_json::to_vec(value).map_err(io::Error::other)?;
    buf.push(b'\n');
    w.write_all(&buf)
}

/// File-backed journal in a data directory.
pub struct Store {
    dir: PathBuf,
    log: File,
    sync: bool,
    snapshot_every: u64,
}

impl Store {
    /// Opens `dir`, recovering state from the newest readable snapshot plus
    /// the log tail. Creates a fresh log when none exists.
    pub fn open(dir: &Path, config: Config, catalog: Arc<Catalog>) -> Result<(Store, Platform, u64), StoreError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOG_FILE);
        let (records, good_len) = if path.exists() {
            read_log(&path)?
        } else {
            let mut f = File::create(&path)?;
            write_line(
                &mut f,
                &Header {
                    format: LOG_FORMAT.into(),
                    version: FORMAT_VERSION,
                    position: None,
                },
            )?;
            f.sync_all()?;
            (Vec::new(), f.metadata()?.len())
        };

        let mut log = OpenOptions::new().read(true).write(true).open(&path)?;
        // drop a torn tail so new appends start on a clean line
        if log.metadata()?.len() != good_len {
            log.set_len(good_len)?;
        }
        log.seek(SeekFrom::End(0))?;

        let last = records.last().map_or(0, |r| r.position);
        let (base, from) = match latest_snapshot(dir, last)? {
            Some((pos, state)) => (Platform::from_state(config, Arc::clone(&catalog), state), pos),
            None => (Platform::new(config, catalog), 0),
        };
        let platform = replay(base, records.iter().filter(|r| r.position > from))?;
        Ok((
            Store {
                dir: dir.to_owned(),
                log,
                sync: true,
                snapshot_every: SNAPSHOT_EVERY,
            },
            platform,
            last,
        ))
    }

    /// Disables fsync per append. Appends still reach the OS before effects
    /// become visible, but not necessarily the disk.
    pub fn without_fsync(mut self) -> Self {
        self.sync = false;
        self
    }

    pub fn with_snapshot_every(mut self, n: u64) -> Self {
        self.snapshot_every = n.max(1);
        self
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join(LOG_FILE)
    }

    fn write_snapshot(&self, position: u64, state: &State) -> io::Result<()> {
        let tmp = self.dir.join(format!("snapshot-{position:012}.tmp"));
        let mut f = File::create(&tmp)?;
        write_line(
            &mut f,
            &Header {
                format: SNAPSHOT_FORMAT.into(),
                version: FORMAT_VERSION,
                position: Some(position),
            },
        )?;
        write_line(&mut f, state)?;
        f.sync_all()?;
        fs::rename(&tmp, self.dir.join(format!("snapshot-{position:012}.json")))
    }
}

impl Journal for Store {
    fn append(&mut self, rec: &LogRecord, state: &State) -> io::Result<()> {
        write_line(&mut self.log, rec)?;
        if self.sync {
            self.log.sync_data()?;
        }
        if rec.position % self.snapshot_every == 0 {
            self.write_snapshot(rec.position, state)?;
        }
        Ok(())
    }
}

/// Reads a log file. Returns the records and the byte length of the valid
/// prefix; a torn final record is excluded from both.
pub fn read_log(path: &Path) -> Result<(Vec<LogRecord>, u64), StoreError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut line = String::new();
    let mut good_len = reader.read_line(&mut line)? as u64;
    let header: Header = serde_json::from_str(line.trim_end()).map_err(|_| StoreError::BadHeader(path.to_owned()))?;
    if header.format != LOG_FORMAT || header.version != FORMAT_VERSION || !line.ends_with('\n') {
        return Err(StoreError::BadHeader(path.to_owned()));
    }
    let mut records: Vec<LogRecord> = Vec::new();
    let mut lineno = 1;
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        lineno += 1;
        let complete = line.ends_with('\n');
        match serde_json::from_str::<LogRecord>(line.trim_end()) {
            Ok(rec) if complete => {
                let expected = records.last().map_or(1, |r| r.position + 1);
                if rec.position != expected {
                    return Err(StoreError::Gap {
                        expected,
                        found: rec.position,
                    });
                }
                records.push(rec);
                good_len += n as u64;
            }
            // no newline: the writer died mid-record
            _ if !complete => break,
            _ => {
                return Err(StoreError::Corrupt {
                    path: path.to_owned(),
                    line: lineno,
                })
            }
        }
    }
    Ok((records, good_len))
}

/// Newest snapshot at or below `max_position` that parses.
fn latest_snapshot(dir: &Path, max_position: u64) -> Result<Option<(u64, State)>, StoreError> {
    let mut candidates: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("snapshot-") && n.ends_with(".json"))
        })
        .collect();
    candidates.sort();
    for path in candidates.iter().rev() {
        let Ok(text) = fs::read_to_string(path) else { continue };
        let mut lines = text.lines();
        let Some(Ok(header)) = lines.next().map(serde_json::from_str::<Header>) else { continue };
        let Some(pos) = header.position else { continue };
        if header.format != SNAPSHOT_FORMAT || header.version != FORMAT_VERSION || pos > max_position {
            continue;
        }
        if let Some(Ok(state)) = lines.next().map(serde_json::from_str::<State>) {
            return Ok(Some((pos, state)));
        }
    }
    Ok(None)
}
