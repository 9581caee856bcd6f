//! Append-only JSON-lines journal of campaign events.
//!
//! Every entry is one line `{"seq": N, "event": {...}}` with `seq` counting
//! from 1 without gaps. Each append is flushed and fsynced before it is
//! acknowledged. A final line without its terminating newline is a torn
//! write from an interrupted process; it is cut off on open. Anything else
//! that fails to parse makes the journal corrupt and opening fails.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Event, StoreError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub seq: u64,
    pub event: Event,
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
    next_seq: u64,
}

impl Journal {
    /// Opens (creating if needed) the journal at `path` and returns it with
    /// every stored entry in order.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<JournalEntry>), StoreError> {
        let path = path.as_ref().to_path_buf();
        let io = |e: std::io::Error| StoreError::Io(format!("{}: {e}", path.display()));
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io)?;

        let mut entries = Vec::new();
        let mut good_len: u64 = 0;
        let mut reader = BufReader::new(&file);
        let mut line = String::new();
        let mut line_no = 0usize;
        loop {
            line.clear();
            let read = reader.read_line(&mut line).map_err(io)?;
            if read == 0 {
                break;
            }
            line_no += 1;
            let complete = line.ends_with('\n');
            let parsed: Result<JournalEntry, _> = serde_json::from_str(line.trim_end());
            match parsed {
                Ok(entry) => {
                    let expected = entries.len() as u64 + 1;
                    if entry.seq != expected {
                        return Err(StoreError::CorruptJournal {
                            line: line_no,
                            message: format!("expected seq {expected}, found {}", entry.seq),
                        });
                    }
                    entries.push(entry);
                    good_len += read as u64;
                    if !complete {
                        // Parsed but unterminated: keep it, restore the newline.
                        drop(reader);
                        file.write_all(b"\n").map_err(io)?;
                        file.sync_data().map_err(io)?;
                        break;
                    }
                }
                Err(_) if !complete => {
                    drop(reader);
                    file.set_len(good_len).map_err(io)?;
                    file.sync_data().map_err(io)?;
                    break;
                }
                Err(e) => {
                    return Err(StoreError::CorruptJournal {
                        line: line_no,
                        message: e.to_string(),
                    })
                }
            }
        }
        file.seek(SeekFrom::End(0)).map_err(io)?;
        let next_seq = entries.len() as u64 + 1;
        Ok((
            Journal {
                path,
                file,
                next_seq,
            },
            entries,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Number of entries written so far.
    pub fn len(&self) -> u64 {
        self.next_seq - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Durably appends one event and returns its sequence number.
    pub fn append(&mut self, event: &Event) -> Result<u64, StoreError> {
        let seq = self.next_seq;
        let entry = JournalEntry {
            seq,
            event: event.clone(),
        };
        let mut line = serde_json::to_vec(&entry).map_err(|e| StoreError::Io(e.to_string()))?;
        line.push(b'\n');
        let io = |e: std::io::Error| StoreError::Io(format!("{}: {e}", self.path.display()));
        self.file.write_all(&line).map_err(io)?;
        self.file.sync_data().map_err(io)?;
        self.next_seq += 1;
        Ok(seq)
    }

    pub fn sync(&mut self) -> Result<(), StoreError> {
        self.file
            .sync_all()
            .map_err(|e| StoreError::Io(format!("{}: {e}", self.path.display())))
    }
}
