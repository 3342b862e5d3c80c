//! Append-only write-ahead log of acknowledged ingests, one JSON line per
//! record. Replaying it over the last snapshot restores every acknowledged
//! write; replays are safe because ingestion is an idempotent upsert.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sir_core::{IngestRecord, Timestamp};

use crate::error::{Result, SirError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalEntry {
    pub seq: u64,
    /// Ingestion clock at acknowledgement; replay validates against it.
    pub now: Timestamp,
    pub record: IngestRecord,
}

#[derive(Debug)]
pub struct Wal {
    path: PathBuf,
    file: File,
    last_seq: u64,
}

impl Wal {
    /// Opens (creating if needed) the log and returns its entries. A torn
    /// final line from an interrupted append is cut off; damage anywhere
    /// else is an integrity error.
    pub fn open(path: &Path) -> Result<(Self, Vec<WalEntry>)> {
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(path)
            .map_err(SirError::io(path))?;
        let mut entries = Vec::new();
        let mut good_len = 0u64;
        let mut torn: Option<u64> = None;
        {
            let mut reader = BufReader::new(&file);
            let mut line = String::new();
            let mut offset = 0u64;
            loop {
                line.clear();
                let n = reader.read_line(&mut line).map_err(SirError::io(path))?;
                if n == 0 {
                    break;
                }
                let complete = line.ends_with('\n');
                match serde_json::from_str::<WalEntry>(line.trim_end()) {
                    Ok(e) if complete => {
                        if torn.is_some() {
                            return Err(SirError::integrity(path.display().to_string(), torn.unwrap(), "damaged log entry"));
                        }
                        entries.push(e);
                        good_len = offset + n as u64;
                    }
                    _ if line.trim().is_empty() && complete => good_len = offset + n as u64,
                    _ => {
                        if torn.is_some() {
                            return Err(SirError::integrity(path.display().to_string(), torn.unwrap(), "damaged log entry"));
                        }
                        torn = Some(offset);
                    }
                }
                offset += n as u64;
            }
        }
        if torn.is_some() {
            tracing::warn!(path = %path.display(), offset = good_len, "dropping torn write-ahead log tail");
            file.set_len(good_len).map_err(SirError::io(path))?;
            file.sync_all().map_err(SirError::io(path))?;
        }
        file.seek(SeekFrom::End(0)).map_err(SirError::io(path))?;
        let last_seq = entries.last().map_or(0, |e| e.seq);
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
                last_seq,
            },
            entries,
        ))
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    /// Appends and syncs the records; returns the last sequence number.
    pub fn append<'a>(&mut self, now: Timestamp, records: impl IntoIterator<Item = &'a IngestRecord>) -> Result<u64> {
        let mut buf = Vec::new();
        let mut seq = self.last_seq;
        for record in records {
            seq += 1;
            let entry = WalEntryRef { seq, now, record };
            serde_json::to_writer(&mut buf, &entry).map_err(|e| SirError::parse(self.path.display().to_string(), e))?;
            buf.push(b'\n');
        }
        if buf.is_empty() {
            return Ok(self.last_seq);
        }
        self.file.write_all(&buf).map_err(SirError::io(&self.path))?;
        self.file.sync_data().map_err(SirError::io(&self.path))?;
        self.last_seq = seq;
        Ok(seq)
    }

    /// Drops all entries; sequence numbers keep increasing.
    pub fn truncate(&mut self) -> Result<()> {
        self.file.set_len(0).map_err(SirError::io(&self.path))?;
        self.file.sync_all().map_err(SirError::io(&self.path))
    }
}

#[derive(Serialize)]
struct WalEntryRef<'a> {
    seq: u64,
    now: Timestamp,
    record: &'a IngestRecord,
}
