//! Continuous ingestion from record sources.

use std::io::BufRead;

use serde::Serialize;
use sir_core::store::Ack;
use sir_core::{IngestRecord, Timestamp};

use crate::error::{Result, SirError};
use crate::storedir::StoreDir;

/// Yields batches of records; an empty batch means the source is drained.
/// Per-record errors are malformed input, not source failures.
pub trait RecordSource {
    fn next_batch(&mut self, max: usize) -> Result<Vec<Result<IngestRecord>>>;
}

/// One JSON [`IngestRecord`] per line.
pub struct JsonlSource<R> {
    reader: R,
    context: String,
    line_no: usize,
}

impl<R: BufRead> JsonlSource<R> {
    pub fn new(reader: R, context: impl Into<String>) -> Self {
        Self {
            reader,
            context: context.into(),
            line_no: 0,
        }
    }
}

impl<R: BufRead> RecordSource for JsonlSource<R> {
    fn next_batch(&mut self, max: usize) -> Result<Vec<Result<IngestRecord>>> {
        let mut out = Vec::new();
        let mut line = String::new();
        while out.len() < max {
            line.clear();
            if self.reader.read_line(&mut line).map_err(SirError::io(&self.context))? == 0 {
                break;
            }
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            out.push(
                serde_json::from_str(line.trim_end())
                    .map_err(|e| SirError::parse(format!("{} line {}", self.context, self.line_no), e)),
            );
        }
        Ok(out)
    }
}

/// Records already joined from a vector/metadata file pair.
pub struct VecSource {
    records: std::vec::IntoIter<Result<IngestRecord>>,
}

impl VecSource {
    pub fn new(records: Vec<Result<IngestRecord>>) -> Self {
        Self {
            records: records.into_iter(),
        }
    }
}

impl RecordSource for VecSource {
    fn next_batch(&mut self, max: usize) -> Result<Vec<Result<IngestRecord>>> {
        Ok(self.records.by_ref().take(max).collect())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConsumeOptions {
    pub batch_size: usize,
    /// Run `expire` after every this many batches (0 disables it).
    pub expire_every: usize,
}

impl Default for ConsumeOptions {
    fn default() -> Self {
        Self {
            batch_size: 512,
            expire_every: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConsumeStats {
    pub inserted: u64,
    pub updated: u64,
    pub unchanged: u64,
    pub rejected: u64,
    pub expired_segments: u64,
    pub batches: u64,
}

impl ConsumeStats {
    pub fn ingested(&self) -> u64 {
        self.inserted + self.updated + self.unchanged
    }

    pub fn add(&mut self, outcome: &std::result::Result<Ack, sir_core::Error>) {
        match outcome {
            Ok(Ack::Inserted) => self.inserted += 1,
            Ok(Ack::Updated) => self.updated += 1,
            Ok(Ack::Unchanged) => self.unchanged += 1,
            Err(_) => self.rejected += 1,
        }
    }
}

/// Drains `source` into `dir`. Malformed and rejected records are logged,
/// counted and skipped.
pub fn consume(
    dir: &mut StoreDir,
    source: &mut dyn RecordSource,
    now: &dyn Fn() -> Timestamp,
    opts: ConsumeOptions,
) -> Result<ConsumeStats> {
    let mut stats = ConsumeStats::default();
    loop {
        let batch = source.next_batch(opts.batch_size.max(1))?;
        if batch.is_empty() {
            break;
        }
        let mut good = Vec::with_capacity(batch.len());
        for r in batch {
            match r {
                Ok(r) => good.push(r),
                Err(e) => {
                    tracing::warn!(error = %e, "skipping malformed record");
                    stats.rejected += 1;
                }
            }
        }
        let t = now();
        for outcome in dir.ingest_batch(good, t)? {
            if let Err(e) = &outcome {
                tracing::warn!(error = %e, "record rejected");
            }
            stats.add(&outcome);
        }
        stats.batches += 1;
        if opts.expire_every > 0 && stats.batches % opts.expire_every as u64 == 0 {
            stats.expired_segments += dir.expire(t) as u64;
        }
    }
    stats.expired_segments += dir.expire(now()) as u64;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sir_core::synth::{clustered, ClusterSpec};
    use sir_core::{CodecConfig, StoreConfig};

    const NOW: Timestamp = Timestamp::from_secs(1_700_000_000);

    #[test]
    fn malformed_lines_are_skipped_and_counted() {
        let records = clustered(&ClusterSpec::new(2, 5, 8, 0.2, 1, NOW)).unwrap().records;
        let mut text = String::new();
        for (i, r) in records.iter().enumerate() {
            if i == 3 {
                text.push_str("{\"id\": \"broken\"\n");
            }
            text.push_str(&serde_json::to_string(r).unwrap());
            text.push('\n');
        }
        let tmp = tempfile::tempdir().unwrap();
        let mut dir = StoreDir::open(tmp.path(), Some(StoreConfig::new(CodecConfig::new(8, 32, 4, 0).unwrap())), NOW).unwrap();
        let opts = ConsumeOptions {
            batch_size: 4,
            ..ConsumeOptions::default()
        };
        let stats = consume(&mut dir, &mut JsonlSource::new(text.as_bytes(), "test"), &|| NOW, opts).unwrap();
        assert_eq!(stats.inserted, records.len() as u64);
        assert_eq!(stats.rejected, 1);
        assert_eq!(stats.batches, 3);
        let again = consume(&mut dir, &mut JsonlSource::new(text.as_bytes(), "test"), &|| NOW, opts).unwrap();
        assert_eq!(again.unchanged, records.len() as u64);
        assert_eq!(dir.store().item_count(), records.len());
    }
}
