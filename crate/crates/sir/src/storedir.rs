//! A durable store directory: an identity file, the current snapshot, and a
//! write-ahead log of everything acknowledged since.
//!
//! ```text
//! <root>/store.json        store config fixed at creation
//! <root>/CURRENT           name of the live snapshot directory
//! <root>/snapshot-NNNNNN/  see `persist`
//! <root>/wal.jsonl
//! <root>/rules/
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use sir_core::store::Ack;
use sir_core::{IngestRecord, RollingStore, StoreConfig, Timestamp};

use crate::error::{Result, SirError};
use crate::persist::{self, write_durable};
use crate::wal::Wal;

pub struct StoreDir {
    root: PathBuf,
    store: RollingStore,
    wal: Wal,
    generation: u64,
}

/// Outcome of one record in a batch.
pub type IngestOutcome = std::result::Result<Ack, sir_core::Error>;

fn read_identity(path: &Path) -> Result<Option<StoreConfig>> {
    if !path.exists() {
        return Ok(None);
    }
    let bytes = fs::read(path).map_err(SirError::io(path))?;
    serde_json::from_slice(&bytes)
        .map(Some)
        .map_err(|e| SirError::parse(path.display().to_string(), e))
}

/// Checks `wanted` against the config a store was created with. Codec and
/// bucket width are fixed for a store's lifetime; window and embedding
/// retention follow the caller.
pub fn check_compatible(existing: &StoreConfig, wanted: &StoreConfig) -> Result<()> {
    if existing.codec != wanted.codec {
        return Err(SirError::ConfigConflict(format!(
            "store was created with codec {:?}, requested {:?}",
            existing.codec, wanted.codec
        )));
    }
    if existing.bucket_days != wanted.bucket_days {
        return Err(SirError::ConfigConflict(format!(
            "store was created with {}-day buckets, requested {}",
            existing.bucket_days, wanted.bucket_days
        )));
    }
    Ok(())
}

impl StoreDir {
    /// Opens `root`, creating it with `config` when it holds no store.
    /// Replays the log over the last snapshot and expires at `now`.
    pub fn open(root: &Path, config: Option<StoreConfig>, now: Timestamp) -> Result<Self> {
        fs::create_dir_all(root).map_err(SirError::io(root))?;
        let identity_path = root.join("store.json");
        let config = match (read_identity(&identity_path)?, config) {
            (Some(existing), Some(wanted)) => {
                check_compatible(&existing, &wanted)?;
                wanted
            }
            (Some(existing), None) => existing,
            (None, Some(wanted)) => wanted,
            (None, None) => {
                return Err(SirError::Invalid(format!(
                    "{} holds no store and no codec config was given",
                    root.display()
                )))
            }
        };
        config.validate()?;
        let identity = serde_json::to_vec_pretty(&config).expect("config serializes");
        if fs::read(&identity_path).ok().as_deref() != Some(&identity[..]) {
            write_durable(&identity_path, &identity)?;
        }

        let current = root.join("CURRENT");
        let (mut store, wal_seq, generation) = if current.exists() {
            let name = fs::read_to_string(&current).map_err(SirError::io(&current))?;
            let name = name.trim();
            let generation = name
                .strip_prefix("snapshot-")
                .and_then(|g| g.parse::<u64>().ok())
                .ok_or_else(|| SirError::integrity(current.display().to_string(), 0, format!("bad snapshot name {name:?}")))?;
            let (mut store, manifest) = persist::load(&root.join(name))?
                .ok_or_else(|| SirError::integrity(name.to_string(), 0, "snapshot is missing"))?;
            check_compatible(&manifest.config, &config)?;
            if manifest.config != config {
                store = reconfigure(store, config)?;
            }
            (store, manifest.wal_seq, generation)
        } else {
            (RollingStore::new(config)?, 0, 0)
        };

        let (wal, entries) = Wal::open(&root.join("wal.jsonl"))?;
        let mut replayed = 0usize;
        for e in entries.into_iter().filter(|e| e.seq > wal_seq) {
            if let Err(err) = store.ingest(e.record, e.now) {
                tracing::warn!(seq = e.seq, %err, "log entry no longer applies");
            }
            replayed += 1;
        }
        store.expire(now);
        tracing::debug!(root = %root.display(), replayed, items = store.item_count(), "store opened");
        Ok(Self {
            root: root.to_path_buf(),
            store,
            wal,
            generation,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn store(&self) -> &RollingStore {
        &self.store
    }

    pub fn config(&self) -> &StoreConfig {
        self.store.config()
    }

    pub fn rules_dir(&self) -> PathBuf {
        self.root.join("rules")
    }

    /// Validates, logs and applies a batch. Only valid records are logged;
    /// a record is acknowledged once its log entry is synced.
    pub fn ingest_batch(&mut self, records: Vec<IngestRecord>, now: Timestamp) -> Result<Vec<IngestOutcome>> {
        let checks: Vec<std::result::Result<(), sir_core::Error>> =
            records.iter().map(|r| self.store.validate(r, now)).collect();
        self.wal
            .append(now, records.iter().zip(&checks).filter(|(_, c)| c.is_ok()).map(|(r, _)| r))?;
        Ok(records
            .into_iter()
            .zip(checks)
            .map(|(r, check)| check.and_then(|_| self.store.ingest(r, now)))
            .collect())
    }

    pub fn ingest(&mut self, record: IngestRecord, now: Timestamp) -> Result<IngestOutcome> {
        Ok(self.ingest_batch(vec![record], now)?.remove(0))
    }

    pub fn expire(&mut self, now: Timestamp) -> usize {
        self.store.expire(now)
    }

    /// Writes a new snapshot, points `CURRENT` at it and empties the log.
    pub fn checkpoint(&mut self) -> Result<()> {
        let generation = self.generation + 1;
        let name = format!("snapshot-{generation:06}");
        persist::persist_at(&self.store, &self.root.join(&name), self.wal.last_seq())?;
        write_durable(&self.root.join("CURRENT"), format!("{name}\n").as_bytes())?;
        self.generation = generation;
        self.wal.truncate()?;
        for entry in fs::read_dir(&self.root).map_err(SirError::io(&self.root))?.flatten() {
            let file_name = entry.file_name();
            let other = file_name.to_string_lossy();
            if other.starts_with("snapshot-") && other != name {
                let _ = fs::remove_dir_all(entry.path());
            }
        }
        Ok(())
    }
}

fn reconfigure(old: RollingStore, config: StoreConfig) -> Result<RollingStore> {
    let mut store = RollingStore::new(config)?;
    for seg in old.segments() {
        for item in seg.items() {
            store.restore(item.meta.clone(), item.code(config.codec.code_bits), item.embedding.cloned())?;
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sir_core::synth::{clustered, ClusterSpec};
    use sir_core::CodecConfig;

    const NOW: Timestamp = Timestamp::from_secs(1_700_000_000);

    fn config(seed: u64) -> StoreConfig {
        StoreConfig::new(CodecConfig::new(16, 64, 4, seed).unwrap())
    }

    fn records() -> Vec<IngestRecord> {
        clustered(&ClusterSpec::new(4, 5, 16, 0.2, 7, NOW)).unwrap().records
    }

    #[test]
    fn log_is_replayed_on_reopen() {
        let tmp = tempfile::tempdir().unwrap();
        let mut dir = StoreDir::open(tmp.path(), Some(config(1)), NOW).unwrap();
        let rs = records();
        dir.ingest_batch(rs[..10].to_vec(), NOW).unwrap();
        dir.checkpoint().unwrap();
        dir.ingest_batch(rs[10..].to_vec(), NOW).unwrap();
        drop(dir);
        let dir = StoreDir::open(tmp.path(), None, NOW).unwrap();
        assert_eq!(dir.store().item_count(), rs.len());
    }

    #[test]
    fn rejected_records_are_not_logged() {
        let tmp = tempfile::tempdir().unwrap();
        let mut dir = StoreDir::open(tmp.path(), Some(config(1)), NOW).unwrap();
        let mut late = records()[0].clone();
        late.timestamp = NOW.minus_days(400);
        let out = dir.ingest(late, NOW).unwrap();
        assert!(out.is_err());
        drop(dir);
        let log = std::fs::read_to_string(tmp.path().join("wal.jsonl")).unwrap();
        assert!(log.is_empty());
    }

    #[test]
    fn codec_change_is_a_conflict() {
        let tmp = tempfile::tempdir().unwrap();
        StoreDir::open(tmp.path(), Some(config(1)), NOW).unwrap();
        let err = StoreDir::open(tmp.path(), Some(config(2)), NOW).err().unwrap();
        assert_eq!(err.code(), "config_conflict");
    }

    #[test]
    fn window_follows_the_caller() {
        let tmp = tempfile::tempdir().unwrap();
        let mut dir = StoreDir::open(tmp.path(), Some(config(1)), NOW).unwrap();
        dir.ingest_batch(records(), NOW).unwrap();
        dir.checkpoint().unwrap();
        drop(dir);
        let mut narrow = config(1);
        narrow.window_days = 30;
        let dir = StoreDir::open(tmp.path(), Some(narrow), NOW).unwrap();
        assert_eq!(dir.config().window_days, 30);
        assert!(dir.store().items().all(|i| i.meta.timestamp >= NOW.minus_days(30 + 7)));
    }

    #[test]
    fn checkpoint_keeps_one_snapshot() {
        let tmp = tempfile::tempdir().unwrap();
        let mut dir = StoreDir::open(tmp.path(), Some(config(1)), NOW).unwrap();
        for chunk in records().chunks(7) {
            dir.ingest_batch(chunk.to_vec(), NOW).unwrap();
            dir.checkpoint().unwrap();
        }
        let snaps: Vec<_> = std::fs::read_dir(tmp.path())
            .unwrap()
            .flatten()
            .filter(|e| e.file_name().to_string_lossy().starts_with("snapshot-"))
            .collect();
        assert_eq!(snaps.len(), 1);
        assert_eq!(std::fs::read_to_string(tmp.path().join("CURRENT")).unwrap().trim(), "snapshot-000003");
    }

    #[test]
    fn opening_nothing_without_config_fails() {
        let tmp = tempfile::tempdir().unwrap();
        assert_eq!(StoreDir::open(tmp.path(), None, NOW).err().unwrap().code(), "invalid_request");
    }
}
