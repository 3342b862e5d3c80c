//! Snapshot layout:
//!
//! ```text
//! <dir>/store.json                  format version, store config, WAL position
//! <dir>/segments/<bucket>/manifest.json
//! <dir>/segments/<bucket>/codes.bin     packed codes, one per meta line
//! <dir>/segments/<bucket>/meta.jsonl
//! <dir>/segments/<bucket>/embeds.sirv   only when embeddings are kept
//! ```
//!
//! Every data file's SHA-256 is recorded in the segment manifest and checked
//! on load.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sir_core::store::{ItemMeta, Segment};
use sir_core::{BinaryCode, CodecConfig, EmbeddingVector, RollingStore, StoreConfig, Timestamp};

use crate::error::{Result, SirError};
use crate::formats::{parse_jsonl, write_jsonl, MetaRecord};
use crate::sirv;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub version: u32,
    pub config: StoreConfig,
    /// Last write-ahead-log sequence number folded into this snapshot.
    #[serde(default)]
    pub wal_seq: u64,
    pub segments: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentManifest {
    pub version: u32,
    pub codec: CodecConfig,
    pub bucket_start: Timestamp,
    pub count: usize,
    /// File name → hex SHA-256.
    pub files: BTreeMap<String, String>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(SirError::io(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_vec_pretty(value).map_err(|e| SirError::parse(path.display().to_string(), e))?;
    write_durable(path, &text)
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_durable(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        use std::io::Write;
        let mut f = fs::File::create(&tmp).map_err(SirError::io(&tmp))?;
        f.write_all(bytes).map_err(SirError::io(&tmp))?;
        f.sync_all().map_err(SirError::io(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(SirError::io(path))?;
    sync_dir(path.parent().unwrap_or(Path::new(".")));
    Ok(())
}

fn sync_dir(dir: &Path) {
    // directory fsync is best effort; not every platform supports it
    if let Ok(d) = fs::File::open(dir) {
        let _ = d.sync_all();
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(SirError::io(path))?;
    serde_json::from_slice(&bytes).map_err(|e| SirError::parse(path.display().to_string(), e))
}

fn segment_name(bucket: Timestamp) -> String {
    format!("{:012}", bucket.secs())
}

fn write_segment(seg: &Segment, dir: &Path, config: &StoreConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(SirError::io(dir))?;
    let mut items: Vec<_> = seg.items().collect();
    items.sort_by(|a, b| a.meta.id.cmp(&b.meta.id));

    let mut codes = Vec::with_capacity(items.len() * config.codec.code_bits.div_ceil(8));
    for item in &items {
        codes.extend_from_slice(&item.code(config.codec.code_bits).to_bytes());
    }
    let mut files = BTreeMap::new();
    let codes_path = dir.join("codes.bin");
    write_durable(&codes_path, &codes)?;
    files.insert("codes.bin".to_string(), hex::encode(Sha256::digest(&codes)));

    let meta: Vec<MetaRecord> = items
        .iter()
        .map(|v| MetaRecord {
            id: v.meta.id.clone(),
            product_id: v.meta.product_id.clone(),
            title: v.meta.title.clone(),
            timestamp: v.meta.timestamp,
        })
        .collect();
    let meta_path = dir.join("meta.jsonl");
    write_jsonl(&meta_path, &meta)?;
    files.insert("meta.jsonl".to_string(), sha256_file(&meta_path)?);

    if config.store_embeddings && items.iter().all(|v| v.embedding.is_some()) {
        let path = dir.join("embeds.sirv");
        sirv::write_all(
            &path,
            config.codec.dim as u32,
            items.iter().map(|v| (v.meta.id.as_str(), v.embedding.expect("checked").values())),
        )?;
        files.insert("embeds.sirv".to_string(), sha256_file(&path)?);
    }

    write_json(
        &dir.join("manifest.json"),
        &SegmentManifest {
            version: FORMAT_VERSION,
            codec: config.codec,
            bucket_start: seg.bucket_start(),
            count: items.len(),
            files,
        },
    )
}

/// Writes a complete snapshot of `store` to `dir`, replacing any previous
/// snapshot there only once the new one is fully on disk.
pub fn persist(store: &RollingStore, dir: &Path) -> Result<StoreManifest> {
    persist_at(store, dir, 0)
}

pub fn persist_at(store: &RollingStore, dir: &Path, wal_seq: u64) -> Result<StoreManifest> {
    let staging = sibling(dir, "staging");
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(SirError::io(&staging))?;
    }
    let seg_root = staging.join("segments");
    fs::create_dir_all(&seg_root).map_err(SirError::io(&seg_root))?;
    let mut segments = Vec::new();
    for seg in store.segments() {
        let name = segment_name(seg.bucket_start());
        write_segment(seg, &seg_root.join(&name), store.config())?;
        segments.push(name);
    }
    let manifest = StoreManifest {
        version: FORMAT_VERSION,
        config: *store.config(),
        wal_seq,
        segments,
    };
    write_json(&staging.join("store.json"), &manifest)?;
    sync_dir(&seg_root);

    let retired = sibling(dir, "retired");
    if retired.exists() {
        fs::remove_dir_all(&retired).map_err(SirError::io(&retired))?;
    }
    if dir.exists() {
        fs::rename(dir, &retired).map_err(SirError::io(dir))?;
    }
    fs::rename(&staging, dir).map_err(SirError::io(dir))?;
    if retired.exists() {
        fs::remove_dir_all(&retired).map_err(SirError::io(&retired))?;
    }
    sync_dir(dir.parent().unwrap_or(Path::new(".")));
    Ok(manifest)
}

fn sibling(dir: &Path, tag: &str) -> PathBuf {
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    dir.with_file_name(format!(".{name}.{tag}"))
}

pub fn read_manifest(dir: &Path) -> Result<Option<StoreManifest>> {
    let path = dir.join("store.json");
    if !path.exists() {
        return Ok(None);
    }
    let m: StoreManifest = read_json(&path)?;
    if m.version != FORMAT_VERSION {
        return Err(SirError::UnsupportedVersion {
            context: path.display().to_string(),
            found: m.version,
            expected: FORMAT_VERSION,
        });
    }
    Ok(Some(m))
}

fn load_segment(store: &mut RollingStore, dir: &Path, name: &str) -> Result<()> {
    let context = format!("segment {name}");
    let bad = |offset: u64, msg: String| SirError::integrity(context.clone(), offset, msg);
    let m: SegmentManifest = read_json(&dir.join("manifest.json")).map_err(|e| bad(0, e.to_string()))?;
    if m.version != FORMAT_VERSION {
        return Err(SirError::UnsupportedVersion {
            context,
            found: m.version,
            expected: FORMAT_VERSION,
        });
    }
    let config = *store.config();
    if m.codec != config.codec {
        return Err(SirError::ConfigConflict(format!("{context} was written with a different codec")));
    }
    for required in ["codes.bin", "meta.jsonl"] {
        if !m.files.contains_key(required) {
            return Err(bad(0, format!("manifest does not list {required}")));
        }
    }
    let mut blobs = BTreeMap::new();
    for (file, want) in &m.files {
        let path = dir.join(file);
        let bytes = fs::read(&path).map_err(|e| bad(0, format!("{file}: {e}")))?;
        if hex::encode(Sha256::digest(&bytes)) != *want {
            return Err(bad(0, format!("{file} does not match its recorded checksum")));
        }
        blobs.insert(file.as_str(), bytes);
    }

    let metas: Vec<MetaRecord> = parse_jsonl(BufReader::new(&blobs["meta.jsonl"][..]), &context)?
        .into_iter()
        .collect::<Result<_>>()
        .map_err(|e| bad(0, e.to_string()))?;
    if metas.len() != m.count {
        return Err(bad(0, format!("meta.jsonl has {} records, manifest says {}", metas.len(), m.count)));
    }
    let width = config.codec.code_bits.div_ceil(8);
    let codes = &blobs["codes.bin"];
    if codes.len() != width * m.count {
        return Err(bad(codes.len() as u64, format!("codes.bin should hold {} bytes", width * m.count)));
    }
    let mut embeddings: Option<Vec<sirv::SirvRecord>> = None;
    if let Some(bytes) = blobs.get("embeds.sirv") {
        let reader = sirv::SirvReader::new(&bytes[..], format!("{context}/embeds.sirv"))?;
        let recs = reader.collect::<Result<Vec<_>>>()?;
        if recs.len() != m.count {
            return Err(bad(0, "embeds.sirv record count differs from meta.jsonl".into()));
        }
        embeddings = Some(recs);
    }

    for (i, meta) in metas.into_iter().enumerate() {
        if config.bucket_of(meta.timestamp) != m.bucket_start {
            return Err(bad(0, format!("item {} lies outside bucket {}", meta.id, m.bucket_start)));
        }
        let code = BinaryCode::from_bytes(&codes[i * width..(i + 1) * width], config.codec.code_bits)
            .map_err(|e| bad((i * width) as u64, e.to_string()))?;
        let embedding = match &embeddings {
            Some(recs) => {
                let r = &recs[i];
                if r.id != meta.id {
                    return Err(bad(0, format!("embeds.sirv record {i} is {}, expected {}", r.id, meta.id)));
                }
                Some(EmbeddingVector::new(r.values.clone()).map_err(|e| bad(0, e.to_string()))?)
            }
            None => None,
        };
        let meta = ItemMeta::new(meta.id, meta.product_id, meta.title, meta.timestamp);
        store.restore(meta, code, embedding)?;
    }
    Ok(())
}

/// Loads a snapshot written by [`persist`]. Returns `None` for a directory
/// without a snapshot.
pub fn load(dir: &Path) -> Result<Option<(RollingStore, StoreManifest)>> {
    let Some(manifest) = read_manifest(dir)? else {
        return Ok(None);
    };
    let mut store = RollingStore::new(manifest.config)?;
    for name in &manifest.segments {
        load_segment(&mut store, &dir.join("segments").join(name), name)?;
    }
    Ok(Some((store, manifest)))
}

/// Loads `dir`, or an empty store with `config` when `dir` holds no
/// snapshot.
pub fn load_or_empty(dir: &Path, config: StoreConfig) -> Result<RollingStore> {
    match load(dir)? {
        Some((store, _)) => Ok(store),
        None => Ok(RollingStore::new(config)?),
    }
}
