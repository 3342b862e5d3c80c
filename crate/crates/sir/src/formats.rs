//! JSONL sidecars and the vector/metadata file pair.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sir_core::metrics::JudgedQuery;
use sir_core::variants::VariantGroup;
use sir_core::{EmbeddingVector, IngestRecord, Timestamp};

use crate::error::{Result, SirError};
use crate::sirv;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRecord {
    pub id: String,
    pub product_id: String,
    pub title: String,
    pub timestamp: Timestamp,
}

impl MetaRecord {
    pub fn of(r: &IngestRecord) -> Self {
        Self {
            id: r.id.clone(),
            product_id: r.product_id.clone(),
            title: r.title.clone(),
            timestamp: r.timestamp,
        }
    }
}

/// Parses one JSONL document per non-blank line. Each entry is either the
/// value or a parse error naming the line.
pub fn parse_jsonl<T: DeserializeOwned>(reader: impl BufRead, context: &str) -> Result<Vec<Result<T>>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(SirError::io(context))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| SirError::parse(format!("{context} line {}", i + 1), e)),
        );
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<Result<T>>> {
    let file = File::open(path).map_err(SirError::io(path))?;
    parse_jsonl(BufReader::new(file), &path.display().to_string())
}

/// Like [`read_jsonl`] but fails on the first malformed line.
pub fn read_jsonl_strict<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_jsonl(path)?.into_iter().collect()
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let file = File::create(path).map_err(SirError::io(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| SirError::parse(path.display().to_string(), e))?;
        w.write_all(b"\n").map_err(SirError::io(path))?;
    }
    w.into_inner()
        .map_err(|e| SirError::io(path)(e.into_error()))?
        .sync_all()
        .map_err(SirError::io(path))
}

pub fn read_groups(path: &Path) -> Result<Vec<VariantGroup>> {
    read_jsonl_strict(path)
}

pub fn read_judgments(path: &Path) -> Result<Vec<JudgedQuery>> {
    let judged: Vec<JudgedQuery> = read_jsonl_strict(path)?;
    for j in &judged {
        j.validate()?;
    }
    Ok(judged)
}

/// Joins vectors with their metadata by id, in vector-file order. Vectors
/// without metadata, metadata without vectors and malformed entries come
/// back as errors so callers can count and skip them.
pub fn join_records(vectors: Vec<Result<sirv::SirvRecord>>, meta: Vec<Result<MetaRecord>>) -> Vec<Result<IngestRecord>> {
    let mut out = Vec::with_capacity(vectors.len());
    let mut by_id: HashMap<String, MetaRecord> = HashMap::with_capacity(meta.len());
    for m in meta {
        match m {
            Ok(m) => {
                if let Some(dup) = by_id.insert(m.id.clone(), m) {
                    out.push(Err(SirError::Invalid(format!("duplicate metadata for {}", dup.id))));
                }
            }
            Err(e) => out.push(Err(e)),
        }
    }
    for v in vectors {
        let v = match v {
            Ok(v) => v,
            Err(e) => {
                out.push(Err(e));
                continue;
            }
        };
        let Some(m) = by_id.remove(&v.id) else {
            out.push(Err(SirError::Invalid(format!("no metadata for vector {}", v.id))));
            continue;
        };
        out.push(
            EmbeddingVector::new(v.values)
                .map(|embedding| IngestRecord {
                    id: m.id,
                    product_id: m.product_id,
                    title: m.title,
                    embedding,
                    timestamp: m.timestamp,
                })
                .map_err(|e| SirError::Invalid(format!("vector {}: {e}", v.id))),
        );
    }
    let mut orphans: Vec<String> = by_id.into_keys().collect();
    orphans.sort();
    out.extend(orphans.into_iter().map(|id| Err(SirError::Invalid(format!("no vector for metadata {id}")))));
    out
}

/// Reads a `vectors.sirv` + `meta.jsonl` pair. A framing error in the
/// vector file is fatal; per-record problems are returned inline.
pub fn read_pair(vectors: &Path, meta: &Path) -> Result<Vec<Result<IngestRecord>>> {
    let reader = sirv::open(vectors)?;
    let vecs: Vec<Result<sirv::SirvRecord>> = reader.collect();
    if let Some(Err(e)) = vecs.iter().find(|r| r.is_err()) {
        return Err(match e {
            SirError::Integrity { context, offset, message } => SirError::integrity(context, *offset, message),
            other => SirError::Invalid(other.to_string()),
        });
    }
    Ok(join_records(vecs, read_jsonl(meta)?))
}

/// Writes records as a `vectors.sirv` + `meta.jsonl` pair in `dir`.
pub fn write_pair(dir: &Path, records: &[IngestRecord]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(SirError::io(dir))?;
    let dim = records.first().map_or(0, |r| r.embedding.dim()) as u32;
    sirv::write_all(
        &dir.join("vectors.sirv"),
        dim,
        records.iter().map(|r| (r.id.as_str(), r.embedding.values())),
    )?;
    let meta: Vec<MetaRecord> = records.iter().map(MetaRecord::of).collect();
    write_jsonl(&dir.join("meta.jsonl"), &meta)
}
