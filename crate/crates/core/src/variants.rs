//! Two-stage variant candidate generation: title retrieval, then image
//! neighbors of every title candidate.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use hashbrown::HashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::SearchParams;
use crate::store::RollingStore;
use crate::text::TfIdfCorpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoSParams {
    /// Title candidates.
    pub n: usize,
    /// Image neighbors per title candidate.
    pub k: usize,
    /// Image search radius.
    pub radius: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub text: bool,
    pub image: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub query_id: String,
    pub entries: BTreeMap<String, Provenance>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }
}

/// Title corpus over every item currently in `store`.
pub fn title_corpus(store: &RollingStore) -> TfIdfCorpus {
    let items: Vec<_> = store.items().collect();
    TfIdfCorpus::build(items.iter().map(|v| (v.meta.id.as_str(), &v.meta.tokens)))
}

/// Image neighbors of `id` ordered by `(distance, id)`, excluding `id`.
fn image_neighbors(store: &RollingStore, id: &str, limit: usize, radius: usize) -> Result<Vec<String>> {
    if limit == 0 {
        return Ok(Vec::new());
    }
    let item = store
        .get(id)
        .ok_or_else(|| Error::NotFound(alloc::format!("item {id}")))?;
    let code = item.code(store.codec().code_bits);
    let params = SearchParams::new(limit + 1, radius);
    let hits = store.search_code(&code, &params, None, None, Some(id))?;
    Ok(hits.into_iter().map(|h| h.id).filter(|h| h != id).take(limit).collect())
}

fn text_candidates(store: &RollingStore, corpus: &TfIdfCorpus, query_id: &str, n: usize) -> Result<Vec<String>> {
    let item = store
        .get(query_id)
        .ok_or_else(|| Error::NotFound(alloc::format!("item {query_id}")))?;
    Ok(corpus
        .top_n(&item.meta.tokens, n, Some(query_id))
        .into_iter()
        .map(|(id, _)| id)
        .collect())
}

fn assemble<'a>(query_id: &str, text: &[String], mut neighbors: impl FnMut(&str) -> Result<&'a [String]>, k: usize) -> Result<CandidateSet> {
    let mut entries: BTreeMap<String, Provenance> = BTreeMap::new();
    for c in text {
        entries.entry(c.clone()).or_default().text = true;
    }
    if k > 0 {
        for c in text {
            for nb in neighbors(c)?.iter().filter(|nb| *nb != query_id).take(k) {
                entries.entry(nb.clone()).or_default().image = true;
            }
        }
    }
    Ok(CandidateSet {
        query_id: query_id.to_string(),
        entries,
    })
}

/// Candidate set for `query_id`: the top `n` title matches plus the top `k`
/// image neighbors of each of them.
pub fn generate(store: &RollingStore, corpus: &TfIdfCorpus, query_id: &str, params: SoSParams) -> Result<CandidateSet> {
    let text = text_candidates(store, corpus, query_id, params.n)?;
    let mut cache: HashMap<String, Vec<String>> = HashMap::new();
    for c in &text {
        cache.insert(c.clone(), image_neighbors(store, c, params.k + 1, params.radius)?);
    }
    assemble(query_id, &text, |c| Ok(cache[c].as_slice()), params.k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub n: usize,
    pub k: usize,
    pub mean_recall: f64,
    pub mean_candidates: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub rows: Vec<CurveRow>,
    /// Per-query recall, keyed by query id, for each row in order.
    pub per_query: Vec<BTreeMap<String, f64>>,
    pub queries: usize,
    pub skipped_singletons: usize,
}

impl RecallCurve {
    pub fn row(&self, n: usize, k: usize) -> Option<&CurveRow> {
        self.rows.iter().find(|r| r.n == n && r.k == k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantGroup {
    pub group_id: String,
    pub member_ids: Vec<String>,
}

/// Recall of every group member against the rest of its group, over the
/// `n_grid × k_grid` parameter grid.
pub fn recall_curve(
    store: &RollingStore,
    groups: &[VariantGroup],
    n_grid: &[usize],
    k_grid: &[usize],
    radius: usize,
) -> Result<RecallCurve> {
    for g in groups {
        if let Some(missing) = g.member_ids.iter().find(|id| !store.contains(id)) {
            return Err(Error::NotFound(alloc::format!("group {} member {missing}", g.group_id)));
        }
    }
    let corpus = title_corpus(store);
    let n_max = n_grid.iter().copied().max().unwrap_or(0);
    let k_max = k_grid.iter().copied().max().unwrap_or(0);
    let mut cache: HashMap<String, Vec<String>> = HashMap::new();

    let grid: Vec<(usize, usize)> = n_grid
        .iter()
        .flat_map(|&n| k_grid.iter().map(move |&k| (n, k)))
        .collect();
    let mut recall_sum = alloc::vec![0.0; grid.len()];
    let mut count_sum = alloc::vec![0.0; grid.len()];
    let mut per_query: Vec<BTreeMap<String, f64>> = alloc::vec![BTreeMap::new(); grid.len()];
    let mut queries = 0usize;
    let mut skipped = 0usize;

    for g in groups {
        let members: BTreeSet<&str> = g.member_ids.iter().map(String::as_str).collect();
        if members.len() < 2 {
            skipped += 1;
            continue;
        }
        for &q in &members {
            queries += 1;
            let text = text_candidates(store, &corpus, q, n_max)?;
            if k_max > 0 {
                for c in &text {
                    if !cache.contains_key(c) {
                        let nb = image_neighbors(store, c, k_max + 1, radius)?;
                        cache.insert(c.clone(), nb);
                    }
                }
            }
            let relevant = members.len() - 1;
            for (i, &(n, k)) in grid.iter().enumerate() {
                let head = &text[..n.min(text.len())];
                let set = assemble(q, head, |c| Ok(cache[c].as_slice()), k)?;
                let found = set
                    .entries
                    .keys()
                    .filter(|id| *id != q && members.contains(id.as_str()))
                    .count();
                let recall = found as f64 / relevant as f64;
                recall_sum[i] += recall;
                count_sum[i] += set.len() as f64;
                per_query[i].insert(q.to_string(), recall);
            }
        }
    }

    let denom = queries.max(1) as f64;
    let rows = grid
        .iter()
        .enumerate()
        .map(|(i, &(n, k))| CurveRow {
            n,
            k,
            mean_recall: recall_sum[i] / denom,
            mean_candidates: count_sum[i] / denom,
        })
        .collect();
    Ok(RecallCurve {
        rows,
        per_query,
        queries,
        skipped_singletons: skipped,
    })
}
