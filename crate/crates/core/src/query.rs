//! End-to-end query pipeline over a [`RollingStore`].

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::codec::{cosine, EmbeddingVector};
use crate::error::{Error, Result};
use crate::index::{rerank_by_cosine, RankedHit, SearchParams};
use crate::metrics::LatencyReport;
use crate::store::RollingStore;
use crate::text::TextPredicate;

/// Monotonic time source in nanoseconds. The engine never reads a clock on
/// its own so that it stays `no_std`.
pub trait Clock {
    fn now_ns(&self) -> u64;
}

/// A clock that never advances, for callers that do not need timings.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ns(&self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryTarget {
    Embedding(EmbeddingVector),
    ItemRef(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub target: QueryTarget,
    pub params: SearchParams,
    #[serde(default)]
    pub predicate: Option<TextPredicate>,
    /// Maximum Hamming distance τ of returned hits.
    #[serde(default)]
    pub threshold: Option<u32>,
}

impl Query {
    pub fn by_item(id: impl Into<String>, params: SearchParams) -> Self {
        Self {
            target: QueryTarget::ItemRef(id.into()),
            params,
            predicate: None,
            threshold: None,
        }
    }

    pub fn by_embedding(v: EmbeddingVector, params: SearchParams) -> Self {
        Self {
            target: QueryTarget::Embedding(v),
            params,
            predicate: None,
            threshold: None,
        }
    }

    pub fn with_predicate(mut self, p: TextPredicate) -> Self {
        self.predicate = Some(p);
        self
    }

    pub fn with_threshold(mut self, tau: u32) -> Self {
        self.threshold = Some(tau);
        self
    }
}

/// Maps an analyst similarity in `[0, 1]` to a Hamming threshold
/// `round((1 - sim) * B)`.
pub fn similarity_to_threshold(similarity: f64, code_bits: usize) -> u32 {
    let sim = similarity.clamp(0.0, 1.0);
    libm::round((1.0 - sim) * code_bits as f64) as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageHit {
    #[serde(flatten)]
    pub hit: RankedHit<String>,
    pub product_id: String,
    pub title: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub prefilter_ms: f64,
    pub candidate_ms: f64,
    pub rerank_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultPage {
    pub hits: Vec<PageHit>,
    pub timings: Timings,
}

impl ResultPage {
    pub fn ids(&self) -> Vec<&str> {
        self.hits.iter().map(|h| h.hit.id.as_str()).collect()
    }
}

fn ms(from: u64, to: u64) -> f64 {
    to.saturating_sub(from) as f64 / 1e6
}

/// Binarizes (or looks up) the query, prefilters by text, gathers subcode
/// candidates across live segments, ranks them by `(distance, id)` and
/// optionally re-scores the head by cosine.
pub fn run_query(store: &RollingStore, q: &Query, clock: &dyn Clock) -> Result<ResultPage> {
    let t0 = clock.now_ns();
    let bits = store.codec().code_bits;
    if let Some(t) = q.threshold {
        if t as usize > bits {
            return Err(Error::config(alloc::format!("threshold {t} exceeds code length {bits}")));
        }
    }
    let (code, query_embedding, self_id) = match &q.target {
        QueryTarget::Embedding(v) => (store.binarize(v)?, Some(v.clone()), None),
        QueryTarget::ItemRef(id) => {
            let item = store
                .get(id)
                .ok_or_else(|| Error::NotFound(alloc::format!("item {id}")))?;
            (item.code(bits), item.embedding.cloned(), Some(id.as_str()))
        }
    };

    let t1 = clock.now_ns();
    let allow = q
        .predicate
        .as_ref()
        .filter(|p| !p.is_empty())
        .map(|p| store.prefilter(p));
    let t2 = clock.now_ns();

    let mut hits = store.search_code(&code, &q.params, allow.as_ref(), q.threshold, self_id)?;
    let t3 = clock.now_ns();

    if q.params.rerank_depth > 0 && store.config().store_embeddings {
        if let Some(qv) = &query_embedding {
            rerank_by_cosine(&mut hits, q.params.rerank_depth, |id| {
                store
                    .get(id)
                    .and_then(|v| v.embedding)
                    .and_then(|e| cosine(qv, e).ok())
            });
        }
    }
    let t4 = clock.now_ns();

    let hits = hits
        .into_iter()
        .map(|hit| {
            let meta = store.get(&hit.id).expect("hit is stored").meta;
            PageHit {
                product_id: meta.product_id.clone(),
                title: meta.title.clone(),
                hit,
            }
        })
        .collect();
    let t5 = clock.now_ns();
    Ok(ResultPage {
        hits,
        timings: Timings {
            prefilter_ms: ms(t1, t2),
            candidate_ms: ms(t2, t3),
            rerank_ms: ms(t3, t4),
            total_ms: ms(t0, t5),
        },
    })
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub pages: Vec<Result<ResultPage>>,
    pub per_query_ms: Vec<f64>,
    pub latency: Option<LatencyReport>,
}

/// Runs each query in turn; a failing query only affects its own slot.
pub fn batch_query(store: &RollingStore, queries: &[Query], clock: &dyn Clock) -> BatchOutcome {
    let mut pages = Vec::with_capacity(queries.len());
    let mut per_query_ms = Vec::with_capacity(queries.len());
    for q in queries {
        let start = clock.now_ns();
        let page = run_query(store, q, clock);
        per_query_ms.push(ms(start, clock.now_ns()));
        pages.push(page);
    }
    let latency = LatencyReport::from_samples(&per_query_ms);
    BatchOutcome {
        pages,
        per_query_ms,
        latency,
    }
}
