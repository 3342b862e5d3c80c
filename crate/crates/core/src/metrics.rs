//! Retrieval quality metrics and the benchmark driver.
//!
//! Ranked lists are assumed duplicate-free. Precision-style metrics divide
//! by the size of the relevant set, so a ranking shorter than the cutoff
//! simply counts its missing slots as non-relevant.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::codec::EmbeddingVector;
use crate::error::{Error, Result};
use crate::index::SearchParams;
use crate::query::{batch_query, Clock, Query, QueryTarget};
use crate::store::RollingStore;

fn check<T>(relevant: &BTreeSet<T>) -> Result<()> {
    if relevant.is_empty() {
        return Err(Error::InvalidJudgment("relevant set is empty"));
    }
    Ok(())
}

/// Fraction of the top `R = |relevant|` results that are relevant.
pub fn r_precision<T: Ord>(ranked: &[T], relevant: &BTreeSet<T>) -> Result<f64> {
    check(relevant)?;
    let r = relevant.len();
    let hits = ranked.iter().take(r).filter(|id| relevant.contains(id)).count();
    Ok(hits as f64 / r as f64)
}

/// `AP@K = sum over relevant ranks i <= K of Precision@i, / min(R, K)`.
pub fn average_precision_at_k<T: Ord>(ranked: &[T], relevant: &BTreeSet<T>, k: usize) -> Result<f64> {
    check(relevant)?;
    if k == 0 {
        return Err(Error::InvalidJudgment("K must be at least 1"));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in ranked.iter().take(k).enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / relevant.len().min(k) as f64)
}

/// Fraction of relevant items within the top `cutoff` results.
pub fn recall_at<T: Ord>(ranked: &[T], relevant: &BTreeSet<T>, cutoff: usize) -> Result<f64> {
    check(relevant)?;
    if cutoff == 0 {
        return Err(Error::InvalidJudgment("cutoff must be at least 1"));
    }
    let hits = ranked.iter().take(cutoff).filter(|id| relevant.contains(id)).count();
    Ok(hits as f64 / relevant.len() as f64)
}

pub const RECALL_CUTOFF: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgedQuery {
    pub query_id: String,
    /// Query by vector instead of by the indexed item `query_id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector>,
    pub relevant_ids: BTreeSet<String>,
}

impl JudgedQuery {
    pub fn new(query_id: impl Into<String>, relevant_ids: BTreeSet<String>) -> Result<Self> {
        let q = Self {
            query_id: query_id.into(),
            embedding: None,
            relevant_ids,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        check(&self.relevant_ids)?;
        if self.relevant_ids.contains(&self.query_id) {
            return Err(Error::InvalidJudgment("relevant set contains the query itself"));
        }
        Ok(())
    }

    fn target(&self) -> QueryTarget {
        match &self.embedding {
            Some(v) => QueryTarget::Embedding(v.clone()),
            None => QueryTarget::ItemRef(self.query_id.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    pub ap_at_1: f64,
    pub ap_at_5: f64,
    pub ap_at_10: f64,
    pub r_precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub map_at_1: f64,
    pub map_at_5: f64,
    pub map_at_10: f64,
    pub mean_r_precision: f64,
    pub approx_recall: f64,
    pub per_query: Vec<QueryMetrics>,
}

impl MetricsReport {
    pub fn from_queries(per_query: Vec<QueryMetrics>) -> Self {
        let n = per_query.len().max(1) as f64;
        let mean = |f: fn(&QueryMetrics) -> f64| per_query.iter().map(f).sum::<f64>() / n;
        Self {
            map_at_1: mean(|q| q.ap_at_1),
            map_at_5: mean(|q| q.ap_at_5),
            map_at_10: mean(|q| q.ap_at_10),
            mean_r_precision: mean(|q| q.r_precision),
            approx_recall: mean(|q| q.recall),
            per_query,
        }
    }
}

pub fn score_ranking(query_id: &str, ranked: &[String], relevant: &BTreeSet<String>) -> Result<QueryMetrics> {
    Ok(QueryMetrics {
        query_id: query_id.to_string(),
        ap_at_1: average_precision_at_k(ranked, relevant, 1)?,
        ap_at_5: average_precision_at_k(ranked, relevant, 5)?,
        ap_at_10: average_precision_at_k(ranked, relevant, 10)?,
        r_precision: r_precision(ranked, relevant)?,
        recall: recall_at(ranked, relevant, RECALL_CUTOFF)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub count: usize,
    pub min_ms: f64,
    pub max_ms: f64,
    pub mean_ms: f64,
    pub total_ms: f64,
    pub total_hours: f64,
}

impl LatencyReport {
    pub fn from_samples(samples_ms: &[f64]) -> Option<Self> {
        if samples_ms.is_empty() {
            return None;
        }
        let total: f64 = samples_ms.iter().sum();
        let min = samples_ms.iter().copied().fold(f64::INFINITY, f64::min);
        let max = samples_ms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // rounding in the sum can push the mean a hair outside the envelope
        let mean = (total / samples_ms.len() as f64).clamp(min, max);
        Some(Self {
            count: samples_ms.len(),
            min_ms: min,
            max_ms: max,
            mean_ms: mean,
            total_ms: total,
            total_hours: total / 3_600_000.0,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub metrics: MetricsReport,
    pub latency: Option<LatencyReport>,
    pub failures: Vec<(String, Error)>,
}

/// Runs every judged query and aggregates metrics. The query item itself is
/// removed from its ranking; failed queries are excluded from the means.
pub fn run_benchmark(store: &RollingStore, judged: &[JudgedQuery], params: SearchParams, clock: &dyn Clock) -> BenchmarkOutcome {
    let queries: Vec<Query> = judged
        .iter()
        .map(|j| Query {
            target: j.target(),
            params,
            predicate: None,
            threshold: None,
        })
        .collect();
    let outcome = batch_query(store, &queries, clock);
    let mut per_query = Vec::new();
    let mut failures = Vec::new();
    let mut samples = Vec::new();
    for ((j, page), t) in judged.iter().zip(outcome.pages).zip(outcome.per_query_ms) {
        let scored = page.and_then(|page| {
            let ranked: Vec<String> = page
                .hits
                .into_iter()
                .map(|h| h.hit.id)
                .filter(|id| *id != j.query_id)
                .collect();
            j.validate()?;
            score_ranking(&j.query_id, &ranked, &j.relevant_ids)
        });
        match scored {
            Ok(m) => {
                per_query.push(m);
                samples.push(t);
            }
            Err(e) => failures.push((j.query_id.clone(), e)),
        }
    }
    BenchmarkOutcome {
        metrics: MetricsReport::from_queries(per_query),
        latency: LatencyReport::from_samples(&samples),
        failures,
    }
}
