//! Benchmark harness over seeded synthetic corpora.

use serde::{Deserialize, Serialize};
use sir_core::metrics::{run_benchmark, LatencyReport, MetricsReport};
use sir_core::query::{run_query, Clock};
use sir_core::synth::{clustered, ClusterSpec};
use sir_core::{CodecConfig, Query, RollingStore, SearchParams, StoreConfig, TextPredicate};

use crate::clock::MonotonicClock;
use crate::error::{Result, SirError};
use crate::report::{self, FilterRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecVariant {
    pub label: String,
    pub code_bits: usize,
    #[serde(default = "default_subcode_bits")]
    pub subcode_bits: usize,
    /// Overrides the spec-wide radius.
    #[serde(default)]
    pub radius: Option<usize>,
}

fn default_subcode_bits() -> usize {
    CodecConfig::DEFAULT_SUBCODE_BITS
}

fn default_k() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub corpus: ClusterSpec,
    pub variants: Vec<CodecVariant>,
    #[serde(default)]
    pub projection_seed: u64,
    /// Ranked list depth per query.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Search radius; absent means an exhaustive scan.
    #[serde(default)]
    pub radius: Option<usize>,
    #[serde(default)]
    pub rerank_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub label: String,
    pub metrics: MetricsReport,
    pub latency: Option<LatencyReport>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchOutput {
    pub rows: Vec<BenchRow>,
}

impl BenchOutput {
    pub fn quality_csv(&self) -> Result<String> {
        let rows: Vec<(String, MetricsReport)> = self.rows.iter().map(|r| (r.label.clone(), r.metrics.clone())).collect();
        Ok(String::from_utf8(report::quality_table(Vec::new(), &rows)?).expect("csv is utf-8"))
    }

    pub fn latency_csv(&self) -> Result<String> {
        let rows: Vec<(String, LatencyReport)> = self
            .rows
            .iter()
            .filter_map(|r| r.latency.clone().map(|l| (r.label.clone(), l)))
            .collect();
        Ok(String::from_utf8(report::latency_table(Vec::new(), &rows)?).expect("csv is utf-8"))
    }
}

pub fn codec_for(dim: usize, variant: &CodecVariant, seed: u64) -> Result<CodecConfig> {
    if variant.subcode_bits == 0 || variant.code_bits % variant.subcode_bits != 0 {
        return Err(SirError::Invalid(format!(
            "{}: code_bits {} is not a multiple of subcode_bits {}",
            variant.label, variant.code_bits, variant.subcode_bits
        )));
    }
    Ok(CodecConfig::new(dim, variant.code_bits, variant.code_bits / variant.subcode_bits, seed)?)
}

pub fn build_store(config: StoreConfig, records: &[sir_core::IngestRecord], now: sir_core::Timestamp) -> Result<RollingStore> {
    let mut store = RollingStore::new(config)?;
    for r in records {
        store.ingest(r.clone(), now)?;
    }
    Ok(store)
}

pub fn run(spec: &BenchSpec) -> Result<BenchOutput> {
    if spec.variants.is_empty() {
        return Err(SirError::Invalid("bench spec lists no codec variants".into()));
    }
    let corpus = clustered(&spec.corpus)?;
    let clock = MonotonicClock::new();
    let mut rows = Vec::new();
    for v in &spec.variants {
        let codec = codec_for(spec.corpus.dim, v, spec.projection_seed)?;
        let store = build_store(StoreConfig::new(codec), &corpus.records, spec.corpus.now)?;
        let radius = v.radius.or(spec.radius).unwrap_or(codec.subcode_count);
        let mut params = SearchParams::new(spec.k, radius);
        params.rerank_depth = spec.rerank_depth;
        let outcome = run_benchmark(&store, &corpus.judged, params, &clock);
        rows.push(BenchRow {
            label: v.label.clone(),
            metrics: outcome.metrics,
            latency: outcome.latency,
            failures: outcome.failures.len(),
        });
    }
    Ok(BenchOutput { rows })
}

/// Mean query time with and without a text prefilter for one store.
/// Queries alternate between the two modes so drift affects both equally.
pub fn filter_timing(store: &RollingStore, query_ids: &[String], predicate: &TextPredicate, params: SearchParams, clock: &dyn Clock) -> Result<(f64, f64)> {
    let mut with = 0.0;
    let mut without = 0.0;
    for id in query_ids {
        let plain = Query::by_item(id.clone(), params);
        let filtered = plain.clone().with_predicate(predicate.clone());
        let t0 = clock.now_ns();
        run_query(store, &filtered, clock)?;
        let t1 = clock.now_ns();
        run_query(store, &plain, clock)?;
        let t2 = clock.now_ns();
        with += (t1 - t0) as f64 / 1e6;
        without += (t2 - t1) as f64 / 1e6;
    }
    let n = query_ids.len().max(1) as f64;
    Ok((with / n, without / n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBenchSpec {
    pub sizes: Vec<usize>,
    pub dim: usize,
    pub code_bits: usize,
    #[serde(default = "default_subcode_bits")]
    pub subcode_bits: usize,
    pub queries: usize,
    pub k: usize,
    /// Absent means an exhaustive scan.
    #[serde(default)]
    pub radius: Option<usize>,
    pub noise: f64,
    pub seed: u64,
    pub now: sir_core::Timestamp,
}

/// Index-size sweep of filtered versus unfiltered latency. Every tenth
/// title carries the keyword `lamp`, which is the filter.
pub fn filter_benchmark(spec: &FilterBenchSpec) -> Result<Vec<FilterRow>> {
    let clock = MonotonicClock::new();
    let variant = CodecVariant {
        label: String::new(),
        code_bits: spec.code_bits,
        subcode_bits: spec.subcode_bits,
        radius: None,
    };
    let codec = codec_for(spec.dim, &variant, spec.seed)?;
    let predicate = TextPredicate::new([["lamp"]])?;
    let mut rows = Vec::new();
    for &size in &spec.sizes {
        let per_cluster = 20;
        let mut cs = ClusterSpec::new(size.div_ceil(per_cluster), per_cluster, spec.dim, spec.noise, spec.seed, spec.now);
        cs.keyword_every = 10;
        let corpus = clustered(&cs)?;
        let store = build_store(StoreConfig::new(codec), &corpus.records[..size.min(corpus.records.len())], spec.now)?;
        let stride = (size / spec.queries.max(1)).max(1);
        let ids: Vec<String> = corpus.records[..size.min(corpus.records.len())]
            .iter()
            .step_by(stride)
            .take(spec.queries)
            .map(|r| r.id.clone())
            .collect();
        let params = SearchParams::new(spec.k, spec.radius.unwrap_or(codec.subcode_count));
        // warm-up pass
        filter_timing(&store, &ids[..ids.len().min(5)], &predicate, params, &clock)?;
        let (with_filter_ms, without_filter_ms) = filter_timing(&store, &ids, &predicate, params, &clock)?;
        rows.push(FilterRow {
            index_size: size,
            with_filter_ms,
            without_filter_ms,
        });
    }
    Ok(rows)
}
