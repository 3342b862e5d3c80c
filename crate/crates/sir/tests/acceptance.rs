//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! `cargo test --test acceptance` runs everything; a trailing argument
//! restricts the run to criteria whose name contains it.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use serde::Deserialize;
use sir::bench::{self, BenchSpec, CodecVariant, FilterBenchSpec};
use sir::clock::MonotonicClock;
use sir::jobs::{run_sweep, StoredItem, SweepInput};
use sir::storedir::StoreDir;
use sir_core::index::{RankedHit, SubcodeIndex};
use sir_core::metrics::{average_precision_at_k, r_precision, recall_at};
use sir_core::query::{run_query, Clock};
use sir_core::rng::SplitMix64;
use sir_core::rules::{evaluate_rule, simulate_hits, Combine, ImageThreshold, Seed};
use sir_core::store::ItemMeta;
use sir_core::synth::{clustered, planted_variants, ClusterSpec, VariantSpec};
use sir_core::text::tokenize;
use sir_core::variants::recall_curve;
use sir_core::{
    BinaryCode, CodecConfig, EmbeddingVector, IngestRecord, Query, RollingStore, Rule, SearchParams, StoreConfig,
    TextPredicate, Timestamp,
};

const NOW: Timestamp = Timestamp::from_secs(1_700_000_000);
const DAY: i64 = 86_400;

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria = [
        Criterion { name: "pigeonhole-completeness", budget: Duration::from_secs(10), run: pigeonhole_completeness },
        Criterion { name: "search-exactness", budget: Duration::from_secs(30), run: search_exactness },
        Criterion { name: "subcoding-quality", budget: Duration::from_secs(300), run: subcoding_quality },
        Criterion { name: "latency-trend", budget: Duration::from_secs(600), run: latency_trend },
        Criterion { name: "text-prefilter-speedup", budget: Duration::from_secs(600), run: prefilter_speedup },
        Criterion { name: "rolling-window", budget: Duration::from_secs(5), run: rolling_window },
        Criterion { name: "metrics-correctness", budget: Duration::from_secs(5), run: metrics_correctness },
        Criterion { name: "suggestion-of-suggestions", budget: Duration::from_secs(300), run: suggestion_of_suggestions },
        Criterion { name: "rule-consistency", budget: Duration::from_secs(120), run: rule_consistency },
        Criterion { name: "persistence-round-trip", budget: Duration::from_secs(60), run: persistence_round_trip },
    ];
    // panics are reported on the criterion's FAIL line
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let mut ran = 0;
    for c in &criteria {
        if filter.as_deref().is_some_and(|f| !c.name.contains(f)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {}s budget", c.budget.as_secs())),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_code(rng: &mut SplitMix64, bits: usize) -> BinaryCode {
    let words = (0..bits.div_ceil(64)).map(|_| rng.next_u64()).collect::<Vec<_>>();
    let mut code = BinaryCode::zeros(bits);
    for j in 0..bits {
        if words[j / 64] >> (j % 64) & 1 == 1 {
            code.set(j);
        }
    }
    code
}

/// `code` with `flips` distinct bits inverted.
fn perturb(rng: &mut SplitMix64, code: &BinaryCode, flips: usize) -> BinaryCode {
    let mut positions: Vec<usize> = (0..code.len()).collect();
    let mut out = code.clone();
    for i in 0..flips {
        let j = i + rng.below(positions.len() - i);
        positions.swap(i, j);
        out.flip(positions[i]);
    }
    out
}

fn hamming(a: &BinaryCode, b: &BinaryCode) -> u32 {
    (0..a.len()).filter(|&j| a.bit(j) != b.bit(j)).count() as u32
}

fn pigeonhole_completeness() -> Outcome {
    let mut in_radius = 0usize;
    let mut misses = 0usize;
    let mut candidates = 0usize;
    for trial in 0..50u64 {
        let mut rng = SplitMix64::new(0xB17_0000 + trial);
        let mut index = SubcodeIndex::new(CodecConfig::new(64, 64, 8, 0).map_err(|e| e.to_string())?).unwrap();
        let mut codes: Vec<BinaryCode> = Vec::with_capacity(2000);
        for i in 0..2000 {
            // half the codes are near copies of earlier ones so that every
            // radius has neighbors to find
            let code = if i < 1000 {
                random_code(&mut rng, 64)
            } else {
                let base = codes[rng.below(i)].clone();
                { let f = 1 + rng.below(6); perturb(&mut rng, &base, f) }
            };
            index.insert(i as u32, &code).unwrap();
            codes.push(code);
        }
        for r in [1usize, 2, 3, 5] {
            for _ in 0..10 {
                let base = codes[rng.below(codes.len())].clone();
                let f = rng.below(r + 1);
                let query = perturb(&mut rng, &base, f);
                let found: BTreeSet<u32> = index.candidates(&query, r, None).unwrap().iter().map(|c| c.slot).collect();
                candidates += found.len();
                for (i, c) in codes.iter().enumerate() {
                    if hamming(c, &query) as usize <= r {
                        in_radius += 1;
                        if !found.contains(&(i as u32)) {
                            misses += 1;
                        }
                    }
                }
            }
        }
    }
    ensure(misses == 0, || format!("{misses} of {in_radius} in-radius items missed"))?;
    ensure(in_radius > 2000, || format!("only {in_radius} in-radius items exercised"))?;
    Ok(format!("0 misses over {in_radius} in-radius items ({candidates} candidates, 2000 queries)"))
}

fn search_exactness() -> Outcome {
    let (bits, m, r, k) = (128usize, 8usize, 6usize, 10usize);
    let width = bits / m;
    let mut pages = 0;
    let mut hits_checked = 0;
    for s in 0..5u64 {
        let mut rng = SplitMix64::new(0xE8AC_7000 + s);
        let codec = CodecConfig::new(16, bits, m, s).unwrap();
        let mut config = StoreConfig::new(codec);
        config.store_embeddings = false;
        let mut store = RollingStore::new(config).unwrap();
        let bases: Vec<BinaryCode> = (0..100).map(|_| random_code(&mut rng, bits)).collect();
        let mut codes: Vec<(String, BinaryCode)> = Vec::new();
        for i in 0..1000 {
            let f = rng.below(9);
            let code = perturb(&mut rng, &bases[i % 100], f);
            let id = format!("item-{:04}", rng.below(10_000) * 1000 + i);
            let ts = NOW.plus_secs(-(rng.below(60) as i64) * DAY);
            store
                .restore(ItemMeta::new(id.clone(), id.clone(), String::new(), ts), code.clone(), None)
                .unwrap();
            codes.push((id, code));
        }
        for _ in 0..20 {
            let (b, f) = (rng.below(100), rng.below(4));
            let query = perturb(&mut rng, &bases[b], f);
            let mut oracle: Vec<RankedHit<String>> = codes
                .iter()
                .filter_map(|(id, c)| {
                    let d = hamming(c, &query);
                    (d as usize <= r).then(|| RankedHit {
                        id: id.clone(),
                        hamming_distance: d,
                        cosine_score: None,
                        matched_subcodes: (0..m)
                            .filter(|p| (0..width).all(|b| c.bit(p * width + b) == query.bit(p * width + b)))
                            .count() as u32,
                    })
                })
                .collect();
            oracle.sort_by(|a, b| a.hamming_distance.cmp(&b.hamming_distance).then_with(|| a.id.cmp(&b.id)));
            oracle.truncate(k);

            let params = SearchParams::new(k, r);
            let page = store.search_code(&query, &params, None, Some(r as u32), None).unwrap();
            let want = serde_json::to_vec(&oracle).unwrap();
            ensure(serde_json::to_vec(&page).unwrap() == want, || {
                format!("store {s}: page {:?} differs from oracle {:?}", page, oracle)
            })?;
            // without a threshold, the in-radius prefix is the same page
            let open = store.search_code(&query, &params, None, None, None).unwrap();
            let prefix: Vec<_> = open.into_iter().take_while(|h| h.hamming_distance as usize <= r).collect();
            ensure(serde_json::to_vec(&prefix).unwrap() == want, || format!("store {s}: unthresholded prefix differs"))?;
            pages += 1;
            hits_checked += oracle.len();
        }
    }
    ensure(hits_checked >= pages, || format!("only {hits_checked} in-radius hits over {pages} pages"))?;
    Ok(format!("{pages} pages byte-equal to the exhaustive oracle ({hits_checked} hits)"))
}

/// Member noise at which the 512-bit configuration scores MAP@10 near
/// 0.77, a realistic operating point rather than a saturated one.
const QUALITY_NOISE: f64 = 1.73;

fn subcoding_quality() -> Outcome {
    let mut corpus = ClusterSpec::new(100, 20, 512, QUALITY_NOISE, 11, NOW);
    corpus.queries_per_cluster = 5;
    let variant = |bits: usize| CodecVariant {
        label: format!("B={bits}"),
        code_bits: bits,
        subcode_bits: 16,
        radius: None,
    };
    let spec = BenchSpec {
        corpus,
        variants: vec![variant(512), variant(256)],
        projection_seed: 7,
        k: 100,
        radius: None,
        rerank_depth: 0,
    };
    let out = bench::run(&spec).map_err(|e| e.to_string())?;
    let (full, half) = (&out.rows[0].metrics, &out.rows[1].metrics);
    let ratio = half.map_at_10 / full.map_at_10;
    let detail = format!(
        "MAP@10 512={:.4} 256={:.4} ratio {:.3} (need >= 0.90), R-precision 512={:.4} 256={:.4}",
        full.map_at_10, half.map_at_10, ratio, full.mean_r_precision, half.mean_r_precision
    );
    ensure(ratio >= 0.90, || detail.clone())?;
    Ok(detail)
}

fn mean_query_ms(store: &RollingStore, ids: &[String], radius: usize, clock: &dyn Clock) -> f64 {
    let mut total = 0.0;
    for id in ids {
        let q = Query::by_item(id.clone(), SearchParams::new(100, radius));
        let t0 = clock.now_ns();
        run_query(store, &q, clock).unwrap();
        total += (clock.now_ns() - t0) as f64 / 1e6;
    }
    total / ids.len() as f64
}

fn latency_trend() -> Outcome {
    let mut spec = ClusterSpec::new(5_000, 20, 128, 0.5, 5, NOW);
    spec.queries_per_cluster = 0;
    let corpus = clustered(&spec).map_err(|e| e.to_string())?;
    let ids: Vec<String> = corpus.records.iter().step_by(500).map(|r| r.id.clone()).collect();
    assert_eq!(ids.len(), 200);
    let clock = MonotonicClock::new();
    let mut rows = Vec::new();
    for bits in [256usize, 512] {
        let codec = CodecConfig::new(128, bits, bits / 16, 3).unwrap();
        let mut config = StoreConfig::new(codec);
        config.store_embeddings = false;
        let store = bench::build_store(config, &corpus.records, NOW).map_err(|e| e.to_string())?;
        assert_eq!(store.item_count(), 100_000);
        mean_query_ms(&store, &ids[..20], codec.subcode_count, &clock);
        let scan = mean_query_ms(&store, &ids, codec.subcode_count, &clock);
        let indexed = mean_query_ms(&store, &ids, codec.subcode_count / 2, &clock);
        rows.push((scan, indexed));
    }
    let (s256, i256) = rows[0];
    let (s512, i512) = rows[1];
    let detail = format!(
        "exhaustive 256={s256:.3}ms 512={s512:.3}ms (-{:.0}%), indexed r=m/2 256={i256:.3}ms 512={i512:.3}ms (-{:.0}%)",
        100.0 * (1.0 - s256 / s512),
        100.0 * (1.0 - i256 / i512)
    );
    ensure(s256 < s512 && i256 < i512, || detail.clone())?;
    Ok(detail)
}

fn prefilter_speedup() -> Outcome {
    let spec = FilterBenchSpec {
        sizes: vec![25_000, 50_000, 100_000],
        dim: 128,
        code_bits: 256,
        subcode_bits: 16,
        queries: 200,
        k: 100,
        radius: None,
        noise: 0.5,
        seed: 9,
        now: NOW,
    };
    let rows = bench::filter_benchmark(&spec).map_err(|e| e.to_string())?;
    let gaps: Vec<f64> = rows.iter().map(|r| r.without_filter_ms - r.with_filter_ms).collect();
    let detail = rows
        .iter()
        .map(|r| format!("{}: {:.3} vs {:.3}ms", r.index_size, r.with_filter_ms, r.without_filter_ms))
        .collect::<Vec<_>>()
        .join(", ");
    let last = rows.last().unwrap();
    ensure(last.with_filter_ms < last.without_filter_ms, || format!("filter slower at 100k: {detail}"))?;
    ensure(gaps.windows(2).all(|w| w[1] >= w[0]), || format!("gap shrinks with size: {detail}"))?;
    Ok(format!("with vs without filter {detail}"))
}

fn record(rng: &mut SplitMix64, id: String, title: &str, dim: usize, t: Timestamp) -> IngestRecord {
    IngestRecord {
        product_id: format!("p-{id}"),
        id,
        title: title.into(),
        embedding: EmbeddingVector::new((0..dim).map(|_| rng.next_normal() as f32).collect()).unwrap(),
        timestamp: t,
    }
}

fn rolling_window() -> Outcome {
    let mut checked = 0usize;
    let mut rejected = 0usize;
    for trial in 0..100u64 {
        let mut rng = SplitMix64::new(0x3017_0000 + trial);
        let window = [30i64, 60, 90][rng.below(3)];
        let mut config = StoreConfig::new(CodecConfig::new(8, 64, 8, trial).unwrap());
        config.window_days = window;
        let granularity = config.bucket_secs();
        let mut store = RollingStore::new(config).unwrap();
        let now = NOW.plus_secs(rng.below(365 * DAY as usize) as i64);
        for i in 0..100 {
            let t = now.plus_secs(rng.below(150 * DAY as usize + 1) as i64 - 148 * DAY);
            let r = record(&mut rng, format!("t{trial}-{i}"), "x", 8, t);
            let outcome = store.ingest(r, now);
            let should_accept = t >= now.minus_days(window) && t <= now;
            ensure(outcome.is_ok() == should_accept, || {
                format!("trial {trial}: record at {t} with now {now}, W {window}: {outcome:?}")
            })?;
            rejected += usize::from(!should_accept);
        }
        let later = now.plus_secs(rng.below(60 * DAY as usize) as i64);
        store.expire(later);
        let cutoff = later.minus_days(window).plus_secs(-granularity);
        let everything = SearchParams::new(10_000, 8);
        for probe in 0..5u64 {
            let q = EmbeddingVector::new((0..8).map(|_| rng.next_normal() as f32).collect()).unwrap();
            let page = run_query(&store, &Query::by_embedding(q, everything), &sir_core::query::NoClock).unwrap();
            for h in &page.hits {
                let ts = store.get(&h.hit.id).unwrap().meta.timestamp;
                ensure(ts >= cutoff, || format!("trial {trial} probe {probe}: {} at {ts} older than {cutoff}", h.hit.id))?;
                checked += 1;
            }
            ensure(page.hits.len() == store.item_count(), || "a full scan skipped live items".into())?;
        }
        let in_window = store.items().filter(|i| i.meta.timestamp >= later.minus_days(window)).count();
        let kept = store.items().count();
        ensure(kept >= in_window, || "expiry removed in-window items".into())?;
    }
    Ok(format!("{checked} returned hits inside the window, {rejected} out-of-window or future records rejected"))
}

#[derive(Deserialize)]
struct MetricCase {
    u: usize,
    len: usize,
    rel: usize,
    k: usize,
    cutoff: usize,
    r_precision: f64,
    ap_at_k: f64,
    recall: f64,
}

fn shuffled(rng: &mut SplitMix64, n: usize) -> Vec<usize> {
    let mut xs: Vec<usize> = (0..n).collect();
    for j in (1..n).rev() {
        let i = rng.below(j + 1);
        xs.swap(i, j);
    }
    xs
}

fn metrics_correctness() -> Outcome {
    let cases: Vec<MetricCase> =
        serde_json::from_str(include_str!("oracles/metric_instances.json")).map_err(|e| e.to_string())?;
    ensure(cases.len() == 1000, || format!("{} oracle cases", cases.len()))?;
    let mut rng = SplitMix64::new(0x5EED_0001);
    let mut worst = 0.0f64;
    for (i, case) in cases.iter().enumerate() {
        let u = 10 + rng.below(41);
        let ranked: Vec<usize> = shuffled(&mut rng, u)[..1 + rng.below(u)].to_vec();
        let relevant: BTreeSet<usize> = shuffled(&mut rng, u)[..1 + rng.below(u / 2)].iter().copied().collect();
        let k = 1 + rng.below(20);
        let cutoff = 1 + rng.below(30);
        ensure((u, ranked.len(), relevant.len(), k, cutoff) == (case.u, case.len, case.rel, case.k, case.cutoff), || {
            format!("instance {i} generated differently from the oracle")
        })?;
        let got = [
            r_precision(&ranked, &relevant).unwrap(),
            average_precision_at_k(&ranked, &relevant, k).unwrap(),
            recall_at(&ranked, &relevant, cutoff).unwrap(),
        ];
        let want = [case.r_precision, case.ap_at_k, case.recall];
        for (g, w) in got.iter().zip(want) {
            worst = worst.max((g - w).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e} exceeds 1e-12"))?;

    let rel: BTreeSet<&str> = ["a", "b", "c", "d"].into();
    let rp = r_precision(&["a", "x", "b", "c", "e"], &rel).unwrap();
    ensure(rp == 0.75, || format!("worked R-precision example gave {rp}"))?;
    let rel: BTreeSet<&str> = ["r1", "r2"].into();
    let ap = average_precision_at_k(&["r1", "n", "r2"], &rel, 3).unwrap();
    ensure(ap == (1.0 + 2.0 / 3.0) / 2.0, || format!("worked AP@3 example gave {ap}"))?;
    Ok(format!("1000 instances within {worst:e} of the oracle; worked examples 0.75 and {ap:.4} exact"))
}

fn suggestion_of_suggestions() -> Outcome {
    let spec = VariantSpec::new(500, 10, 128, 0.1, 0.5, 21, NOW);
    let corpus = planted_variants(&spec).map_err(|e| e.to_string())?;
    ensure(corpus.records.len() == 5000, || format!("{} records", corpus.records.len()))?;
    let codec = CodecConfig::new(128, 256, 16, 4).unwrap();
    let store = bench::build_store(StoreConfig::new(codec), &corpus.records, NOW).map_err(|e| e.to_string())?;
    let curve =
        recall_curve(&store, &corpus.groups, &[100, 200], &[0, 2], codec.subcode_count / 2).map_err(|e| e.to_string())?;
    let idx = |n: usize, k: usize| curve.rows.iter().position(|r| r.n == n && r.k == k).unwrap();
    for n in [100, 200] {
        let (text, union) = (&curve.per_query[idx(n, 0)], &curve.per_query[idx(n, 2)]);
        for (q, &t) in text {
            ensure(union[q] >= t, || format!("query {q}: union recall {} < text-only {t} at N={n}", union[q]))?;
        }
    }
    let text100 = &curve.rows[idx(100, 0)];
    let union100 = &curve.rows[idx(100, 2)];
    let text200 = &curve.rows[idx(200, 0)];
    let detail = format!(
        "recall N=100,k=2 {:.4} vs N=200,k=0 {:.4} (lift {:+.0}%; N=100 text-only {:.4}, lift {:+.0}%), {:.1} candidates per query (limit 300) over {} queries",
        union100.mean_recall,
        text200.mean_recall,
        100.0 * (union100.mean_recall / text200.mean_recall - 1.0),
        text100.mean_recall,
        100.0 * (union100.mean_recall / text100.mean_recall - 1.0),
        union100.mean_candidates,
        curve.queries
    );
    ensure(union100.mean_recall > text200.mean_recall && union100.mean_candidates < 300.0, || detail.clone())?;
    Ok(detail)
}

fn random_rule(rng: &mut SplitMix64, store: &RollingStore, ids: &[&str], vocabulary: &[String], n: usize) -> Rule {
    let seeds: Vec<Seed> = (0..1 + rng.below(3))
        .map(|_| Seed::from_store(store, ids[rng.below(ids.len())]).unwrap())
        .collect();
    let threshold = if rng.chance(0.5) {
        ImageThreshold::MaxHamming(rng.below(90) as u32)
    } else {
        ImageThreshold::MinCosine(0.5 + 0.49 * rng.next_f64())
    };
    let mut clauses: Vec<Vec<String>> = Vec::new();
    for _ in 0..1 + rng.below(2) {
        clauses.push((0..1 + rng.below(2)).map(|_| vocabulary[rng.below(vocabulary.len())].clone()).collect());
    }
    let predicate = rng.chance(0.8).then(|| TextPredicate::new(clauses).unwrap());
    let combine = match (rng.below(3), &predicate) {
        (0, _) | (_, None) => Combine::ImageOnly,
        (1, _) => Combine::And,
        _ => Combine::TextOnly,
    };
    Rule::new(format!("rule-{n:02}"), "random", seeds, threshold, predicate, combine, NOW).unwrap()
}

fn rule_consistency() -> Outcome {
    let mut spec = ClusterSpec::new(500, 20, 64, 0.4, 31, NOW);
    spec.keyword_every = 7;
    let corpus = clustered(&spec).map_err(|e| e.to_string())?;
    let codec = CodecConfig::new(64, 256, 16, 8).unwrap();
    let store = bench::build_store(StoreConfig::new(codec), &corpus.records, NOW).map_err(|e| e.to_string())?;
    ensure(store.item_count() == 10_000, || format!("{} sample items", store.item_count()))?;
    let ids = store.ids();
    let vocabulary: Vec<String> = {
        let words: BTreeSet<String> =
            corpus.records.iter().flat_map(|r| tokenize(&r.title).tokens).collect();
        words.into_iter().collect()
    };
    let mut rng = SplitMix64::new(0x70_1E5);
    let mut total_hits = 0usize;
    let mut hit_rules = 0usize;
    for n in 0..20 {
        let rule = random_rule(&mut rng, &store, &ids, &vocabulary, n);
        let hits = simulate_hits(&rule, &store).map_err(|e| e.to_string())?;
        for r in &corpus.records {
            let d = evaluate_rule(&rule, store.plan(), r).map_err(|e| e.to_string())?;
            ensure(d.matched == hits.contains_key(&r.id), || {
                format!("rule {} disagrees on {}: evaluate {} simulate {}", rule.id, r.id, d.matched, !d.matched)
            })?;
            if d.matched && rule.effective_combine() != Combine::TextOnly {
                ensure(hits[&r.id] == d.score, || format!("rule {} scores {} differently", rule.id, r.id))?;
            }
        }
        total_hits += hits.len();
        hit_rules += usize::from(!hits.is_empty());
    }
    ensure(hit_rules >= 10, || format!("only {hit_rules} of 20 rules hit anything"))?;
    let planted = planted_sweep()?;
    Ok(format!("20 rules x 10000 records agree ({total_hits} hits, {hit_rules} rules non-empty); {planted}"))
}

/// Three rules with disjoint targets. Each target gets 25 near-duplicates
/// within three bit flips and 25 decoys just outside; one rule also needs
/// a keyword that only some near-duplicates carry.
fn planted_sweep() -> Result<String, String> {
    let bits = 256;
    let mut rng = SplitMix64::new(0x5EE9);
    let mut items: Vec<StoredItem> = Vec::new();
    let mut expected: BTreeSet<(String, String)> = BTreeSet::new();
    let mut rules = Vec::new();
    for t in 0..3 {
        let target = random_code(&mut rng, bits);
        let rule_id = format!("target-{t}");
        let predicate = (t == 2).then(|| TextPredicate::new([["vintage"]]).unwrap());
        let combine = if predicate.is_some() { Combine::And } else { Combine::ImageOnly };
        let seed = Seed {
            id: format!("seed-{t}"),
            embedding: None,
            code: target.clone(),
        };
        let mut rule = Rule::new(rule_id.clone(), "planted", vec![seed], ImageThreshold::MaxHamming(3), predicate, combine, NOW)
            .map_err(|e| e.to_string())?;
        rule.finalize(NOW).map_err(|e| e.to_string())?;
        rules.push(rule);
        for i in 0..25 {
            let id = format!("near-{t}-{i:02}");
            let title = if i % 2 == 0 { "vintage brass lamp" } else { "brass lamp" };
            if t != 2 || i % 2 == 0 {
                expected.insert((id.clone(), rule_id.clone()));
            }
            let f = rng.below(4);
            let code = perturb(&mut rng, &target, f);
            items.push(StoredItem { id, code: code.words().to_vec(), embedding: None, title: tokenize(title) });
            let f = 4 + rng.below(3);
            let decoy = perturb(&mut rng, &target, f);
            items.push(StoredItem {
                id: format!("decoy-{t}-{i:02}"),
                code: decoy.words().to_vec(),
                embedding: None,
                title: tokenize("vintage brass lamp"),
            });
        }
    }
    for i in 0..5000 {
        items.push(StoredItem {
            id: format!("bg-{i:05}"),
            code: random_code(&mut rng, bits).words().to_vec(),
            embedding: None,
            title: tokenize("vintage brass lamp"),
        });
    }
    let plan = sir_core::ProjectionPlan::for_config(&CodecConfig::new(8, bits, 16, 0).unwrap()).unwrap();
    let report = run_sweep(&rules, &plan, SweepInput::Items(items), |_| {}).map_err(|e| e.to_string())?;
    let flagged: BTreeSet<(String, String)> =
        report.flagged.iter().map(|f| (f.item_id.clone(), f.rule_id.clone())).collect();
    ensure(flagged == expected, || {
        let extra: Vec<_> = flagged.difference(&expected).collect();
        let missing: Vec<_> = expected.difference(&flagged).collect();
        format!("planted sweep: extra {extra:?}, missing {missing:?}")
    })?;
    Ok(format!("planted sweep flagged exactly {} constructed matches out of {} items", expected.len(), report.scanned))
}

fn probe_answers(store: &RollingStore, probes: &[Query]) -> Vec<String> {
    probes
        .iter()
        .map(|q| {
            let mut page = run_query(store, q, &sir_core::query::NoClock).unwrap();
            page.timings = Default::default();
            serde_json::to_string(&page).unwrap()
        })
        .collect()
}

fn persistence_round_trip() -> Outcome {
    let codec = CodecConfig::new(32, 256, 16, 12).unwrap();
    let config = StoreConfig::new(codec);
    let mut spec = ClusterSpec::new(30, 10, 32, 0.4, 41, NOW);
    spec.keyword_every = 4;
    let mut records = clustered(&spec).map_err(|e| e.to_string())?.records;
    let newest = config.bucket_of(NOW);
    for (i, r) in records.iter_mut().enumerate() {
        let bucket = newest.plus_secs(-((i % 3) as i64) * config.bucket_secs());
        r.timestamp = bucket.plus_secs((i as i64 * 977) % (NOW.secs() - newest.secs()).max(1));
    }
    let mut rng = SplitMix64::new(0x9E25);
    let mut probes = Vec::new();
    for i in 0..20 {
        let mut target = &records[rng.below(records.len())];
        // filtered probes start from an item that passes the filter
        while i % 5 == 1 && !target.title.contains("lamp") {
            target = &records[rng.below(records.len())];
        }
        let mut params = SearchParams::new(15, [4, 8, 16][i % 3]);
        params.rerank_depth = if i % 4 == 0 { 10 } else { 0 };
        let q = match i % 5 {
            0 => Query::by_embedding(target.embedding.clone(), params),
            1 => Query::by_item(target.id.clone(), params).with_predicate(TextPredicate::new([["lamp"]]).unwrap()),
            2 => Query::by_item(target.id.clone(), params).with_threshold(70),
            _ => Query::by_item(target.id.clone(), params),
        };
        probes.push(q);
    }

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut dir = StoreDir::open(tmp.path(), Some(config), NOW).map_err(|e| e.to_string())?;
    for outcome in dir.ingest_batch(records.clone(), NOW).map_err(|e| e.to_string())? {
        outcome.map_err(|e| e.to_string())?;
    }
    ensure(dir.store().segment_count() == 3, || format!("{} segments", dir.store().segment_count()))?;
    let before = probe_answers(dir.store(), &probes);
    ensure(before.iter().all(|p| p.contains("\"id\"")), || "a probe returned no hits".into())?;

    let snapshot = tmp.path().join("exported");
    sir::persist::persist(dir.store(), &snapshot).map_err(|e| e.to_string())?;
    let (loaded, _) = sir::persist::load(&snapshot).map_err(|e| e.to_string())?.ok_or("snapshot vanished")?;
    ensure(probe_answers(&loaded, &probes) == before, || "persist/load changed an answer".into())?;

    // log replay, then snapshot and reopen
    drop(dir);
    let mut dir = StoreDir::open(tmp.path(), None, NOW).map_err(|e| e.to_string())?;
    ensure(probe_answers(dir.store(), &probes) == before, || "log replay changed an answer".into())?;
    dir.checkpoint().map_err(|e| e.to_string())?;
    drop(dir);
    let dir = StoreDir::open(tmp.path(), None, NOW).map_err(|e| e.to_string())?;
    ensure(probe_answers(dir.store(), &probes) == before, || "snapshot reopen changed an answer".into())?;
    let mut by_bucket: BTreeMap<Timestamp, usize> = BTreeMap::new();
    for i in dir.store().items() {
        *by_bucket.entry(i.bucket_start).or_default() += 1;
    }
    Ok(format!(
        "20 probes identical after persist/load, log replay and snapshot reopen; segments {:?}",
        by_bucket.values().collect::<Vec<_>>()
    ))
}
