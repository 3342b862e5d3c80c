//! Analyst rules: seed fingerprints plus an image threshold and an optional
//! title predicate. Rules are simulated against a sampled store through the
//! index and swept over a record stream with direct comparisons.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::codec::{cosine, hamming_words, BinaryCode, EmbeddingVector, ProjectionPlan};
use crate::error::{Error, Result};
use crate::index::SearchParams;
use crate::query::Clock;
use crate::store::{IngestRecord, RollingStore};
use crate::text::{tokenize, TextPredicate, TokenizedTitle};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageThreshold {
    /// Match when the best seed is within this many bits.
    MaxHamming(u32),
    /// Match when the best seed has at least this cosine similarity.
    MinCosine(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Combine {
    #[default]
    And,
    ImageOnly,
    TextOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleStatus {
    #[default]
    Draft,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector>,
    pub code: BinaryCode,
}

impl Seed {
    pub fn from_embedding(id: impl Into<String>, embedding: EmbeddingVector, plan: &ProjectionPlan) -> Result<Self> {
        let code = plan.binarize(&embedding)?;
        Ok(Self {
            id: id.into(),
            embedding: Some(embedding),
            code,
        })
    }

    /// Seed taken from an indexed item.
    pub fn from_store(store: &RollingStore, id: &str) -> Result<Self> {
        let item = store
            .get(id)
            .ok_or_else(|| Error::NotFound(alloc::format!("seed item {id}")))?;
        Ok(Self {
            id: id.to_string(),
            embedding: item.embedding.cloned(),
            code: item.code(store.codec().code_bits),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub name: String,
    pub seeds: Vec<Seed>,
    pub threshold: ImageThreshold,
    #[serde(default)]
    pub predicate: Option<TextPredicate>,
    #[serde(default)]
    pub combine: Combine,
    pub created: Timestamp,
    pub updated: Timestamp,
    #[serde(default)]
    pub status: RuleStatus,
}

/// Best image similarity of a record to a rule's seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageScore {
    Hamming(u32),
    Cosine(f64),
}

impl ImageScore {
    /// Better scores sort first.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ImageScore::Hamming(a), ImageScore::Hamming(b)) => a.cmp(b),
            (ImageScore::Cosine(a), ImageScore::Cosine(b)) => b.total_cmp(a),
            (ImageScore::Hamming(_), ImageScore::Cosine(_)) => Ordering::Less,
            (ImageScore::Cosine(_), ImageScore::Hamming(_)) => Ordering::Greater,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleDecision {
    pub matched: bool,
    pub image_match: bool,
    pub text_match: bool,
    pub score: ImageScore,
    pub best_seed: String,
}

impl Rule {
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        seeds: Vec<Seed>,
        threshold: ImageThreshold,
        predicate: Option<TextPredicate>,
        combine: Combine,
        now: Timestamp,
    ) -> Result<Self> {
        let rule = Self {
            id: id.into(),
            name: name.into(),
            seeds,
            threshold,
            predicate,
            combine,
            created: now,
            updated: now,
            status: RuleStatus::Draft,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.seeds.first() else {
            return Err(Error::Rule("a rule needs at least one seed".into()));
        };
        let bits = first.code.len();
        if self.seeds.iter().any(|s| s.code.len() != bits) {
            return Err(Error::Rule("seed codes differ in length".into()));
        }
        match self.threshold {
            ImageThreshold::MaxHamming(t) if t as usize > bits => {
                return Err(Error::Rule(alloc::format!("hamming threshold {t} exceeds {bits} bits")))
            }
            ImageThreshold::MinCosine(s) if !(-1.0..=1.0).contains(&s) => {
                return Err(Error::Rule("cosine threshold must be in [-1, 1]".into()))
            }
            ImageThreshold::MinCosine(_) if self.seeds.iter().any(|s| s.embedding.is_none()) => {
                return Err(Error::Rule("cosine rules need seed embeddings".into()))
            }
            _ => {}
        }
        if self.combine == Combine::TextOnly && self.predicate.is_none() {
            return Err(Error::Rule("TEXT_ONLY rules need a predicate".into()));
        }
        Ok(())
    }

    pub fn is_finalized(&self) -> bool {
        self.status == RuleStatus::Finalized
    }

    fn ensure_draft(&self) -> Result<()> {
        if self.is_finalized() {
            return Err(Error::Rule(alloc::format!("rule {} is finalized", self.id)));
        }
        Ok(())
    }

    pub fn set_threshold(&mut self, threshold: ImageThreshold, now: Timestamp) -> Result<()> {
        self.ensure_draft()?;
        let previous = core::mem::replace(&mut self.threshold, threshold);
        if let Err(e) = self.validate() {
            self.threshold = previous;
            return Err(e);
        }
        self.updated = now;
        Ok(())
    }

    pub fn set_predicate(&mut self, predicate: Option<TextPredicate>, now: Timestamp) -> Result<()> {
        self.ensure_draft()?;
        let previous = core::mem::replace(&mut self.predicate, predicate);
        if let Err(e) = self.validate() {
            self.predicate = previous;
            return Err(e);
        }
        self.updated = now;
        Ok(())
    }

    pub fn finalize(&mut self, now: Timestamp) -> Result<()> {
        self.ensure_draft()?;
        self.validate()?;
        self.status = RuleStatus::Finalized;
        self.updated = now;
        Ok(())
    }

    /// Effective combine mode: `AND` without a predicate is image-only.
    pub fn effective_combine(&self) -> Combine {
        match (self.combine, &self.predicate) {
            (Combine::And, None) => Combine::ImageOnly,
            (c, _) => c,
        }
    }

    fn best_image(&self, code: &[u64], embedding: Option<&EmbeddingVector>) -> Result<(ImageScore, &Seed)> {
        let mut best: Option<(ImageScore, &Seed)> = None;
        for seed in &self.seeds {
            let score = match self.threshold {
                ImageThreshold::MaxHamming(_) => {
                    if seed.code.words().len() != code.len() {
                        return Err(Error::shape(seed.code.words().len() * 64, code.len() * 64));
                    }
                    ImageScore::Hamming(hamming_words(seed.code.words(), code))
                }
                ImageThreshold::MinCosine(_) => {
                    let e = embedding.ok_or(Error::MissingEmbeddings)?;
                    let s = seed.embedding.as_ref().ok_or(Error::MissingEmbeddings)?;
                    ImageScore::Cosine(cosine(s, e)?)
                }
            };
            if best.as_ref().is_none_or(|(b, _)| score.rank_cmp(b) == Ordering::Less) {
                best = Some((score, seed));
            }
        }
        best.ok_or_else(|| Error::Rule("a rule needs at least one seed".into()))
    }

    fn image_passes(&self, score: ImageScore) -> bool {
        match (self.threshold, score) {
            (ImageThreshold::MaxHamming(t), ImageScore::Hamming(d)) => d <= t,
            (ImageThreshold::MinCosine(s), ImageScore::Cosine(c)) => c >= s,
            _ => false,
        }
    }

    /// Decision for an already-binarized item.
    pub fn decide(&self, code: &[u64], embedding: Option<&EmbeddingVector>, title: &TokenizedTitle) -> Result<RuleDecision> {
        let (score, seed) = self.best_image(code, embedding)?;
        let image_match = self.image_passes(score);
        let text_match = self.predicate.as_ref().is_none_or(|p| p.matches(title));
        let matched = match self.effective_combine() {
            Combine::And => image_match && text_match,
            Combine::ImageOnly => image_match,
            Combine::TextOnly => text_match,
        };
        Ok(RuleDecision {
            matched,
            image_match,
            text_match,
            score,
            best_seed: seed.id.clone(),
        })
    }
}

/// Full-precision evaluation of one record against one rule.
pub fn evaluate_rule(rule: &Rule, plan: &ProjectionPlan, record: &IngestRecord) -> Result<RuleDecision> {
    let code = plan.binarize(&record.embedding)?;
    rule.decide(code.words(), Some(&record.embedding), &tokenize(&record.title))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleHit {
    pub id: String,
    pub score: ImageScore,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub sample_size: usize,
    pub hit_count: usize,
    pub selectivity: f64,
    pub top_hits: Vec<SampleHit>,
    pub elapsed_ms: f64,
}

/// Ids the rule flags in `store`, with their best image score. Hamming
/// rules go through the subcode index with radius `τ`; cosine rules scan.
pub fn simulate_hits(rule: &Rule, store: &RollingStore) -> Result<BTreeMap<String, ImageScore>> {
    rule.validate()?;
    let bits = store.codec().code_bits;
    let combine = rule.effective_combine();
    let allow = match (combine, &rule.predicate) {
        (Combine::And | Combine::TextOnly, Some(p)) if !p.is_empty() => Some(store.prefilter(p)),
        _ => None,
    };
    let mut out = BTreeMap::new();

    match (combine, rule.threshold) {
        (Combine::TextOnly, _) => {
            let allowed: Vec<&str> = match &rule.predicate {
                Some(p) => store.prefilter_ids(p),
                None => store.ids(),
            };
            for id in allowed {
                let item = store.get(id).expect("prefiltered item");
                let (score, _) = rule.best_image(item.code, item.embedding)?;
                out.insert(id.to_string(), score);
            }
        }
        (_, ImageThreshold::MaxHamming(tau)) => {
            for seed in &rule.seeds {
                if seed.code.len() != bits {
                    return Err(Error::shape(bits, seed.code.len()));
                }
                let params = SearchParams::new(usize::MAX, tau as usize);
                for hit in store.search_code(&seed.code, &params, allow.as_ref(), Some(tau), None)? {
                    let score = ImageScore::Hamming(hit.hamming_distance);
                    out.entry(hit.id)
                        .and_modify(|s: &mut ImageScore| {
                            if score.rank_cmp(s) == Ordering::Less {
                                *s = score
                            }
                        })
                        .or_insert(score);
                }
            }
        }
        (_, ImageThreshold::MinCosine(_)) => {
            if !store.config().store_embeddings {
                return Err(Error::MissingEmbeddings);
            }
            let pass = |seg_bucket, slot| {
                allow
                    .as_ref()
                    .is_none_or(|a| a.get(&seg_bucket).is_some_and(|s: &crate::index::AllowSet| s.contains(slot)))
            };
            for seg in store.segments() {
                for item in seg.items() {
                    let slot = seg.slot(&item.meta.id).expect("own item");
                    if !pass(seg.bucket_start(), slot) {
                        continue;
                    }
                    let (score, _) = rule.best_image(item.code, item.embedding)?;
                    if rule.image_passes(score) {
                        out.insert(item.meta.id.clone(), score);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Interactive feedback for a rule on a sampled store.
pub fn simulate(rule: &Rule, sample: &RollingStore, limit: usize, clock: &dyn Clock) -> Result<SimulationReport> {
    let start = clock.now_ns();
    if sample.item_count() == 0 {
        return Err(Error::config("the sample store is empty"));
    }
    let hits = simulate_hits(rule, sample)?;
    let mut ranked: Vec<(&String, &ImageScore)> = hits.iter().collect();
    ranked.sort_by(|a, b| a.1.rank_cmp(b.1).then_with(|| a.0.cmp(b.0)));
    let top_hits = ranked
        .into_iter()
        .take(limit)
        .map(|(id, score)| SampleHit {
            id: id.clone(),
            score: *score,
            title: sample.get(id).map(|v| v.meta.title.clone()).unwrap_or_default(),
        })
        .collect();
    let sample_size = sample.item_count();
    Ok(SimulationReport {
        sample_size,
        hit_count: hits.len(),
        selectivity: hits.len() as f64 / sample_size as f64,
        top_hits,
        elapsed_ms: clock.now_ns().saturating_sub(start) as f64 / 1e6,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedItem {
    pub item_id: String,
    pub rule_id: String,
    pub best_seed_id: String,
    pub score: ImageScore,
    pub matched_predicate: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepReport {
    pub scanned: u64,
    pub rejected: u64,
    pub flagged: Vec<FlaggedItem>,
    #[serde(default)]
    pub expected_total: Option<u64>,
    pub elapsed_ms: f64,
    pub done: bool,
}

impl SweepReport {
    pub fn progress(&self) -> f64 {
        if self.done {
            return 1.0;
        }
        match self.expected_total {
            Some(0) | None => 0.0,
            Some(t) => ((self.scanned + self.rejected) as f64 / t as f64).min(1.0),
        }
    }

    pub fn throughput(&self) -> f64 {
        if self.elapsed_ms <= 0.0 {
            return 0.0;
        }
        self.scanned as f64 / (self.elapsed_ms / 1000.0)
    }

    /// Combines reports of disjoint stream partitions.
    pub fn merge(mut self, other: SweepReport) -> SweepReport {
        self.scanned += other.scanned;
        self.rejected += other.rejected;
        self.flagged.extend(other.flagged);
        self.flagged
            .sort_by(|a, b| a.item_id.cmp(&b.item_id).then_with(|| a.rule_id.cmp(&b.rule_id)));
        self.elapsed_ms = self.elapsed_ms.max(other.elapsed_ms);
        self.expected_total = match (self.expected_total, other.expected_total) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        self.done = self.done && other.done;
        self
    }
}

/// Incremental sweep over a stream of records.
pub struct Sweeper<'a> {
    rules: &'a [Rule],
    plan: &'a ProjectionPlan,
    report: SweepReport,
}

impl<'a> Sweeper<'a> {
    pub fn new(rules: &'a [Rule], plan: &'a ProjectionPlan, expected_total: Option<u64>) -> Result<Self> {
        for r in rules {
            if !r.is_finalized() {
                return Err(Error::Rule(alloc::format!("rule {} is not finalized", r.id)));
            }
            r.validate()?;
            if r.seeds.iter().any(|s| s.code.len() != plan.bits_out()) {
                return Err(Error::Rule(alloc::format!(
                    "rule {} was built for a different code length",
                    r.id
                )));
            }
        }
        Ok(Self {
            rules,
            plan,
            report: SweepReport {
                expected_total,
                ..SweepReport::default()
            },
        })
    }

    pub fn feed(&mut self, record: &IngestRecord) -> Result<()> {
        let code = match self.plan.binarize(&record.embedding) {
            Ok(c) => c,
            Err(e) => {
                self.report.rejected += 1;
                return Err(e);
            }
        };
        let title = tokenize(&record.title);
        self.feed_item(&record.id, code.words(), Some(&record.embedding), &title)
    }

    /// Codes-only path for stores that do not retain embeddings.
    pub fn feed_item(&mut self, id: &str, code: &[u64], embedding: Option<&EmbeddingVector>, title: &TokenizedTitle) -> Result<()> {
        let mut flags = Vec::new();
        for rule in self.rules {
            match rule.decide(code, embedding, title) {
                Ok(d) if d.matched => flags.push(FlaggedItem {
                    item_id: id.to_string(),
                    rule_id: rule.id.clone(),
                    best_seed_id: d.best_seed,
                    score: d.score,
                    matched_predicate: d.text_match,
                }),
                Ok(_) => {}
                Err(e) => {
                    self.report.rejected += 1;
                    return Err(e);
                }
            }
        }
        self.report.scanned += 1;
        self.report.flagged.extend(flags);
        Ok(())
    }

    pub fn reject(&mut self) {
        self.report.rejected += 1;
    }

    pub fn report(&self) -> &SweepReport {
        &self.report
    }

    pub fn finish(mut self, elapsed_ms: f64) -> SweepReport {
        self.report
            .flagged
            .sort_by(|a, b| a.item_id.cmp(&b.item_id).then_with(|| a.rule_id.cmp(&b.rule_id)));
        self.report.elapsed_ms = elapsed_ms;
        self.report.done = true;
        self.report
    }
}

/// Sweeps every record of `records`; malformed records are counted and
/// skipped.
pub fn sweep<'r, I>(rules: &[Rule], plan: &ProjectionPlan, records: I, clock: &dyn Clock) -> Result<SweepReport>
where
    I: IntoIterator<Item = Result<IngestRecord>>,
{
    let start = clock.now_ns();
    let mut sweeper = Sweeper::new(rules, plan, None)?;
    for r in records {
        match r {
            Ok(record) => {
                let _ = sweeper.feed(&record);
            }
            Err(_) => sweeper.reject(),
        }
    }
    Ok(sweeper.finish(clock.now_ns().saturating_sub(start) as f64 / 1e6))
}
