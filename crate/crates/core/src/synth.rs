//! Seeded synthetic corpora: clustered embeddings with judged queries, and
//! planted variant groups with paraphrased titles.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::codec::EmbeddingVector;
use crate::error::{Error, Result};
use crate::metrics::JudgedQuery;
use crate::rng::SplitMix64;
use crate::store::IngestRecord;
use crate::time::Timestamp;
use crate::variants::VariantGroup;

const ADJECTIVES: &[&str] = &[
    "classic", "modern", "vintage", "compact", "deluxe", "rustic", "sleek", "sturdy", "soft", "bright", "portable",
    "premium",
];
const NOUNS: &[&str] = &[
    "chair", "mug", "backpack", "blanket", "jacket", "kettle", "speaker", "notebook", "sneaker", "clock", "vase",
    "tray", "basket", "helmet", "bottle",
];
const COLORS: &[&str] = &[
    "red", "blue", "green", "black", "white", "grey", "pink", "orange", "purple", "yellow", "brown", "teal",
];
const SIZES: &[&str] = &["xs", "small", "medium", "large", "xl", "xxl"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub clusters: usize,
    pub per_cluster: usize,
    pub dim: usize,
    /// Standard deviation of member offsets from their cluster center.
    pub noise: f64,
    pub seed: u64,
    /// Keyword added to every `keyword_every`-th title; 0 disables it.
    #[serde(default)]
    pub keyword_every: usize,
    #[serde(default = "default_keyword")]
    pub keyword: String,
    /// Judged queries drawn from each cluster (its first members).
    #[serde(default = "one")]
    pub queries_per_cluster: usize,
    pub now: Timestamp,
    /// Timestamps are spread uniformly over the last `spread_days`.
    #[serde(default = "default_spread")]
    pub spread_days: i64,
}

fn default_keyword() -> String {
    "lamp".to_string()
}

fn one() -> usize {
    1
}

fn default_spread() -> i64 {
    60
}

impl ClusterSpec {
    pub fn new(clusters: usize, per_cluster: usize, dim: usize, noise: f64, seed: u64, now: Timestamp) -> Self {
        Self {
            clusters,
            per_cluster,
            dim,
            noise,
            seed,
            keyword_every: 0,
            keyword: default_keyword(),
            queries_per_cluster: 1,
            now,
            spread_days: default_spread(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 || self.per_cluster == 0 || self.dim == 0 {
            return Err(Error::config("clusters, per_cluster and dim must be positive"));
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return Err(Error::config("noise must be finite and non-negative"));
        }
        if self.queries_per_cluster > 0 && self.per_cluster < 2 {
            return Err(Error::config("judged queries need clusters of at least two members"));
        }
        if self.queries_per_cluster > self.per_cluster {
            return Err(Error::config("more queries per cluster than members"));
        }
        if self.spread_days < 0 {
            return Err(Error::config("spread_days must be non-negative"));
        }
        if self.keyword_every > 0 {
            crate::text::normalize_term(&self.keyword)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub records: Vec<IngestRecord>,
    pub judged: Vec<JudgedQuery>,
    pub groups: Vec<VariantGroup>,
}

fn gaussian(rng: &mut SplitMix64, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.next_normal()).collect()
}

fn perturbed(rng: &mut SplitMix64, center: &[f64], noise: f64) -> Result<EmbeddingVector> {
    let v = center
        .iter()
        .map(|&c| if noise == 0.0 { c as f32 } else { (c + noise * rng.next_normal()) as f32 })
        .collect();
    EmbeddingVector::new(v)
}

fn pick<'a>(rng: &mut SplitMix64, words: &[&'a str]) -> &'a str {
    words[rng.below(words.len())]
}

fn timestamp(rng: &mut SplitMix64, now: Timestamp, spread_days: i64) -> Timestamp {
    let span = spread_days * crate::time::SECONDS_PER_DAY;
    Timestamp(now.secs() - rng.below(span as usize + 1) as i64)
}

/// Clustered Gaussian corpus. Members of a cluster are each other's
/// relevant items; ids are `c{cluster}-{member}`.
pub fn clustered(spec: &ClusterSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let mut records = Vec::with_capacity(spec.clusters * spec.per_cluster);
    let mut judged = Vec::new();
    let mut groups = Vec::with_capacity(spec.clusters);
    for c in 0..spec.clusters {
        let center = gaussian(&mut rng, spec.dim);
        let ids: Vec<String> = (0..spec.per_cluster).map(|i| format!("c{c:05}-{i:03}")).collect();
        for id in &ids {
            let n = records.len();
            let mut title = format!("{} {} {}", pick(&mut rng, ADJECTIVES), pick(&mut rng, COLORS), pick(&mut rng, NOUNS));
            if spec.keyword_every > 0 && n % spec.keyword_every == 0 {
                title.push(' ');
                title.push_str(&spec.keyword);
            }
            records.push(IngestRecord {
                id: id.clone(),
                product_id: format!("p{c:05}"),
                title,
                embedding: perturbed(&mut rng, &center, spec.noise)?,
                timestamp: timestamp(&mut rng, spec.now, spec.spread_days),
            });
        }
        for q in ids.iter().take(spec.queries_per_cluster) {
            let relevant: BTreeSet<String> = ids.iter().filter(|i| *i != q).cloned().collect();
            judged.push(JudgedQuery::new(q.clone(), relevant)?);
        }
        groups.push(VariantGroup {
            group_id: format!("c{c:05}"),
            member_ids: ids,
        });
    }
    Ok(SyntheticCorpus { records, judged, groups })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub groups: usize,
    pub group_size: usize,
    pub dim: usize,
    /// Standard deviation of member images around their group center.
    pub image_noise: f64,
    /// Fraction of members whose title uses the group's paraphrase.
    pub paraphrase_rate: f64,
    /// Words per base title.
    #[serde(default = "three")]
    pub title_words: usize,
    pub seed: u64,
    pub now: Timestamp,
    #[serde(default = "default_spread")]
    pub spread_days: i64,
}

fn three() -> usize {
    3
}

impl VariantSpec {
    pub fn new(groups: usize, group_size: usize, dim: usize, image_noise: f64, paraphrase_rate: f64, seed: u64, now: Timestamp) -> Self {
        Self {
            groups,
            group_size,
            dim,
            image_noise,
            paraphrase_rate,
            title_words: 3,
            seed,
            now,
            spread_days: default_spread(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.group_size == 0 || self.dim == 0 || self.title_words == 0 {
            return Err(Error::config("groups, group_size, dim and title_words must be positive"));
        }
        if !(0.0..=1.0).contains(&self.paraphrase_rate) {
            return Err(Error::config("paraphrase_rate must be in [0, 1]"));
        }
        if !self.image_noise.is_finite() || self.image_noise < 0.0 {
            return Err(Error::config("image_noise must be finite and non-negative"));
        }
        if self.spread_days < 0 {
            return Err(Error::config("spread_days must be non-negative"));
        }
        Ok(())
    }
}

const ONSETS_A: &[&str] = &["b", "d", "g", "k", "m", "n", "p", "t", "v", "z"];
const ONSETS_B: &[&str] = &["f", "h", "j", "l", "r", "s", "w", "x", "y", "q"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

/// Two-syllable word; vocabularies built from different onsets never share
/// a word.
fn word(rng: &mut SplitMix64, onsets: &[&str]) -> String {
    let mut w = String::new();
    for _ in 0..2 {
        w.push_str(pick(rng, onsets));
        w.push_str(pick(rng, VOWELS));
    }
    w
}

/// Variant groups sharing a near-identical image. Each group has a base
/// title and a paraphrase drawn from a disjoint vocabulary; each member
/// carries one of the two plus a random color and size. Ids are
/// `g{group}-{member}`.
pub fn planted_variants(spec: &VariantSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let mut records = Vec::with_capacity(spec.groups * spec.group_size);
    let mut groups = Vec::with_capacity(spec.groups);
    let mut judged = Vec::new();
    for g in 0..spec.groups {
        let center = gaussian(&mut rng, spec.dim);
        let base: Vec<String> = (0..spec.title_words).map(|_| word(&mut rng, ONSETS_A)).collect();
        let para: Vec<String> = (0..spec.title_words).map(|_| word(&mut rng, ONSETS_B)).collect();
        let ids: Vec<String> = (0..spec.group_size).map(|i| format!("g{g:05}-{i:02}")).collect();
        // The first member always keeps the base title so that each group
        // has a text anchor.
        let paraphrased = libm::round(spec.paraphrase_rate * spec.group_size as f64) as usize;
        let mut order: Vec<usize> = (1..spec.group_size).collect();
        for i in (1..order.len()).rev() {
            let j = rng.below(i + 1);
            order.swap(i, j);
        }
        let para_members: BTreeSet<usize> = order.into_iter().take(paraphrased.min(spec.group_size - 1)).collect();
        for (i, id) in ids.iter().enumerate() {
            let words = if para_members.contains(&i) { &para } else { &base };
            let title = format!("{} {} {}", words.join(" "), pick(&mut rng, COLORS), pick(&mut rng, SIZES));
            records.push(IngestRecord {
                id: id.clone(),
                product_id: format!("g{g:05}"),
                title,
                embedding: perturbed(&mut rng, &center, spec.image_noise)?,
                timestamp: timestamp(&mut rng, spec.now, spec.spread_days),
            });
        }
        if ids.len() > 1 {
            let relevant: BTreeSet<String> = ids[1..].iter().cloned().collect();
            judged.push(JudgedQuery::new(ids[0].clone(), relevant)?);
        }
        groups.push(VariantGroup {
            group_id: format!("g{g:05}"),
            member_ids: ids,
        });
    }
    Ok(SyntheticCorpus { records, judged, groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{cosine, ProjectionPlan};
    use crate::text::tokenize;

    fn now() -> Timestamp {
        Timestamp(1_760_000_000)
    }

    #[test]
    fn deterministic() {
        let spec = ClusterSpec::new(5, 4, 8, 0.3, 1, now());
        assert_eq!(clustered(&spec).unwrap(), clustered(&spec).unwrap());
        let v = VariantSpec::new(4, 5, 8, 0.1, 0.5, 2, now());
        assert_eq!(planted_variants(&v).unwrap(), planted_variants(&v).unwrap());
    }

    #[test]
    fn zero_noise_collapses_clusters() {
        let c = clustered(&ClusterSpec::new(3, 4, 16, 0.0, 5, now())).unwrap();
        let plan = ProjectionPlan::build(7, 16, 64).unwrap();
        for chunk in c.records.chunks(4) {
            for r in chunk {
                assert!((cosine(&chunk[0].embedding, &r.embedding).unwrap() - 1.0).abs() < 1e-9);
                let d = plan.binarize(&chunk[0].embedding).unwrap().hamming(&plan.binarize(&r.embedding).unwrap()).unwrap();
                assert_eq!(d, 0);
            }
        }
    }

    #[test]
    fn keyword_fraction_and_judgments() {
        let mut spec = ClusterSpec::new(10, 10, 4, 0.1, 3, now());
        spec.keyword_every = 10;
        spec.queries_per_cluster = 2;
        let c = clustered(&spec).unwrap();
        let lamps = c.records.iter().filter(|r| tokenize(&r.title).contains("lamp")).count();
        assert_eq!(lamps, 10);
        assert_eq!(c.judged.len(), 20);
        assert!(c.judged.iter().all(|j| j.relevant_ids.len() == 9 && !j.relevant_ids.contains(&j.query_id)));
        let cutoff = now().minus_days(spec.spread_days);
        assert!(c.records.iter().all(|r| r.timestamp >= cutoff && r.timestamp <= now()));
    }

    #[test]
    fn paraphrases_use_disjoint_words() {
        let c = planted_variants(&VariantSpec::new(20, 10, 8, 0.05, 0.5, 9, now())).unwrap();
        for group in c.records.chunks(10) {
            let titles: BTreeSet<Vec<String>> = group
                .iter()
                .map(|r| r.title.split(' ').take(3).map(String::from).collect())
                .collect();
            assert_eq!(titles.len(), 2);
            let mut it = titles.iter();
            let (a, b) = (it.next().unwrap(), it.next().unwrap());
            assert!(a.iter().all(|w| !b.contains(w)));
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(clustered(&ClusterSpec::new(0, 4, 8, 0.1, 1, now())).is_err());
        assert!(clustered(&ClusterSpec::new(2, 1, 8, 0.1, 1, now())).is_err());
        assert!(clustered(&ClusterSpec::new(2, 4, 8, f64::NAN, 1, now())).is_err());
        assert!(planted_variants(&VariantSpec::new(2, 4, 8, 0.1, 1.5, 1, now())).is_err());
    }
}
