//! Time-bucketed segments forming the rolling index.
//!
//! Records land in the segment whose bucket contains their timestamp.
//! Expiry drops whole segments once their bucket ends before `now - W`, so
//! an item can outlive the window by at most one bucket.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use hashbrown::HashMap;
use serde::{Deserialize, Serialize};

use crate::codec::{hamming_words, BinaryCode, CodecConfig, EmbeddingVector, ProjectionPlan};
use crate::error::{Error, Result};
use crate::index::{AllowSet, HitKey, RankedHit, SearchParams, Slot, SubcodeIndex, TopK};
use crate::text::{tokenize, TextPredicate, TokenizedTitle};
use crate::time::{Timestamp, SECONDS_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreConfig {
    pub codec: CodecConfig,
    pub window_days: i64,
    pub bucket_days: i64,
    pub store_embeddings: bool,
}

impl StoreConfig {
    pub const DEFAULT_WINDOW_DAYS: i64 = 90;
    pub const DEFAULT_BUCKET_DAYS: i64 = 7;

    pub fn new(codec: CodecConfig) -> Self {
        Self {
            codec,
            window_days: Self::DEFAULT_WINDOW_DAYS,
            bucket_days: Self::DEFAULT_BUCKET_DAYS,
            store_embeddings: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.codec.validate()?;
        if self.bucket_days <= 0 || self.window_days < self.bucket_days {
            return Err(Error::config("need window_days >= bucket_days > 0"));
        }
        Ok(())
    }

    pub fn bucket_secs(&self) -> i64 {
        self.bucket_days * SECONDS_PER_DAY
    }

    pub fn bucket_of(&self, t: Timestamp) -> Timestamp {
        t.align_down(self.bucket_secs())
    }

    /// Oldest timestamp still accepted at `now`.
    pub fn cutoff(&self, now: Timestamp) -> Timestamp {
        now.minus_days(self.window_days)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestRecord {
    pub id: String,
    pub product_id: String,
    pub title: String,
    pub embedding: EmbeddingVector,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemMeta {
    pub id: String,
    pub product_id: String,
    pub title: String,
    pub tokens: TokenizedTitle,
    pub timestamp: Timestamp,
}

impl ItemMeta {
    pub fn new(id: String, product_id: String, title: String, timestamp: Timestamp) -> Self {
        let tokens = tokenize(&title);
        Self {
            id,
            product_id,
            title,
            tokens,
            timestamp,
        }
    }
}

/// Borrowed view of one stored item.
#[derive(Debug, Clone, Copy)]
pub struct ItemView<'a> {
    pub meta: &'a ItemMeta,
    pub code: &'a [u64],
    pub embedding: Option<&'a EmbeddingVector>,
    pub bucket_start: Timestamp,
}

impl ItemView<'_> {
    pub fn code(&self, bits: usize) -> BinaryCode {
        BinaryCode::from_words(self.code.to_vec(), bits).expect("stored code")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ack {
    Inserted,
    Updated,
    Unchanged,
}

#[derive(Debug, Clone)]
pub struct Segment {
    bucket_start: Timestamp,
    index: SubcodeIndex,
    items: Vec<Option<ItemMeta>>,
    slot_of: HashMap<String, Slot>,
    embeddings: Vec<Option<EmbeddingVector>>,
    text: HashMap<String, Vec<Slot>>,
    free: Vec<Slot>,
}

impl Segment {
    fn new(bucket_start: Timestamp, codec: CodecConfig) -> Result<Self> {
        Ok(Self {
            bucket_start,
            index: SubcodeIndex::new(codec)?,
            items: Vec::new(),
            slot_of: HashMap::new(),
            embeddings: Vec::new(),
            text: HashMap::new(),
            free: Vec::new(),
        })
    }

    pub fn bucket_start(&self) -> Timestamp {
        self.bucket_start
    }

    pub fn len(&self) -> usize {
        self.slot_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slot_of.is_empty()
    }

    pub fn index(&self) -> &SubcodeIndex {
        &self.index
    }

    pub fn slot(&self, id: &str) -> Option<Slot> {
        self.slot_of.get(id).copied()
    }

    pub fn view(&self, slot: Slot) -> Option<ItemView<'_>> {
        let meta = self.items.get(slot as usize)?.as_ref()?;
        Some(ItemView {
            meta,
            code: self.index.code_words(slot)?,
            embedding: self.embeddings.get(slot as usize).and_then(Option::as_ref),
            bucket_start: self.bucket_start,
        })
    }

    pub fn get(&self, id: &str) -> Option<ItemView<'_>> {
        self.view(self.slot(id)?)
    }

    /// Items in slot order.
    pub fn items(&self) -> impl Iterator<Item = ItemView<'_>> + '_ {
        (0..self.items.len() as Slot).filter_map(|s| self.view(s))
    }

    /// Ids in ascending order.
    pub fn ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.slot_of.keys().map(String::as_str).collect();
        ids.sort_unstable();
        ids
    }

    fn insert(&mut self, meta: ItemMeta, code: &BinaryCode, embedding: Option<EmbeddingVector>) -> Result<()> {
        debug_assert!(!self.slot_of.contains_key(&meta.id));
        let slot = self.free.pop().unwrap_or(self.items.len() as Slot);
        self.index.insert(slot, code)?;
        let idx = slot as usize;
        if idx >= self.items.len() {
            self.items.resize(idx + 1, None);
        }
        for term in meta.tokens.tf.keys() {
            let list = self.text.entry(term.clone()).or_default();
            if let Err(at) = list.binary_search(&slot) {
                list.insert(at, slot);
            }
        }
        if let Some(e) = embedding {
            if idx >= self.embeddings.len() {
                self.embeddings.resize(idx + 1, None);
            }
            self.embeddings[idx] = Some(e);
        }
        self.slot_of.insert(meta.id.clone(), slot);
        self.items[idx] = Some(meta);
        Ok(())
    }

    fn remove(&mut self, id: &str) -> bool {
        let Some(slot) = self.slot_of.remove(id) else {
            return false;
        };
        self.index.remove(slot);
        let idx = slot as usize;
        if let Some(meta) = self.items[idx].take() {
            for term in meta.tokens.tf.keys() {
                if let Some(list) = self.text.get_mut(term) {
                    if let Ok(at) = list.binary_search(&slot) {
                        list.remove(at);
                    }
                    if list.is_empty() {
                        self.text.remove(term);
                    }
                }
            }
        }
        if let Some(e) = self.embeddings.get_mut(idx) {
            *e = None;
        }
        self.free.push(slot);
        true
    }

    /// Slots whose titles satisfy `predicate`.
    pub fn prefilter(&self, predicate: &TextPredicate) -> AllowSet {
        if predicate.is_empty() {
            return AllowSet::new(self.slot_of.values().copied());
        }
        let mut out: Vec<Slot> = Vec::new();
        for clause in &predicate.any_of {
            if clause.all_of.is_empty() {
                return AllowSet::new(self.slot_of.values().copied());
            }
            let mut lists: Vec<&[Slot]> = Vec::with_capacity(clause.all_of.len());
            for term in &clause.all_of {
                match self.text.get(term) {
                    Some(l) => lists.push(l),
                    None => {
                        lists.clear();
                        break;
                    }
                }
            }
            if lists.is_empty() {
                continue;
            }
            lists.sort_by_key(|l| l.len());
            let (first, rest) = lists.split_first().expect("non-empty");
            out.extend(
                first
                    .iter()
                    .copied()
                    .filter(|s| rest.iter().all(|l| l.binary_search(s).is_ok())),
            );
        }
        AllowSet::new(out)
    }

    /// Pushes this segment's hits for `query` into the shared `top`.
    pub(crate) fn collect_hits<'a>(
        &'a self,
        query: &BinaryCode,
        radius: usize,
        allow: Option<&AllowSet>,
        threshold: Option<u32>,
        self_id: Option<&str>,
        top: &mut TopK<HitKey<(bool, &'a str)>>,
    ) -> Result<()> {
        let qw = query.words();
        self.index.visit_candidates(query, radius, allow, |slot, matched| {
            let words = self.index.code_words(slot).expect("candidate present");
            let d = hamming_words(qw, words);
            if threshold.is_some_and(|t| d > t) || top.bound().is_some_and(|w| d > w.distance) {
                return;
            }
            let id = self.items[slot as usize].as_ref().expect("candidate meta").id.as_str();
            let key = HitKey {
                distance: d,
                tie: (self_id != Some(id), id),
                matched: 0,
            };
            if top.admits(&key) {
                let matched = matched.unwrap_or_else(|| self.index.count_matches(slot, qw));
                top.push(HitKey { matched, ..key });
            }
        })
    }
}

/// The rolling, segmented store.
#[derive(Debug, Clone)]
pub struct RollingStore {
    config: StoreConfig,
    plan: ProjectionPlan,
    segments: BTreeMap<Timestamp, Segment>,
    locator: HashMap<String, Timestamp>,
}

impl RollingStore {
    pub fn new(config: StoreConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            plan: ProjectionPlan::for_config(&config.codec)?,
            config,
            segments: BTreeMap::new(),
            locator: HashMap::new(),
        })
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn codec(&self) -> &CodecConfig {
        &self.config.codec
    }

    pub fn plan(&self) -> &ProjectionPlan {
        &self.plan
    }

    pub fn item_count(&self) -> usize {
        self.locator.len()
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn segments(&self) -> impl Iterator<Item = &Segment> + '_ {
        self.segments.values()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.locator.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<ItemView<'_>> {
        let bucket = self.locator.get(id)?;
        self.segments.get(bucket)?.get(id)
    }

    /// Every item, ordered by bucket and then slot.
    pub fn items(&self) -> impl Iterator<Item = ItemView<'_>> + '_ {
        self.segments.values().flat_map(Segment::items)
    }

    /// All ids in ascending order.
    pub fn ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.locator.keys().map(String::as_str).collect();
        ids.sort_unstable();
        ids
    }

    pub fn binarize(&self, v: &EmbeddingVector) -> Result<BinaryCode> {
        self.plan.binarize(v)
    }

    /// Checks a record against the store contract without applying it.
    pub fn validate(&self, record: &IngestRecord, now: Timestamp) -> Result<()> {
        if record.id.is_empty() {
            return Err(Error::InvalidRecord("empty item id".into()));
        }
        if record.embedding.dim() != self.config.codec.dim {
            return Err(Error::shape(self.config.codec.dim, record.embedding.dim()));
        }
        if record.timestamp > now {
            return Err(Error::FutureTimestamp {
                id: record.id.clone(),
                timestamp: record.timestamp.secs(),
                now: now.secs(),
            });
        }
        let cutoff = self.config.cutoff(now);
        if record.timestamp < cutoff {
            return Err(Error::OutOfWindow {
                id: record.id.clone(),
                timestamp: record.timestamp.secs(),
                cutoff: cutoff.secs(),
            });
        }
        Ok(())
    }

    /// Binarizes and upserts `record`. Re-delivering an identical record is a
    /// no-op; a changed record replaces the old one wherever it lived.
    pub fn ingest(&mut self, record: IngestRecord, now: Timestamp) -> Result<Ack> {
        self.validate(&record, now)?;
        let code = self.plan.binarize(&record.embedding)?;
        let meta = ItemMeta::new(record.id, record.product_id, record.title, record.timestamp);
        let embedding = self.config.store_embeddings.then_some(record.embedding);
        self.upsert(meta, code, embedding)
    }

    /// Upserts an already-binarized item (used when restoring snapshots).
    pub fn restore(&mut self, meta: ItemMeta, code: BinaryCode, embedding: Option<EmbeddingVector>) -> Result<Ack> {
        if code.len() != self.config.codec.code_bits {
            return Err(Error::shape(self.config.codec.code_bits, code.len()));
        }
        if let Some(e) = &embedding {
            if e.dim() != self.config.codec.dim {
                return Err(Error::shape(self.config.codec.dim, e.dim()));
            }
        }
        let embedding = if self.config.store_embeddings { embedding } else { None };
        self.upsert(meta, code, embedding)
    }

    fn upsert(&mut self, meta: ItemMeta, code: BinaryCode, embedding: Option<EmbeddingVector>) -> Result<Ack> {
        let bucket = self.config.bucket_of(meta.timestamp);
        let mut ack = Ack::Inserted;
        if let Some(&old_bucket) = self.locator.get(&meta.id) {
            let seg = self.segments.get_mut(&old_bucket).expect("located segment");
            if old_bucket == bucket {
                if let Some(view) = seg.get(&meta.id) {
                    if view.meta == &meta && view.code == code.words() && view.embedding == embedding.as_ref() {
                        return Ok(Ack::Unchanged);
                    }
                }
            }
            seg.remove(&meta.id);
            if seg.is_empty() {
                self.segments.remove(&old_bucket);
            }
            self.locator.remove(&meta.id);
            ack = Ack::Updated;
        }
        let seg = match self.segments.entry(bucket) {
            alloc::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            alloc::collections::btree_map::Entry::Vacant(e) => e.insert(Segment::new(bucket, self.config.codec)?),
        };
        let id = meta.id.clone();
        seg.insert(meta, &code, embedding)?;
        self.locator.insert(id, bucket);
        Ok(ack)
    }

    /// Removes an item by id. Returns whether it existed.
    pub fn remove(&mut self, id: &str) -> bool {
        let Some(bucket) = self.locator.remove(id) else {
            return false;
        };
        if let Some(seg) = self.segments.get_mut(&bucket) {
            seg.remove(id);
            if seg.is_empty() {
                self.segments.remove(&bucket);
            }
        }
        true
    }

    /// Drops every segment whose bucket ends at or before `now - W`.
    pub fn expire(&mut self, now: Timestamp) -> usize {
        let cutoff = self.config.cutoff(now);
        let width = self.config.bucket_secs();
        let doomed: Vec<Timestamp> = self
            .segments
            .keys()
            .copied()
            .take_while(|b| b.plus_secs(width) <= cutoff)
            .collect();
        for b in &doomed {
            if let Some(seg) = self.segments.remove(b) {
                for id in seg.slot_of.keys() {
                    self.locator.remove(id);
                }
            }
        }
        doomed.len()
    }

    /// Ids of all items whose titles satisfy `predicate`, ascending.
    pub fn prefilter_ids(&self, predicate: &TextPredicate) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .segments
            .values()
            .flat_map(|seg| {
                let allow = seg.prefilter(predicate);
                allow
                    .slots()
                    .iter()
                    .filter_map(|&s| seg.view(s).map(|v| v.meta.id.as_str()))
                    .collect::<Vec<_>>()
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Per-segment allow-sets for `predicate`.
    pub fn prefilter(&self, predicate: &TextPredicate) -> BTreeMap<Timestamp, AllowSet> {
        self.segments
            .iter()
            .map(|(&b, seg)| (b, seg.prefilter(predicate)))
            .collect()
    }

    /// Hamming search over every live segment, merged by
    /// `(distance, id)`. When `self_id` is given that item wins ties at its
    /// distance. Hits beyond `threshold` are dropped before truncation.
    pub fn search_code(
        &self,
        query: &BinaryCode,
        params: &SearchParams,
        allow: Option<&BTreeMap<Timestamp, AllowSet>>,
        threshold: Option<u32>,
        self_id: Option<&str>,
    ) -> Result<Vec<RankedHit<String>>> {
        if query.len() != self.config.codec.code_bits {
            return Err(Error::shape(self.config.codec.code_bits, query.len()));
        }
        // within the threshold both radii yield the complete ball
        let radius = match threshold {
            Some(t) if (t as usize) < params.radius => t as usize,
            _ => params.radius,
        };
        let mut top = TopK::new(params.k);
        let empty = AllowSet::default();
        for (bucket, seg) in &self.segments {
            let seg_allow = match allow {
                Some(map) => Some(map.get(bucket).unwrap_or(&empty)),
                None => None,
            };
            if seg_allow.is_some_and(AllowSet::is_empty) {
                continue;
            }
            seg.collect_hits(query, radius, seg_allow, threshold, self_id, &mut top)?;
        }
        Ok(top
            .into_sorted()
            .into_iter()
            .map(|k| RankedHit {
                id: String::from(k.tie.1),
                hamming_distance: k.distance,
                cosine_score: None,
                matched_subcodes: k.matched,
            })
            .collect())
    }
}
