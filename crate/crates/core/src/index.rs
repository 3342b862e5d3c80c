//! Inverted subcode index with pigeonhole candidate generation.
//!
//! Each of the `m` subcode positions has its own posting map from subcode
//! value to a sorted list of slots. A query within Hamming radius `r < m`
//! only needs items that match the query exactly on at least `m - r`
//! positions, so candidates are accumulated term-at-a-time and abandoned as
//! soon as they can no longer reach that count.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use hashbrown::HashMap;
use serde::{Deserialize, Serialize};

use crate::codec::{bits_at_words, hamming_words, BinaryCode, CodecConfig};
use crate::error::{Error, Result};

/// Dense item handle inside one index.
pub type Slot = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Result budget.
    pub k: usize,
    /// Hamming radius covered by the completeness guarantee. `radius >= m`
    /// switches to a full scan.
    pub radius: usize,
    /// Number of top Hamming hits re-scored by cosine; 0 disables.
    #[serde(default)]
    pub rerank_depth: usize,
}

impl SearchParams {
    pub fn new(k: usize, radius: usize) -> Self {
        Self {
            k,
            radius,
            rerank_depth: 0,
        }
    }

    /// `m - r`, or `None` when the radius forces a full scan.
    pub fn min_match(&self, subcode_count: usize) -> Option<usize> {
        (self.radius < subcode_count).then(|| subcode_count - self.radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedHit<I = Slot> {
    pub id: I,
    pub hamming_distance: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cosine_score: Option<f64>,
    pub matched_subcodes: u32,
}

impl<I> RankedHit<I> {
    pub fn map_id<J>(self, f: impl FnOnce(I) -> J) -> RankedHit<J> {
        RankedHit {
            id: f(self.id),
            hamming_distance: self.hamming_distance,
            cosine_score: self.cosine_score,
            matched_subcodes: self.matched_subcodes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub slot: Slot,
    pub matched: u32,
}

/// Set of slots a search is restricted to.
#[derive(Debug, Clone, Default)]
pub struct AllowSet {
    slots: Vec<Slot>,
    bits: Vec<u64>,
}

impl AllowSet {
    pub fn new(slots: impl IntoIterator<Item = Slot>) -> Self {
        let mut slots: Vec<Slot> = slots.into_iter().collect();
        slots.sort_unstable();
        slots.dedup();
        let words = slots.last().map_or(0, |&s| s as usize / 64 + 1);
        let mut bits = alloc::vec![0u64; words];
        for &s in &slots {
            bits[s as usize / 64] |= 1 << (s % 64);
        }
        Self { slots, bits }
    }

    #[inline]
    pub fn contains(&self, slot: Slot) -> bool {
        self.bits
            .get(slot as usize / 64)
            .is_some_and(|w| w >> (slot % 64) & 1 == 1)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }
}

#[derive(Debug, Clone)]
pub struct SubcodeIndex {
    config: CodecConfig,
    postings: Vec<HashMap<u64, Vec<Slot>>>,
    words_per_code: usize,
    codes: Vec<u64>,
    present: Vec<bool>,
    live: usize,
}

const DEAD: u16 = u16::MAX;

impl SubcodeIndex {
    pub fn new(config: CodecConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            postings: (0..config.subcode_count).map(|_| HashMap::new()).collect(),
            words_per_code: config.code_bits.div_ceil(64),
            config,
            codes: Vec::new(),
            present: Vec::new(),
            live: 0,
        })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    /// One past the largest slot ever inserted.
    pub fn slot_bound(&self) -> usize {
        self.present.len()
    }

    pub fn contains(&self, slot: Slot) -> bool {
        self.present.get(slot as usize).copied().unwrap_or(false)
    }

    pub fn slots(&self) -> impl Iterator<Item = Slot> + '_ {
        self.present
            .iter()
            .enumerate()
            .filter(|(_, &p)| p)
            .map(|(i, _)| i as Slot)
    }

    #[inline]
    pub fn code_words(&self, slot: Slot) -> Option<&[u64]> {
        self.contains(slot).then(|| {
            let at = slot as usize * self.words_per_code;
            &self.codes[at..at + self.words_per_code]
        })
    }

    pub fn code(&self, slot: Slot) -> Option<BinaryCode> {
        self.code_words(slot)
            .map(|w| BinaryCode::from_words(w.to_vec(), self.config.code_bits).expect("stored code"))
    }

    /// Postings at `position` for `value`, sorted by slot.
    pub fn posting(&self, position: usize, value: u64) -> &[Slot] {
        self.postings[position].get(&value).map_or(&[], Vec::as_slice)
    }

    /// Total number of slot entries across the posting maps of `position`.
    pub fn posting_volume(&self, position: usize) -> usize {
        self.postings[position].values().map(Vec::len).sum()
    }

    fn check_len(&self, code: &BinaryCode) -> Result<()> {
        if code.len() != self.config.code_bits {
            return Err(Error::shape(self.config.code_bits, code.len()));
        }
        Ok(())
    }

    /// Upserts `code` under `slot`.
    pub fn insert(&mut self, slot: Slot, code: &BinaryCode) -> Result<()> {
        self.check_len(code)?;
        if self.contains(slot) {
            if self.code_words(slot) == Some(code.words()) {
                return Ok(());
            }
            self.remove(slot);
        }
        let s = self.config.subcode_bits();
        for (p, map) in self.postings.iter_mut().enumerate() {
            let list = map.entry(code.subcode(p, s)).or_default();
            if let Err(at) = list.binary_search(&slot) {
                list.insert(at, slot);
            }
        }
        let idx = slot as usize;
        if idx >= self.present.len() {
            self.present.resize(idx + 1, false);
            self.codes.resize((idx + 1) * self.words_per_code, 0);
        }
        let at = idx * self.words_per_code;
        self.codes[at..at + self.words_per_code].copy_from_slice(code.words());
        self.present[idx] = true;
        self.live += 1;
        Ok(())
    }

    /// Removes `slot`; a missing slot is a no-op. Returns whether it was present.
    pub fn remove(&mut self, slot: Slot) -> bool {
        let Some(code) = self.code(slot) else {
            return false;
        };
        let s = self.config.subcode_bits();
        for (p, map) in self.postings.iter_mut().enumerate() {
            let value = code.subcode(p, s);
            if let Some(list) = map.get_mut(&value) {
                if let Ok(at) = list.binary_search(&slot) {
                    list.remove(at);
                }
                if list.is_empty() {
                    map.remove(&value);
                }
            }
        }
        self.present[slot as usize] = false;
        self.live -= 1;
        true
    }

    fn query_subcodes(&self, query: &BinaryCode) -> Result<Vec<u64>> {
        self.check_len(query)?;
        let s = self.config.subcode_bits();
        Ok((0..self.config.subcode_count).map(|p| query.subcode(p, s)).collect())
    }

    fn matched_direct(&self, slot: Slot, qsub: &[u64]) -> u32 {
        let words = self.code_words(slot).expect("present slot");
        let s = self.config.subcode_bits();
        qsub.iter()
            .enumerate()
            .filter(|&(p, &v)| bits_at_words(words, p * s, s) == v)
            .count() as u32
    }

    /// Subcodes of `slot` equal to the query's at the same position.
    pub fn count_matches(&self, slot: Slot, query_words: &[u64]) -> u32 {
        let words = self.code_words(slot).expect("present slot");
        let s = self.config.subcode_bits();
        (0..self.config.subcode_count)
            .filter(|p| bits_at_words(words, p * s, s) == bits_at_words(query_words, p * s, s))
            .count() as u32
    }

    /// Items sharing at least `m - radius` subcodes with `query` at matching
    /// positions (every indexed item when `radius >= m`), restricted to
    /// `allow` when given. Sorted by slot.
    pub fn candidates(&self, query: &BinaryCode, radius: usize, allow: Option<&AllowSet>) -> Result<Vec<Candidate>> {
        let mut out = Vec::new();
        let qw = query.words();
        self.visit_candidates(query, radius, allow, |slot, matched| {
            let matched = matched.unwrap_or_else(|| self.count_matches(slot, qw));
            out.push(Candidate { slot, matched })
        })?;
        out.sort_unstable_by_key(|c| c.slot);
        Ok(out)
    }

    /// Calls `f(slot, matched_subcodes)` once per candidate, in no particular
    /// order. A full scan passes `None` and leaves counting to the caller.
    pub fn visit_candidates(
        &self,
        query: &BinaryCode,
        radius: usize,
        allow: Option<&AllowSet>,
        mut f: impl FnMut(Slot, Option<u32>),
    ) -> Result<()> {
        let qsub = self.query_subcodes(query)?;
        let m = self.config.subcode_count;
        if radius >= m {
            match allow {
                Some(a) => a.slots().iter().filter(|&&s| self.contains(s)).for_each(|&s| f(s, None)),
                None => self.slots().for_each(|s| f(s, None)),
            }
            return Ok(());
        }
        let min_match = m - radius;

        // A restrictive allow-set is cheaper to verify directly than to
        // intersect with the postings that can introduce new candidates.
        if let Some(a) = allow {
            let volume: usize = (0..=radius).map(|p| self.posting(p, qsub[p]).len()).sum();
            if a.len() < volume {
                for &s in a.slots() {
                    if self.contains(s) {
                        let matched = self.matched_direct(s, &qsub);
                        if matched as usize >= min_match {
                            f(s, Some(matched));
                        }
                    }
                }
                return Ok(());
            }
        }

        let mut counts = alloc::vec![0u16; self.slot_bound()];
        let mut touched: Vec<Slot> = Vec::new();
        for (p, &value) in qsub.iter().enumerate() {
            let remaining = m - p - 1;
            let may_open = p <= radius;
            for &slot in self.posting(p, value) {
                if allow.is_some_and(|a| !a.contains(slot)) {
                    continue;
                }
                let c = &mut counts[slot as usize];
                if *c == DEAD {
                    continue;
                }
                if *c == 0 {
                    if !may_open {
                        continue;
                    }
                    touched.push(slot);
                }
                *c += 1;
            }
            if remaining < min_match {
                // early abandonment: drop items that can no longer reach min_match
                touched.retain(|&slot| {
                    let c = &mut counts[slot as usize];
                    if (*c as usize) + remaining < min_match {
                        *c = DEAD;
                        false
                    } else {
                        true
                    }
                });
            }
        }
        for slot in touched {
            f(slot, Some(counts[slot as usize] as u32));
        }
        Ok(())
    }

    /// Reference accumulation without early abandonment. Returns the same
    /// set as [`candidates`](Self::candidates); kept for verification.
    pub fn candidates_without_pruning(&self, query: &BinaryCode, radius: usize) -> Result<Vec<Candidate>> {
        let qsub = self.query_subcodes(query)?;
        let m = self.config.subcode_count;
        let min_match = m.saturating_sub(radius);
        let mut counts = alloc::vec![0u32; self.slot_bound()];
        for (p, &value) in qsub.iter().enumerate() {
            for &slot in self.posting(p, value) {
                counts[slot as usize] += 1;
            }
        }
        Ok(self
            .slots()
            .filter(|&s| counts[s as usize] as usize >= min_match)
            .map(|s| Candidate {
                slot: s,
                matched: counts[s as usize],
            })
            .collect())
    }

    /// Candidates re-ranked by exact Hamming distance, ordered by
    /// `(distance, slot)` and truncated to `params.k`. Cosine re-ranking is
    /// applied by callers that hold embeddings, see [`rerank_by_cosine`].
    pub fn search(&self, query: &BinaryCode, params: &SearchParams, allow: Option<&AllowSet>) -> Result<Vec<RankedHit>> {
        let mut top = TopK::new(params.k);
        let qw = query.words();
        self.visit_candidates(query, params.radius, allow, |slot, matched| {
            let d = hamming_words(qw, self.code_words(slot).expect("candidate is present"));
            let key = HitKey {
                distance: d,
                tie: slot,
                matched: 0,
            };
            if top.admits(&key) {
                let matched = matched.unwrap_or_else(|| self.count_matches(slot, qw));
                top.push(HitKey { matched, ..key });
            }
        })?;
        Ok(top
            .into_sorted()
            .into_iter()
            .map(|h| RankedHit {
                id: h.tie,
                hamming_distance: h.distance,
                cosine_score: None,
                matched_subcodes: h.matched,
            })
            .collect())
    }
}

/// Re-orders the first `depth` hits by descending cosine score (ties by
/// ascending id). Hits for which `score` returns `None` keep no score and
/// sort after scored ones.
pub fn rerank_by_cosine<I: Ord>(hits: &mut [RankedHit<I>], depth: usize, mut score: impl FnMut(&I) -> Option<f64>) {
    let depth = depth.min(hits.len());
    if depth == 0 {
        return;
    }
    for h in hits[..depth].iter_mut() {
        h.cosine_score = score(&h.id);
    }
    hits[..depth].sort_by(|a, b| match (a.cosine_score, b.cosine_score) {
        (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.id.cmp(&b.id)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.id.cmp(&b.id),
    });
}

/// Ordering key for Hamming-ranked hits: distance, then tie-break.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct HitKey<T> {
    pub distance: u32,
    pub tie: T,
    pub matched: u32,
}

impl<T: Ord> Ord for HitKey<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .cmp(&other.distance)
            .then_with(|| self.tie.cmp(&other.tie))
    }
}

impl<T: Ord> PartialOrd for HitKey<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Keeps the `k` smallest items pushed.
pub(crate) struct TopK<T: Ord> {
    k: usize,
    heap: BinaryHeap<T>,
}

impl<T: Ord> TopK<T> {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k.min(4096) + 1),
        }
    }

    #[inline]
    pub fn push(&mut self, item: T) {
        if self.heap.len() < self.k {
            self.heap.push(item);
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if item < *worst {
                *worst = item;
            }
        }
    }

    /// The current k-th best item once the heap is full.
    #[inline]
    pub fn bound(&self) -> Option<&T> {
        if self.heap.len() < self.k {
            None
        } else {
            self.heap.peek()
        }
    }

    /// Whether `item` could still enter the top-k.
    #[inline]
    pub fn admits(&self, item: &T) -> bool {
        self.heap.len() < self.k || self.heap.peek().is_some_and(|w| item < w)
    }

    pub fn into_sorted(self) -> Vec<T> {
        self.heap.into_sorted_vec()
    }
}
