//! Title tokenization, keyword predicates and tf-idf title retrieval.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use hashbrown::HashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenizedTitle {
    pub tokens: Vec<String>,
    pub tf: BTreeMap<String, u32>,
}

impl TokenizedTitle {
    pub fn contains(&self, term: &str) -> bool {
        self.tf.contains_key(term)
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lowercases and splits on runs of non-alphanumeric characters. Two words
/// joined by a single hyphen also yield their concatenation, so
/// `"E-Cigarette"` produces `e`, `cigarette` and `ecigarette`.
pub fn tokenize(text: &str) -> TokenizedTitle {
    let mut tokens: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut prev_word: Option<String> = None;
    let mut separator = String::new();

    let finish = |current: &mut String, separator: &mut String, prev_word: &mut Option<String>, tokens: &mut Vec<String>| {
        if current.is_empty() {
            return;
        }
        let word = core::mem::take(current);
        tokens.push(word.clone());
        if let Some(prev) = prev_word.as_ref() {
            if separator == "-" {
                let mut joined = prev.clone();
                joined.push_str(&word);
                tokens.push(joined);
            }
        }
        separator.clear();
        *prev_word = Some(word);
    };

    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else {
            finish(&mut current, &mut separator, &mut prev_word, &mut tokens);
            separator.push(ch);
        }
    }
    finish(&mut current, &mut separator, &mut prev_word, &mut tokens);

    let mut tf = BTreeMap::new();
    for t in &tokens {
        *tf.entry(t.clone()).or_insert(0) += 1;
    }
    TokenizedTitle { tokens, tf }
}

/// Normalizes a predicate term to the single token the tokenizer would emit
/// for it (`"E-Cigarette"` becomes `"ecigarette"`).
pub fn normalize_term(term: &str) -> Result<String> {
    let words: Vec<String> = term
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.chars().flat_map(char::to_lowercase).collect())
        .collect();
    let hyphen_joined = term
        .trim()
        .split('-')
        .all(|w| !w.is_empty() && w.chars().all(char::is_alphanumeric));
    match words.len() {
        0 => Err(Error::InvalidRecord(alloc::format!("empty predicate term {term:?}"))),
        1 => Ok(words.into_iter().next().unwrap_or_default()),
        2 if hyphen_joined => Ok(words.concat()),
        _ => Err(Error::InvalidRecord(alloc::format!(
            "predicate term {term:?} is not a single word"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Clause {
    pub all_of: Vec<String>,
}

/// OR over clauses, AND within a clause. No clauses matches everything.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawPredicate")]
pub struct TextPredicate {
    pub any_of: Vec<Clause>,
}

#[derive(Deserialize)]
struct RawPredicate {
    #[serde(default)]
    any_of: Vec<Clause>,
}

impl TryFrom<RawPredicate> for TextPredicate {
    type Error = Error;

    fn try_from(raw: RawPredicate) -> Result<Self> {
        Self::new(raw.any_of.into_iter().map(|c| c.all_of))
    }
}

impl TextPredicate {
    /// Builds a predicate, normalizing every term.
    pub fn new<C, T>(clauses: C) -> Result<Self>
    where
        C: IntoIterator,
        C::Item: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let any_of = clauses
            .into_iter()
            .map(|terms| {
                let mut all_of = terms
                    .into_iter()
                    .map(|t| normalize_term(t.as_ref()))
                    .collect::<Result<Vec<_>>>()?;
                all_of.sort();
                all_of.dedup();
                Ok(Clause { all_of })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { any_of })
    }

    pub fn any() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.any_of.is_empty()
    }

    pub fn matches(&self, title: &TokenizedTitle) -> bool {
        self.any_of.is_empty()
            || self
                .any_of
                .iter()
                .any(|c| c.all_of.iter().all(|t| title.contains(t)))
    }
}

pub fn matches(p: &TextPredicate, t: &TokenizedTitle) -> bool {
    p.matches(t)
}

/// Title corpus scored by tf-idf cosine with `idf = ln(1 + |corpus| / df)`.
/// Query terms absent from the corpus carry no weight.
#[derive(Debug, Clone, Default)]
pub struct TfIdfCorpus {
    ids: Vec<String>,
    by_id: HashMap<String, u32>,
    postings: HashMap<String, Vec<(u32, u32)>>,
    norms: Vec<f64>,
}

impl TfIdfCorpus {
    pub fn build<'a>(docs: impl IntoIterator<Item = (&'a str, &'a TokenizedTitle)>) -> Self {
        let mut docs: Vec<(&str, &TokenizedTitle)> = docs.into_iter().collect();
        docs.sort_by(|a, b| a.0.cmp(b.0));
        docs.dedup_by(|a, b| a.0 == b.0);

        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        for (i, (_, title)) in docs.iter().enumerate() {
            for (term, &count) in &title.tf {
                postings.entry(term.clone()).or_default().push((i as u32, count));
            }
        }
        let n = docs.len() as f64;
        // summed in term order so scores do not depend on hash iteration
        let norms = docs
            .iter()
            .map(|(_, title)| {
                let sq: f64 = title
                    .tf
                    .iter()
                    .map(|(term, &tf)| {
                        let w = tf as f64 * libm::log(1.0 + n / postings[term].len() as f64);
                        w * w
                    })
                    .sum();
                libm::sqrt(sq)
            })
            .collect();
        let ids: Vec<String> = docs.iter().map(|(id, _)| String::from(*id)).collect();
        let by_id = ids.iter().enumerate().map(|(i, id)| (id.clone(), i as u32)).collect();
        Self {
            ids,
            by_id,
            postings,
            norms,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.postings
            .get(term)
            .map(|l| libm::log(1.0 + self.ids.len() as f64 / l.len() as f64))
    }

    /// Cosine scores for every document, indexed like [`ids`](Self::ids).
    pub fn scores(&self, query: &TokenizedTitle) -> Vec<f64> {
        let mut dots = alloc::vec![0.0f64; self.ids.len()];
        let mut qnorm = 0.0;
        for (term, &qtf) in &query.tf {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = libm::log(1.0 + self.ids.len() as f64 / list.len() as f64);
            let wq = qtf as f64 * idf;
            qnorm += wq * wq;
            for &(d, tf) in list {
                dots[d as usize] += wq * tf as f64 * idf;
            }
        }
        let qnorm = libm::sqrt(qnorm);
        dots.iter()
            .zip(&self.norms)
            .map(|(&dot, &dn)| if qnorm == 0.0 || dn == 0.0 { 0.0 } else { dot / (qnorm * dn) })
            .collect()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    /// Top `n` documents by score (descending, ties by id), excluding
    /// `exclude`.
    pub fn top_n(&self, query: &TokenizedTitle, n: usize, exclude: Option<&str>) -> Vec<(String, f64)> {
        let scores = self.scores(query);
        let skip = exclude.and_then(|id| self.by_id.get(id).copied());
        let mut order: Vec<u32> = (0..self.ids.len() as u32).filter(|&d| Some(d) != skip).collect();
        let cmp = |a: &u32, b: &u32| {
            scores[*b as usize]
                .total_cmp(&scores[*a as usize])
                .then_with(|| a.cmp(b))
        };
        if n < order.len() {
            if n == 0 {
                return Vec::new();
            }
            order.select_nth_unstable_by(n - 1, cmp);
            order.truncate(n);
        }
        order.sort_by(cmp);
        order
            .into_iter()
            .map(|d| (self.ids[d as usize].clone(), scores[d as usize]))
            .collect()
    }
}
