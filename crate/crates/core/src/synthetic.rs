//! Planted-topic corpus generators for fixtures, demos and recovery tests.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use chrono::NaiveDate;

use crate::corpus::{sort_documents, RawDocument};
use crate::events::EventLabel;
use crate::preprocess::BagOfWords;

/// Draws from a Dirichlet with the given parameters via normalized Gammas.
pub fn dirichlet<R: Rng + ?Sized>(params: &[f64], rng: &mut R) -> Vec<f64> {
    let mut draws: Vec<f64> = params
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive parameter").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter_mut().for_each(|g| *g /= total);
    } else {
        // every gamma underflowed; fall back to a point mass
        let i = rng.random_range(0..draws.len());
        draws.iter_mut().enumerate().for_each(|(j, g)| *g = if j == i { 1.0 } else { 0.0 });
    }
    draws
}

pub fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Uniform distribution over `range` within a vocabulary of `vocab_size`.
pub fn block_topic(vocab_size: usize, range: std::ops::Range<usize>) -> Vec<f64> {
    let w = 1.0 / range.len() as f64;
    let mut t = vec![0.0; vocab_size];
    t[range].iter_mut().for_each(|p| *p = w);
    t
}

/// Admixture documents: each document draws topic proportions from a
/// symmetric Dirichlet(`doc_alpha`) and then `doc_len` tokens.
pub fn admixture_bags<R: Rng + ?Sized>(
    topics: &[Vec<f64>],
    n_docs: usize,
    doc_len: usize,
    doc_alpha: f64,
    rng: &mut R,
) -> Vec<BagOfWords> {
    let params = vec![doc_alpha; topics.len()];
    (0..n_docs)
        .map(|d| {
            let theta = dirichlet(&params, rng);
            let tokens: Vec<usize> = (0..doc_len).map(|_| categorical(&topics[categorical(&theta, rng)], rng)).collect();
            BagOfWords::from_indices(format!("doc{d}"), tokens)
        })
        .collect()
}

/// Single-topic documents: document `d` is drawn entirely from topic
/// `d % topics.len()`.
pub fn pure_bags<R: Rng + ?Sized>(topics: &[Vec<f64>], n_docs: usize, doc_len: usize, rng: &mut R) -> Vec<BagOfWords> {
    (0..n_docs)
        .map(|d| {
            let t = &topics[d % topics.len()];
            BagOfWords::from_indices(format!("doc{d}"), (0..doc_len).map(|_| categorical(t, rng)))
        })
        .collect()
}

/// L1 distance between two distributions.
pub fn l1(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

/// Greedy one-to-one matching of planted to inferred topics by smallest L1.
/// Returns the per-planted-topic L1 (2.0, the maximum, when unmatched).
pub fn greedy_alignment(planted: &[Vec<f64>], inferred: &[Vec<f64>]) -> Vec<f64> {
    let mut pairs: Vec<(f64, usize, usize)> = planted
        .iter()
        .enumerate()
        .flat_map(|(i, p)| inferred.iter().enumerate().map(move |(j, q)| (l1(p, q), i, j)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![2.0; planted.len()];
    let mut used_p = vec![false; planted.len()];
    let mut used_q = vec![false; inferred.len()];
    for (d, i, j) in pairs {
        if !used_p[i] && !used_q[j] {
            used_p[i] = true;
            used_q[j] = true;
            out[i] = d;
        }
    }
    out
}

/// Spelling of synthetic vocabulary index `i`: `z` followed by three
/// letters, so it survives tokenization and is never a stop-word.
pub fn synthetic_word(i: usize) -> String {
    let letter = |k: usize| (b'a' + (k % 26) as u8) as char;
    format!("z{}{}{}", letter(i / 676), letter(i / 26), letter(i))
}

/// Text documents for consecutive yearly epochs starting in 2000. Epoch `t`
/// gets `docs_per_topic` single-topic documents per topic in
/// `epoch_topics[t]`, spread over the months of the year. Returned in corpus
/// order.
pub fn text_documents<R: Rng + ?Sized>(
    epoch_topics: &[Vec<Vec<f64>>],
    docs_per_topic: usize,
    doc_len: usize,
    rng: &mut R,
) -> Vec<RawDocument> {
    let mut out = Vec::new();
    for (t, topics) in epoch_topics.iter().enumerate() {
        for (d, bag) in pure_bags(topics, topics.len() * docs_per_topic, doc_len, rng).into_iter().enumerate() {
            let words: Vec<String> = bag.tokens().map(synthetic_word).collect();
            out.push(RawDocument {
                id: format!("e{t}-{d:04}"),
                timestamp: NaiveDate::from_ymd_opt(2000 + t as i32, (d % 12) as u32 + 1, 1).expect("valid date"),
                title: None,
                body: words.join(" "),
            });
        }
    }
    sort_documents(&mut out);
    out
}

/// Two-epoch planted topic dynamics.
///
/// Every epoch carries two background topics on partly overlapping word
/// blocks, so the background edges outrank any edge touching the planted
/// block. The planted block holds one topic, or its two disjoint halves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    Persisting,
    Vanishing,
    Emerging,
    Splitting,
    Merging,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [Scenario::Persisting, Scenario::Vanishing, Scenario::Emerging, Scenario::Splitting, Scenario::Merging];

    pub const VOCAB_SIZE: usize = 34;

    /// Label the planted node should carry.
    pub fn expected_label(self) -> EventLabel {
        match self {
            Scenario::Persisting => EventLabel::Evolved,
            Scenario::Vanishing => EventLabel::Vanished,
            Scenario::Emerging => EventLabel::Emerged,
            Scenario::Splitting => EventLabel::Split,
            Scenario::Merging => EventLabel::Merged,
        }
    }

    /// Epoch holding the planted node.
    pub fn planted_epoch(self) -> usize {
        match self {
            Scenario::Persisting | Scenario::Vanishing | Scenario::Splitting => 0,
            Scenario::Emerging | Scenario::Merging => 1,
        }
    }

    /// Whole planted-block topic; the planted node is the inferred topic
    /// closest to it in its epoch.
    pub fn planted_topic(self) -> Vec<f64> {
        block_topic(Self::VOCAB_SIZE, 14..34)
    }

    /// Generating topics for epochs 0 and 1.
    pub fn topics(self) -> [Vec<Vec<f64>>; 2] {
        let v = Self::VOCAB_SIZE;
        let background = vec![block_topic(v, 0..8), block_topic(v, 6..14)];
        let whole = vec![self.planted_topic()];
        let halves = vec![block_topic(v, 14..24), block_topic(v, 24..34)];
        let with = |extra: &Vec<Vec<f64>>| background.iter().chain(extra).cloned().collect::<Vec<_>>();
        match self {
            Scenario::Persisting => [with(&whole), with(&whole)],
            Scenario::Vanishing => [with(&whole), background.clone()],
            Scenario::Emerging => [background.clone(), with(&whole)],
            Scenario::Splitting => [with(&whole), with(&halves)],
            Scenario::Merging => [with(&halves), with(&whole)],
        }
    }

    /// Single-topic documents, `docs_per_topic` per generating topic.
    pub fn bags<R: Rng + ?Sized>(self, docs_per_topic: usize, doc_len: usize, rng: &mut R) -> [Vec<BagOfWords>; 2] {
        self.topics().map(|ts| pure_bags(&ts, ts.len() * docs_per_topic, doc_len, rng))
    }
}
