//! Read-only questions over a finished analysis.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::AnalysisBundle;
use crate::events::{EdgeRef, EventLabel};
use crate::relatedness::{Measure, NodeRef};

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("query has no searchable terms")]
    EmptyQuery,
    #[error("none of the query terms {0:?} is in the vocabulary")]
    NoVocabularyMatch(Vec<String>),
    #[error("no topic {0}")]
    UnknownNode(NodeRef),
    #[error("{0} graph has not been pruned")]
    UnprunedGraph(Measure),
    #[error("limit must be at least 1")]
    InvalidLimit,
    #[error("word count {n} outside 1..={vocab_size}")]
    InvalidCount { n: usize, vocab_size: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicHit {
    pub epoch: usize,
    pub topic_id: usize,
    pub score: f64,
    /// Query lemmas found in the vocabulary, in query order.
    pub matched_terms: Vec<String>,
}

/// Ranks topics by the summed probability of the query lemmas.
pub fn search_topics(bundle: &AnalysisBundle, query: &str, limit: usize) -> Result<Vec<TopicHit>, QueryError> {
    if limit == 0 {
        return Err(QueryError::InvalidLimit);
    }
    let lemmas = bundle.text.lemmas(query);
    if lemmas.is_empty() {
        return Err(QueryError::EmptyQuery);
    }
    let indices: Vec<usize> = lemmas.iter().filter_map(|l| bundle.vocabulary.index_of(l)).collect();
    if indices.is_empty() {
        return Err(QueryError::NoVocabularyMatch(lemmas));
    }
    let mut matched: Vec<String> = Vec::new();
    for l in &lemmas {
        if bundle.vocabulary.index_of(l).is_some() && !matched.contains(l) {
            matched.push(l.clone());
        }
    }
    let mut hits: Vec<TopicHit> = bundle
        .models
        .iter()
        .flat_map(|m| m.topics.iter())
        .map(|t| TopicHit {
            epoch: t.epoch,
            topic_id: t.id,
            score: indices.iter().map(|&w| t.term_dist[w]).sum(),
            matched_terms: matched.clone(),
        })
        .filter(|h| h.score > 0.0)
        .collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.epoch.cmp(&b.epoch)).then(a.topic_id.cmp(&b.topic_id)));
    hits.truncate(limit);
    Ok(hits)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Backward,
    Forward,
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "backward" => Ok(Direction::Backward),
            "forward" => Ok(Direction::Forward),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Backward => "backward",
            Direction::Forward => "forward",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub root: NodeRef,
    pub direction: Direction,
    pub measure: Measure,
    pub nodes: Vec<NodeRef>,
    pub edges: Vec<EdgeRef>,
}

/// Breadth-first closure over surviving edges, one epoch per level.
pub fn trace(
    bundle: &AnalysisBundle,
    node: NodeRef,
    direction: Direction,
    measure: Measure,
    max_depth: usize,
) -> Result<Lineage, QueryError> {
    let graph = bundle.graph(measure);
    if !graph.has_node(node) {
        return Err(QueryError::UnknownNode(node));
    }
    if !graph.is_pruned() {
        return Err(QueryError::UnprunedGraph(measure));
    }
    let mut nodes = BTreeSet::from([node]);
    let mut edges = BTreeSet::new();
    let mut frontier = BTreeSet::from([node]);
    for _ in 0..max_depth {
        let mut next = BTreeSet::new();
        for e in graph.surviving_edges() {
            let (near, far) = match direction {
                Direction::Forward => (e.from, e.to),
                Direction::Backward => (e.to, e.from),
            };
            if frontier.contains(&near) {
                edges.insert(EdgeRef { from: e.from, to: e.to });
                next.insert(far);
            }
        }
        if next.is_empty() {
            break;
        }
        nodes.extend(next.iter().copied());
        frontier = next;
    }
    Ok(Lineage { root: node, direction, measure, nodes: nodes.into_iter().collect(), edges: edges.into_iter().collect() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub term: String,
    pub weight: f64,
}

/// The `n` most probable terms of a topic, ties broken lexicographically.
pub fn word_cloud(bundle: &AnalysisBundle, node: NodeRef, n: usize) -> Result<Vec<WeightedTerm>, QueryError> {
    let topic = bundle.topic(node).ok_or(QueryError::UnknownNode(node))?;
    let vocab_size = bundle.vocabulary.len();
    if n == 0 || n > vocab_size {
        return Err(QueryError::InvalidCount { n, vocab_size });
    }
    let mut order: Vec<usize> = (0..vocab_size).collect();
    order.sort_by(|&a, &b| {
        topic.term_dist[b]
            .total_cmp(&topic.term_dist[a])
            .then_with(|| bundle.vocabulary.term(a).cmp(bundle.vocabulary.term(b)))
    });
    Ok(order
        .into_iter()
        .take(n)
        .map(|w| WeightedTerm { term: bundle.vocabulary.term(w).to_owned(), weight: topic.term_dist[w] })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub index: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub document_count: usize,
    pub token_count: u64,
    pub topic_count: usize,
    pub event_counts: BTreeMap<EventLabel, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochPairStats {
    pub from_epoch: usize,
    pub to_epoch: usize,
    pub edge_count: usize,
    pub surviving: BTreeMap<Measure, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub document_count: usize,
    pub token_count: u64,
    pub vocabulary_size: usize,
    pub epochs: Vec<EpochStats>,
    pub epoch_pairs: Vec<EpochPairStats>,
}

pub fn corpus_stats(bundle: &AnalysisBundle) -> CorpusStats {
    let labels = bundle.label_counts();
    let epochs: Vec<EpochStats> = bundle
        .epochs
        .iter()
        .zip(bundle.models.iter())
        .zip(labels)
        .map(|((s, m), event_counts)| EpochStats {
            index: s.index,
            start: s.start,
            end: s.end,
            document_count: s.document_ids.len(),
            token_count: m.token_count(),
            topic_count: m.topics.len(),
            event_counts,
        })
        .collect();
    let epoch_pairs = (1..epochs.len())
        .map(|t| {
            let in_pair = |e: &&crate::relatedness::Edge| e.from.epoch == t - 1;
            let surviving = Measure::ALL
                .iter()
                .map(|&m| (m, bundle.graph(m).surviving_edges().filter(in_pair).count()))
                .collect();
            EpochPairStats {
                from_epoch: t - 1,
                to_epoch: t,
                edge_count: bundle.graph(Measure::Bhattacharyya).edges().iter().filter(in_pair).count(),
                surviving,
            }
        })
        .collect();
    CorpusStats {
        document_count: epochs.iter().map(|e| e.document_count).sum(),
        token_count: epochs.iter().map(|e| e.token_count).sum(),
        vocabulary_size: bundle.vocabulary.len(),
        epochs,
        epoch_pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::classify_events;
    use crate::testutil::{bundle, smooth};

    const TERMS: [&str; 6] = ["cell", "gene", "heart", "liver", "lung", "zinc"];

    fn one_hot(i: usize) -> Vec<f64> {
        let mut r = vec![0.0; TERMS.len()];
        r[i] = 1.0;
        r
    }

    fn peaked(i: usize) -> Vec<f64> {
        let mut r = vec![1e-4; TERMS.len()];
        r[i] = 1.0;
        let s: f64 = r.iter().sum();
        r.iter().map(|x| x / s).collect()
    }

    fn fixture() -> AnalysisBundle {
        bundle(
            &TERMS,
            &[
                vec![peaked(0), smooth(&[0.0, 0.5, 0.5, 0.0, 0.0, 0.0])],
                vec![smooth(&one_hot(1)), smooth(&[0.3, 0.0, 0.0, 0.3, 0.4, 0.0])],
            ],
            0.5,
            3,
        )
    }

    #[test]
    fn dominant_word_ranks_its_topic_first() {
        let b = fixture();
        let hits = search_topics(&b, "Cell", 10).unwrap();
        assert_eq!((hits[0].epoch, hits[0].topic_id), (0, 0));
        assert!(hits[0].score > 0.99);
        assert_eq!(hits[0].matched_terms, ["cell"]);
        // lemmatized through the bundle's lexicon
        assert_eq!(search_topics(&b, "cells", 10).unwrap(), hits);
        assert_eq!(search_topics(&b, "cell", 1).unwrap().len(), 1);
    }

    #[test]
    fn search_errors() {
        let b = fixture();
        assert_eq!(search_topics(&b, "", 5), Err(QueryError::EmptyQuery));
        assert_eq!(search_topics(&b, "the of and", 5), Err(QueryError::EmptyQuery));
        assert!(matches!(search_topics(&b, "xyzzyq plugh", 5), Err(QueryError::NoVocabularyMatch(_))));
        assert_eq!(search_topics(&b, "cell", 0), Err(QueryError::InvalidLimit));
    }

    #[test]
    fn scores_are_additive() {
        let b = fixture();
        let score = |q: &str| -> BTreeMap<(usize, usize), f64> {
            search_topics(&b, q, 100).unwrap().into_iter().map(|h| ((h.epoch, h.topic_id), h.score)).collect()
        };
        let (one, two, both) = (score("gene"), score("liver"), score("gene liver"));
        for (k, s) in &both {
            assert!((s - one[k] - two[k]).abs() < 1e-12);
        }
        // oov terms contribute nothing
        assert_eq!(score("gene xyzzyq"), one);
    }

    #[test]
    fn ranking_is_stable_and_tie_broken() {
        let b = bundle(&TERMS, &[vec![smooth(&[1.0; 6]), smooth(&[1.0; 6])], vec![smooth(&[1.0; 6])]], 0.5, 1);
        let hits = search_topics(&b, "zinc", 10).unwrap();
        let order: Vec<_> = hits.iter().map(|h| (h.epoch, h.topic_id)).collect();
        assert_eq!(order, [(0, 0), (0, 1), (1, 0)]);
        assert_eq!(search_topics(&b, "zinc", 10).unwrap(), hits);
    }

    fn chain() -> AnalysisBundle {
        let a = smooth(&[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        bundle(&TERMS, &[vec![a.clone()], vec![a.clone()], vec![a]], 0.5, 2)
    }

    #[test]
    fn trace_along_a_chain() {
        let b = chain();
        let (a, bb, c) = (NodeRef::new(0, 0), NodeRef::new(1, 0), NodeRef::new(2, 0));
        let back = trace(&b, c, Direction::Backward, Measure::Bhattacharyya, 2).unwrap();
        assert_eq!(back.nodes, [a, bb, c]);
        assert_eq!(back.edges, [EdgeRef { from: a, to: bb }, EdgeRef { from: bb, to: c }]);
        let fwd = trace(&b, a, Direction::Forward, Measure::Bhattacharyya, 2).unwrap();
        assert_eq!(fwd.nodes, back.nodes);
        assert_eq!(fwd.edges, back.edges);
        let short = trace(&b, c, Direction::Backward, Measure::Bhattacharyya, 1).unwrap();
        assert_eq!(short.nodes, [bb, c]);
        let none = trace(&b, c, Direction::Backward, Measure::KldForward, 0).unwrap();
        assert_eq!(none.nodes, [c]);
        assert!(none.edges.is_empty());
    }

    #[test]
    fn trace_of_an_emerged_topic_is_its_root() {
        let a = smooth(&one_hot(0));
        let bb = smooth(&one_hot(1));
        let fresh = smooth(&one_hot(5));
        let b = bundle(&TERMS, &[vec![a.clone(), bb.clone()], vec![a, bb, fresh]], 0.75, 2);
        let x = NodeRef::new(1, 2);
        assert!(b.events().iter().any(|e| e.node() == x && e.has(EventLabel::Emerged)));
        let t = trace(&b, x, Direction::Backward, Measure::Bhattacharyya, 5).unwrap();
        assert_eq!(t.nodes, [x]);
        assert!(t.edges.is_empty());
    }

    #[test]
    fn trace_errors() {
        let b = chain();
        assert_eq!(
            trace(&b, NodeRef::new(0, 9), Direction::Forward, Measure::Bhattacharyya, 1),
            Err(QueryError::UnknownNode(NodeRef::new(0, 9)))
        );
    }

    #[test]
    fn trace_is_closed() {
        let b = fixture();
        for node in b.graph(Measure::Bhattacharyya).nodes() {
            for dir in [Direction::Forward, Direction::Backward] {
                let t = trace(&b, *node, dir, Measure::KldForward, 3).unwrap();
                for e in &t.edges {
                    assert!(t.nodes.contains(&e.from) && t.nodes.contains(&e.to));
                    assert_eq!(e.to.epoch, e.from.epoch + 1);
                }
            }
        }
    }

    #[test]
    fn word_cloud_ties_are_lexicographic() {
        // vocabulary order puts d before c
        let terms = ["d", "c", "b", "a"];
        let b = bundle(&terms, &[vec![vec![0.1, 0.1, 0.3, 0.5]], vec![vec![0.25; 4]]], 0.5, 1);
        let cloud = word_cloud(&b, NodeRef::new(0, 0), 3).unwrap();
        let got: Vec<(&str, f64)> = cloud.iter().map(|w| (w.term.as_str(), w.weight)).collect();
        assert_eq!(got, [("a", 0.5), ("b", 0.3), ("c", 0.1)]);
    }

    #[test]
    fn word_cloud_full_and_bounds() {
        let b = fixture();
        let node = NodeRef::new(1, 1);
        let all = word_cloud(&b, node, TERMS.len()).unwrap();
        assert!((all.iter().map(|w| w.weight).sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(all.windows(2).all(|w| w[0].weight >= w[1].weight));
        let top = word_cloud(&b, NodeRef::new(0, 0), 1).unwrap();
        assert_eq!(top[0].term, "cell");
        assert!(top[0].weight > 0.99);
        assert!(matches!(word_cloud(&b, node, 0), Err(QueryError::InvalidCount { .. })));
        assert!(matches!(word_cloud(&b, node, 7), Err(QueryError::InvalidCount { .. })));
        assert_eq!(word_cloud(&b, NodeRef::new(4, 0), 1), Err(QueryError::UnknownNode(NodeRef::new(4, 0))));
    }

    #[test]
    fn stats_are_consistent() {
        let b = fixture();
        let s = corpus_stats(&b);
        assert_eq!(s.document_count, 6);
        assert_eq!(s.epochs.iter().map(|e| e.topic_count).collect::<Vec<_>>(), [2, 2]);
        assert_eq!(s.epoch_pairs.len(), 1);
        assert_eq!(s.epoch_pairs[0].edge_count, 4);
        for m in Measure::ALL {
            assert_eq!(s.epoch_pairs[0].surviving[&m], b.graph(m).surviving_count());
        }
        let [g, f, k] = b.graphs().clone();
        let again = classify_events(&g, &f, &k).unwrap();
        let mut counts = vec![BTreeMap::new(); 2];
        for e in &again {
            for &l in &e.labels {
                *counts[e.epoch].entry(l).or_insert(0usize) += 1;
            }
        }
        assert_eq!(s.epochs.iter().map(|e| e.event_counts.clone()).collect::<Vec<_>>(), counts);
    }
}
