//! Topic dynamics read off the pruned temporal graphs.
//!
//! The similarity (Bhattacharyya) graph decides emergence, vanishing,
//! evolution, speciation and convergence. Splitting and merging are
//! envelopment questions and use the divergence graphs: a parent whose
//! forward-KL graph keeps two or more outgoing edges has split, a child
//! whose backward-KL graph keeps two or more incoming edges is a merger.
//! Labels are sets; one topic may speciate and split at once.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::relatedness::{Measure, NodeRef, TemporalGraph};

#[derive(Debug, Error, PartialEq)]
pub enum EventError {
    #[error("graphs are not over the same node set")]
    NodeSetMismatch,
    #[error("{0} graph has not been pruned")]
    UnprunedInput(Measure),
    #[error("expected a {expected} graph, got {got}")]
    WrongMeasure { expected: Measure, got: Measure },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventLabel {
    Emerged,
    Vanished,
    Evolved,
    Speciated,
    Converged,
    Split,
    Merged,
}

impl EventLabel {
    pub const ALL: [EventLabel; 7] = [
        EventLabel::Emerged,
        EventLabel::Vanished,
        EventLabel::Evolved,
        EventLabel::Speciated,
        EventLabel::Converged,
        EventLabel::Split,
        EventLabel::Merged,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventLabel::Emerged => "emerged",
            EventLabel::Vanished => "vanished",
            EventLabel::Evolved => "evolved",
            EventLabel::Speciated => "speciated",
            EventLabel::Converged => "converged",
            EventLabel::Split => "split",
            EventLabel::Merged => "merged",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeRef {
    pub from: NodeRef,
    pub to: NodeRef,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicEventSet {
    pub epoch: usize,
    pub topic_id: usize,
    pub labels: BTreeSet<EventLabel>,
    /// Edges that triggered each label; empty for absence-based labels.
    pub evidence: BTreeMap<EventLabel, Vec<EdgeRef>>,
}

impl TopicEventSet {
    pub fn node(&self) -> NodeRef {
        NodeRef::new(self.epoch, self.topic_id)
    }

    pub fn has(&self, label: EventLabel) -> bool {
        self.labels.contains(&label)
    }

    fn mark(&mut self, label: EventLabel, edges: impl IntoIterator<Item = EdgeRef>) {
        self.labels.insert(label);
        self.evidence.entry(label).or_default().extend(edges);
    }
}

/// Surviving adjacency of one graph.
struct Adjacency {
    out: HashMap<NodeRef, Vec<EdgeRef>>,
    inc: HashMap<NodeRef, Vec<EdgeRef>>,
}

impl Adjacency {
    fn of(graph: &TemporalGraph) -> Self {
        let mut out: HashMap<NodeRef, Vec<EdgeRef>> = HashMap::new();
        let mut inc: HashMap<NodeRef, Vec<EdgeRef>> = HashMap::new();
        for e in graph.surviving_edges() {
            let r = EdgeRef { from: e.from, to: e.to };
            out.entry(e.from).or_default().push(r);
            inc.entry(e.to).or_default().push(r);
        }
        Adjacency { out, inc }
    }

    fn outgoing(&self, n: NodeRef) -> &[EdgeRef] {
        self.out.get(&n).map_or(&[], Vec::as_slice)
    }

    fn incoming(&self, n: NodeRef) -> &[EdgeRef] {
        self.inc.get(&n).map_or(&[], Vec::as_slice)
    }
}

fn expect(graph: &TemporalGraph, measure: Measure) -> Result<(), EventError> {
    if graph.measure() != measure {
        return Err(EventError::WrongMeasure { expected: measure, got: graph.measure() });
    }
    if !graph.is_pruned() {
        return Err(EventError::UnprunedInput(measure));
    }
    Ok(())
}

/// Labels every node of the three pruned graphs. Output is ordered by node.
pub fn classify_events(
    bhd: &TemporalGraph,
    kld_fwd: &TemporalGraph,
    kld_bwd: &TemporalGraph,
) -> Result<Vec<TopicEventSet>, EventError> {
    expect(bhd, Measure::Bhattacharyya)?;
    expect(kld_fwd, Measure::KldForward)?;
    expect(kld_bwd, Measure::KldBackward)?;
    if bhd.nodes() != kld_fwd.nodes() || bhd.nodes() != kld_bwd.nodes() {
        return Err(EventError::NodeSetMismatch);
    }

    let sim = Adjacency::of(bhd);
    let fwd = Adjacency::of(kld_fwd);
    let bwd = Adjacency::of(kld_bwd);
    let first = bhd.nodes().iter().map(|n| n.epoch).min().unwrap_or(0);
    let last = bhd.nodes().iter().map(|n| n.epoch).max().unwrap_or(0);

    let mut sets: BTreeMap<NodeRef, TopicEventSet> = bhd
        .nodes()
        .iter()
        .map(|&n| {
            let set = TopicEventSet { epoch: n.epoch, topic_id: n.id, labels: BTreeSet::new(), evidence: BTreeMap::new() };
            (n, set)
        })
        .collect();

    for &node in bhd.nodes() {
        let out = sim.outgoing(node);
        let inc = sim.incoming(node);
        let set = sets.get_mut(&node).expect("node present");
        if node.epoch > first && inc.is_empty() {
            set.mark(EventLabel::Emerged, []);
        }
        if node.epoch < last && out.is_empty() {
            set.mark(EventLabel::Vanished, []);
        }
        if out.len() >= 2 {
            set.mark(EventLabel::Speciated, out.iter().copied());
        }
        if inc.len() >= 2 {
            set.mark(EventLabel::Converged, inc.iter().copied());
        }
        let split = fwd.outgoing(node);
        if split.len() >= 2 {
            set.mark(EventLabel::Split, split.iter().copied());
        }
        let merged = bwd.incoming(node);
        if merged.len() >= 2 {
            set.mark(EventLabel::Merged, merged.iter().copied());
        }
        if let [only] = out {
            if sim.incoming(only.to).len() == 1 {
                set.mark(EventLabel::Evolved, [*only]);
                sets.get_mut(&only.to).expect("edge endpoint is a node").mark(EventLabel::Evolved, [*only]);
            }
        }
    }
    Ok(sets.into_values().collect())
}

pub fn events_to_json(events: &[TopicEventSet]) -> String {
    serde_json::to_string(events).expect("events serialize")
}

pub fn events_from_json(text: &str) -> serde_json::Result<Vec<TopicEventSet>> {
    serde_json::from_str(text)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub from_epoch: usize,
    pub to_epoch: usize,
    pub bhd_edge_count: usize,
    pub kld_edge_count: usize,
    pub shared_count: usize,
    /// shared / BHD edges; 0 when there are no BHD edges.
    pub bhd_normalized: f64,
    /// shared / KLD edges; 0 when there are no KLD edges.
    pub kld_normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub rows: Vec<OverlapRow>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per adjacent-epoch pair, how many surviving connections the similarity
/// graph and a divergence graph have in common.
pub fn overlap_statistics(bhd: &TemporalGraph, kld: &TemporalGraph) -> Result<OverlapReport, EventError> {
    if bhd.nodes() != kld.nodes() {
        return Err(EventError::NodeSetMismatch);
    }
    let epochs: BTreeSet<usize> = bhd.nodes().iter().map(|n| n.epoch).collect();
    let epochs: Vec<usize> = epochs.into_iter().collect();
    let edge_set = |g: &TemporalGraph| -> HashSet<(NodeRef, NodeRef)> { g.surviving_edges().map(|e| (e.from, e.to)).collect() };
    let a = edge_set(bhd);
    let b = edge_set(kld);
    let rows = epochs
        .windows(2)
        .map(|w| {
            let in_pair = |e: &&(NodeRef, NodeRef)| e.0.epoch == w[0] && e.1.epoch == w[1];
            let bhd_edge_count = a.iter().filter(in_pair).count();
            let kld_edge_count = b.iter().filter(in_pair).count();
            let shared_count = a.iter().filter(in_pair).filter(|e| b.contains(e)).count();
            OverlapRow {
                from_epoch: w[0],
                to_epoch: w[1],
                bhd_edge_count,
                kld_edge_count,
                shared_count,
                bhd_normalized: ratio(shared_count, bhd_edge_count),
                kld_normalized: ratio(shared_count, kld_edge_count),
            }
        })
        .collect();
    Ok(OverlapReport { rows })
}

impl OverlapReport {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch_pair", "bhd_edges", "kld_edges", "shared", "bhd_norm", "kld_norm"])?;
        for r in &self.rows {
            w.write_record([
                format!("{}-{}", r.from_epoch, r.to_epoch),
                r.bhd_edge_count.to_string(),
                r.kld_edge_count.to_string(),
                r.shared_count.to_string(),
                r.bhd_normalized.to_string(),
                r.kld_normalized.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
