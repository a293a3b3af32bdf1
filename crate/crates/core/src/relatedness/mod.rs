//! Inter-topic relatedness and the layered temporal graphs built from it.
//!
//! Each graph links every topic of epoch `t` to every topic of epoch `t + 1`.
//! Edge weights are put on a common "higher is more related" scale: the
//! Bhattacharyya coefficient itself, or `exp(-KL)` for the two divergence
//! directions. Pruning keeps the edges whose relatedness reaches the
//! empirical quantile at the operating point `zeta`; the full edge set is
//! always retained so a graph can be re-pruned at any other `zeta`.

mod cdf;
mod measures;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cdf::{CdfError, EmpiricalCdf};
pub use measures::{
    bhattacharyya_coefficient, bhattacharyya_distance, kl_divergence, MeasureError, TermDistribution, KLD_EPSILON,
};

use crate::hdp::EpochModel;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("need at least two epochs, got {0}")]
    TooFewEpochs(usize),
    #[error("operating point {0} outside [0, 1]")]
    InvalidZeta(f64),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("graph file: {0}")]
    Format(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Bhattacharyya,
    KldForward,
    KldBackward,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Bhattacharyya, Measure::KldForward, Measure::KldBackward];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Bhattacharyya => "bhattacharyya",
            Measure::KldForward => "kld_forward",
            Measure::KldBackward => "kld_backward",
        }
    }

    /// Raw edge weight from the earlier topic `parent` to the later `child`.
    ///
    /// Forward KL asks how well the parent envelops the child,
    /// KL(child || parent); backward KL asks the converse.
    pub fn raw_weight(self, parent: &[f64], child: &[f64]) -> Result<f64, MeasureError> {
        match self {
            Measure::Bhattacharyya => bhattacharyya_coefficient(parent, child),
            Measure::KldForward => kl_divergence(child, parent),
            Measure::KldBackward => kl_divergence(parent, child),
        }
    }

    pub fn relatedness(self, raw_weight: f64) -> f64 {
        match self {
            Measure::Bhattacharyya => raw_weight,
            Measure::KldForward | Measure::KldBackward => (-raw_weight).exp(),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bhattacharyya" | "bhd" => Ok(Measure::Bhattacharyya),
            "kld_forward" => Ok(Measure::KldForward),
            "kld_backward" => Ok(Measure::KldBackward),
            other => Err(format!("unknown measure {other:?} (expected bhattacharyya, kld_forward or kld_backward)")),
        }
    }
}

/// A topic, addressed by epoch and within-epoch id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeRef {
    pub epoch: usize,
    pub id: usize,
}

impl NodeRef {
    pub fn new(epoch: usize, id: usize) -> Self {
        NodeRef { epoch, id }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.epoch, self.id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: NodeRef,
    pub to: NodeRef,
    pub raw_weight: f64,
    pub relatedness: f64,
    pub surviving: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalGraph {
    measure: Measure,
    nodes: Vec<NodeRef>,
    edges: Vec<Edge>,
    cdf: EmpiricalCdf,
    zeta: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    measure: Measure,
    zeta: Option<f64>,
    nodes: Vec<NodeRef>,
    edges: Vec<Edge>,
}

/// Builds the complete layered graph between adjacent epochs. Nothing is
/// pruned yet: every edge is marked surviving.
pub fn build_graph(models: &[EpochModel], measure: Measure) -> Result<TemporalGraph, GraphError> {
    if models.len() < 2 {
        return Err(GraphError::TooFewEpochs(models.len()));
    }
    let nodes: Vec<NodeRef> = models
        .iter()
        .flat_map(|m| m.topics.iter().map(move |t| NodeRef::new(m.epoch, t.id)))
        .collect();
    let layers: Vec<Vec<Edge>> = models
        .par_windows(2)
        .map(|pair| {
            let (a, b) = (&pair[0], &pair[1]);
            let mut out = Vec::with_capacity(a.topics.len() * b.topics.len());
            for parent in &a.topics {
                for child in &b.topics {
                    let raw_weight = measure.raw_weight(&parent.term_dist, &child.term_dist)?;
                    out.push(Edge {
                        from: NodeRef::new(a.epoch, parent.id),
                        to: NodeRef::new(b.epoch, child.id),
                        raw_weight,
                        relatedness: measure.relatedness(raw_weight),
                        surviving: true,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_, MeasureError>>()?;
    let edges: Vec<Edge> = layers.into_iter().flatten().collect();
    TemporalGraph::assemble(measure, nodes, edges, None)
}

impl TemporalGraph {
    fn assemble(measure: Measure, nodes: Vec<NodeRef>, edges: Vec<Edge>, zeta: Option<f64>) -> Result<Self, GraphError> {
        let rel: Vec<f64> = edges.iter().map(|e| e.relatedness).collect();
        let cdf = EmpiricalCdf::new(&rel).map_err(|e| GraphError::Format(e.to_string()))?;
        Ok(TemporalGraph { measure, nodes, edges, cdf, zeta })
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn nodes(&self) -> &[NodeRef] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn cdf(&self) -> &EmpiricalCdf {
        &self.cdf
    }

    pub fn zeta(&self) -> Option<f64> {
        self.zeta
    }

    pub fn is_pruned(&self) -> bool {
        self.zeta.is_some()
    }

    pub fn surviving_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.surviving)
    }

    pub fn surviving_count(&self) -> usize {
        self.surviving_edges().count()
    }

    pub fn has_node(&self, node: NodeRef) -> bool {
        self.nodes.binary_search(&node).is_ok()
    }

    /// Marks an edge surviving iff its relatedness reaches F^-1(zeta). The
    /// receiver is left untouched.
    pub fn prune(&self, zeta: f64) -> Result<TemporalGraph, GraphError> {
        if !(0.0..=1.0).contains(&zeta) {
            return Err(GraphError::InvalidZeta(zeta));
        }
        let threshold = self.cdf.quantile(zeta);
        let mut g = self.clone();
        for e in &mut g.edges {
            e.surviving = e.relatedness >= threshold;
        }
        g.zeta = Some(zeta);
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            measure: self.measure,
            zeta: self.zeta,
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
        };
        serde_json::to_string(&file).expect("graph serializes")
    }

    /// JSON export restricted to surviving edges.
    pub fn to_json_surviving(&self) -> String {
        let file = GraphFile {
            measure: self.measure,
            zeta: self.zeta,
            nodes: self.nodes.clone(),
            edges: self.surviving_edges().cloned().collect(),
        };
        serde_json::to_string(&file).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let mut file: GraphFile = serde_json::from_str(text).map_err(|e| GraphError::Format(e.to_string()))?;
        file.nodes.sort();
        Self::assemble(file.measure, file.nodes, file.edges, file.zeta)
    }
}

/// One row per adjacent-epoch topic pair: (BC, forward KL, backward KL),
/// taken from the unpruned raw weights.
pub fn scatter_rows(bhd: &TemporalGraph, kld_fwd: &TemporalGraph, kld_bwd: &TemporalGraph) -> Result<Vec<[f64; 3]>, GraphError> {
    let aligned = bhd.edges.len() == kld_fwd.edges.len()
        && bhd.edges.len() == kld_bwd.edges.len()
        && bhd.edges.iter().zip(&kld_fwd.edges).zip(&kld_bwd.edges).all(|((a, b), c)| {
            (a.from, a.to) == (b.from, b.to) && (a.from, a.to) == (c.from, c.to)
        });
    if !aligned {
        return Err(GraphError::Format("graphs are not over the same edge set".into()));
    }
    Ok(bhd
        .edges
        .iter()
        .zip(&kld_fwd.edges)
        .zip(&kld_bwd.edges)
        .map(|((a, b), c)| [a.raw_weight, b.raw_weight, c.raw_weight])
        .collect())
}

pub fn write_scatter_csv<W: Write>(rows: &[[f64; 3]], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bc", "kld_forward", "kld_backward"])?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
