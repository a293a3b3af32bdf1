//! The analysis bundle: everything a finished run produced, as one unit.
//!
//! On disk a bundle is a directory:
//!
//! ```text
//! manifest.json          {format_version, content_hash, config}
//! vocabulary.json
//! epochs.json
//! models/epoch-<t>.json
//! graphs/<measure>.json
//! events.json
//! lexicon.tsv
//! stopwords.txt
//! ```
//!
//! The content hash is a SHA-256 over every other file plus the config, in
//! the order above. The revision hash only covers which edges survive and
//! the resulting event labels, so it moves exactly when re-pruning changes
//! the analysis.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::AnalysisConfig;
use crate::corpus::EpochSlice;
use crate::events::{classify_events, events_from_json, events_to_json, EventError, EventLabel, TopicEventSet};
use crate::hdp::{EpochModel, Topic};
use crate::preprocess::{LemmaLexicon, StopWords, TextPipeline, Vocabulary};
use crate::relatedness::{GraphError, Measure, NodeRef, TemporalGraph};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("unsupported bundle format version {0}")]
    UnsupportedVersion(u32),
    #[error("content hash mismatch: manifest says {expected}, files hash to {actual}")]
    HashMismatch { expected: String, actual: String },
    #[error("inconsistent bundle: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Events(#[from] EventError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub content_hash: String,
    pub config: AnalysisConfig,
}

#[derive(Clone, Debug)]
pub struct AnalysisBundle {
    pub config: AnalysisConfig,
    pub vocabulary: Arc<Vocabulary>,
    pub text: Arc<TextPipeline>,
    pub epochs: Arc<Vec<EpochSlice>>,
    pub models: Arc<Vec<EpochModel>>,
    graphs: [TemporalGraph; 3],
    events: Vec<TopicEventSet>,
    content_hash: String,
}

fn graph_slot(m: Measure) -> usize {
    Measure::ALL.iter().position(|&x| x == m).expect("listed measure")
}

fn model_file(epoch: usize) -> String {
    format!("models/epoch-{epoch}.json")
}

fn graph_file(m: Measure) -> String {
    format!("graphs/{}.json", m.as_str())
}

impl AnalysisBundle {
    /// Prunes the graphs at the configured operating points, classifies
    /// events and seals the result.
    pub fn assemble(
        config: AnalysisConfig,
        vocabulary: Vocabulary,
        text: TextPipeline,
        epochs: Vec<EpochSlice>,
        models: Vec<EpochModel>,
        graphs: [TemporalGraph; 3],
    ) -> Result<Self, BundleError> {
        for (g, m) in graphs.iter().zip(Measure::ALL) {
            if g.measure() != m {
                return Err(BundleError::Inconsistent(format!("graph slot for {m} holds {}", g.measure())));
            }
        }
        let graphs = [0, 1, 2].map(|i| graphs[i].prune(config.zeta.get(Measure::ALL[i])));
        let [a, b, c] = graphs;
        let graphs = [a?, b?, c?];
        let events = classify_events(&graphs[0], &graphs[1], &graphs[2])?;
        let mut bundle = AnalysisBundle {
            config,
            vocabulary: Arc::new(vocabulary),
            text: Arc::new(text),
            epochs: Arc::new(epochs),
            models: Arc::new(models),
            graphs,
            events,
            content_hash: String::new(),
        };
        bundle.check_consistency()?;
        bundle.content_hash = bundle.compute_content_hash();
        Ok(bundle)
    }

    pub fn graph(&self, m: Measure) -> &TemporalGraph {
        &self.graphs[graph_slot(m)]
    }

    pub fn graphs(&self) -> &[TemporalGraph; 3] {
        &self.graphs
    }

    pub fn events(&self) -> &[TopicEventSet] {
        &self.events
    }

    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }

    pub fn model(&self, epoch: usize) -> Option<&EpochModel> {
        self.models.get(epoch)
    }

    pub fn topic(&self, node: NodeRef) -> Option<&Topic> {
        self.model(node.epoch)?.topic(node.id)
    }

    /// A copy with one graph re-pruned and the events re-derived. The heavy
    /// immutable parts are shared with `self`.
    pub fn reprune(&self, measure: Measure, zeta: f64) -> Result<Self, BundleError> {
        let mut next = self.clone();
        next.graphs[graph_slot(measure)] = self.graph(measure).prune(zeta)?;
        next.config.zeta.set(measure, zeta);
        next.events = classify_events(&next.graphs[0], &next.graphs[1], &next.graphs[2])?;
        next.content_hash = next.compute_content_hash();
        Ok(next)
    }

    /// Hash of the surviving-edge flags of all graphs and the event sets.
    pub fn revision_hash(&self) -> String {
        let mut h = Sha256::new();
        for g in &self.graphs {
            h.update(g.measure().as_str().as_bytes());
            h.update([0]);
            let flags: Vec<u8> = g.edges().iter().map(|e| e.surviving as u8).collect();
            h.update((flags.len() as u64).to_le_bytes());
            h.update(&flags);
        }
        h.update(events_to_json(&self.events).as_bytes());
        hex::encode(h.finalize())
    }

    pub fn manifest(&self) -> Manifest {
        Manifest { format_version: FORMAT_VERSION, content_hash: self.content_hash.clone(), config: self.config.clone() }
    }

    pub fn epochs_json(&self) -> String {
        serde_json::to_string_pretty(&*self.epochs).expect("epochs serialize")
    }

    /// Every file except the manifest, in hashing order.
    pub fn files(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("vocabulary.json".to_owned(), self.vocabulary.to_json()),
            ("epochs.json".to_owned(), self.epochs_json()),
        ];
        out.extend(self.models.iter().map(|m| (model_file(m.epoch), m.to_json())));
        out.extend(self.graphs.iter().map(|g| (graph_file(g.measure()), g.to_json())));
        out.push(("events.json".to_owned(), events_to_json(&self.events)));
        out.push(("lexicon.tsv".to_owned(), self.text.lexicon.to_tsv()));
        out.push(("stopwords.txt".to_owned(), self.text.stopwords.to_text()));
        out
    }

    fn compute_content_hash(&self) -> String {
        let config = serde_json::to_string(&self.config).expect("config serializes");
        hash_files(self.files().iter().map(|(n, c)| (n.as_str(), c.as_str())).chain([("config", config.as_str())]))
    }

    fn check_consistency(&self) -> Result<(), BundleError> {
        if self.models.len() != self.epochs.len() {
            return Err(BundleError::Inconsistent(format!("{} models for {} epochs", self.models.len(), self.epochs.len())));
        }
        let mut nodes = Vec::new();
        for (i, m) in self.models.iter().enumerate() {
            if m.epoch != i || self.epochs[i].index != i {
                return Err(BundleError::Inconsistent(format!("epoch numbering broken at position {i}")));
            }
            for t in &m.topics {
                if t.term_dist.len() != self.vocabulary.len() {
                    return Err(BundleError::Inconsistent(format!(
                        "topic {}:{} has {} terms, vocabulary has {}",
                        i,
                        t.id,
                        t.term_dist.len(),
                        self.vocabulary.len()
                    )));
                }
                nodes.push(NodeRef::new(i, t.id));
            }
        }
        nodes.sort();
        for g in &self.graphs {
            if g.nodes() != nodes.as_slice() {
                return Err(BundleError::Inconsistent(format!("{} graph nodes do not match the epoch models", g.measure())));
            }
        }
        let event_nodes: Vec<NodeRef> = self.events.iter().map(TopicEventSet::node).collect();
        if event_nodes != nodes {
            return Err(BundleError::Inconsistent("event sets do not cover the topic nodes".into()));
        }
        Ok(())
    }

    /// Writes the bundle into `dir`, replacing any previous bundle there.
    /// The files land in a sibling temporary directory first and are moved
    /// into place with a rename, so a failed write leaves no partial bundle.
    pub fn write(&self, dir: &Path) -> Result<(), BundleError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| BundleError::Io { path, source }
        };
        let name = dir.file_name().ok_or_else(|| BundleError::Format { path: dir.into(), message: "not a directory name".into() })?;
        let parent = match dir.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(io(&parent))?;
        let tag = format!("{}-{}", std::process::id(), unique_suffix());
        let tmp = parent.join(format!(".{}.tmp-{tag}", name.to_string_lossy()));

        let result = (|| {
            fs::create_dir_all(tmp.join("models")).map_err(io(&tmp))?;
            fs::create_dir_all(tmp.join("graphs")).map_err(io(&tmp))?;
            for (file, content) in self.files() {
                let p = tmp.join(&file);
                fs::write(&p, content).map_err(io(&p))?;
            }
            let manifest = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
            let p = tmp.join(MANIFEST);
            fs::write(&p, manifest).map_err(io(&p))?;
            if dir.exists() {
                let old = parent.join(format!(".{}.old-{tag}", name.to_string_lossy()));
                fs::rename(dir, &old).map_err(io(dir))?;
                fs::rename(&tmp, dir).map_err(io(dir))?;
                let _ = fs::remove_dir_all(&old);
            } else {
                fs::rename(&tmp, dir).map_err(io(dir))?;
            }
            Ok(())
        })();
        if result.is_err() {
            let _ = fs::remove_dir_all(&tmp);
        }
        result
    }

    /// Reads a bundle directory, checking its content hash and
    /// cross-references.
    pub fn load(dir: &Path) -> Result<Self, BundleError> {
        let read = |file: &str| {
            let p = dir.join(file);
            fs::read_to_string(&p).map_err(|source| BundleError::Io { path: p, source })
        };
        let bad = |file: &str, message: String| BundleError::Format { path: dir.join(file), message };

        let manifest: Manifest = serde_json::from_str(&read(MANIFEST)?).map_err(|e| bad(MANIFEST, e.to_string()))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(BundleError::UnsupportedVersion(manifest.format_version));
        }
        let epochs_text = read("epochs.json")?;
        let epochs: Vec<EpochSlice> = serde_json::from_str(&epochs_text).map_err(|e| bad("epochs.json", e.to_string()))?;
        let mut raw: Vec<(String, String)> = vec![("vocabulary.json".into(), read("vocabulary.json")?), ("epochs.json".into(), epochs_text)];
        for e in &epochs {
            let file = model_file(e.index);
            let text = read(&file)?;
            raw.push((file, text));
        }
        for m in Measure::ALL {
            let file = graph_file(m);
            let text = read(&file)?;
            raw.push((file, text));
        }
        for file in ["events.json", "lexicon.tsv", "stopwords.txt"] {
            raw.push((file.into(), read(file)?));
        }
        let config = serde_json::to_string(&manifest.config).expect("config serializes");
        let actual = hash_files(raw.iter().map(|(n, c)| (n.as_str(), c.as_str())).chain([("config", config.as_str())]));
        if actual != manifest.content_hash {
            return Err(BundleError::HashMismatch { expected: manifest.content_hash, actual });
        }

        let text_of = |file: &str| raw.iter().find(|(n, _)| n == file).map(|(_, c)| c.as_str()).expect("read above");
        let vocabulary = Vocabulary::from_json(text_of("vocabulary.json")).map_err(|e| bad("vocabulary.json", e.to_string()))?;
        let mut models = Vec::with_capacity(epochs.len());
        for e in &epochs {
            let file = model_file(e.index);
            models.push(EpochModel::from_json(text_of(&file)).map_err(|err| bad(&file, err.to_string()))?);
        }
        let mut graphs = Vec::with_capacity(3);
        for m in Measure::ALL {
            let file = graph_file(m);
            graphs.push(TemporalGraph::from_json(text_of(&file)).map_err(|err| bad(&file, err.to_string()))?);
        }
        let events = events_from_json(text_of("events.json")).map_err(|e| bad("events.json", e.to_string()))?;
        let lexicon = LemmaLexicon::parse_tsv(text_of("lexicon.tsv"), "lexicon.tsv").map_err(|e| bad("lexicon.tsv", e.to_string()))?;
        let stopwords = StopWords::parse(text_of("stopwords.txt"));

        let graphs: [TemporalGraph; 3] = graphs.try_into().expect("three measures");
        let bundle = AnalysisBundle {
            config: manifest.config,
            vocabulary: Arc::new(vocabulary),
            text: Arc::new(TextPipeline::new(lexicon, stopwords)),
            epochs: Arc::new(epochs),
            models: Arc::new(models),
            graphs,
            events,
            content_hash: manifest.content_hash,
        };
        bundle.check_consistency()?;
        for g in &bundle.graphs {
            if !g.is_pruned() {
                return Err(BundleError::Inconsistent(format!("{} graph is not pruned", g.measure())));
            }
        }
        Ok(bundle)
    }

    /// Nodes carrying each label, by epoch.
    pub fn label_counts(&self) -> Vec<BTreeMap<EventLabel, usize>> {
        let mut out = vec![BTreeMap::new(); self.epochs.len()];
        for e in &self.events {
            for &l in &e.labels {
                *out[e.epoch].entry(l).or_insert(0) += 1;
            }
        }
        out
    }
}

fn unique_suffix() -> u128 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_nanos())
}

/// SHA-256 over named parts, each framed by its name and length.
pub fn hash_files<'a>(parts: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    let mut h = Sha256::new();
    for (name, content) in parts {
        h.update(name.as_bytes());
        h.update([0]);
        h.update((content.len() as u64).to_le_bytes());
        h.update(content.as_bytes());
    }
    hex::encode(h.finalize())
}
