//! Per-epoch HDP mixture fitting.
//!
//! Every epoch is fit independently with the same [`HdpConfig`]: the same
//! concentrations and the same symmetric Dirichlet(eta) base measure over the
//! one corpus-wide vocabulary. Each epoch's chain is seeded with
//! `seed ^ epoch_index`, so results do not depend on scheduling.

mod sampler;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EpochSlice;
use crate::preprocess::BagOfWords;
use sampler::{reassign_constrained, Counts, Sampler};

#[derive(Debug, Error)]
pub enum HdpError {
    #[error("no documents")]
    NoDocuments,
    #[error("every document is empty")]
    AllBagsEmpty,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("document {doc_id:?} references term {index} outside a vocabulary of {vocab_size}")]
    TermOutOfRange { doc_id: String, index: usize, vocab_size: usize },
    #[error("fit cancelled")]
    Cancelled,
    #[error("epoch {epoch}: {source}")]
    Epoch {
        epoch: usize,
        #[source]
        source: Box<HdpError>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HdpConfig {
    /// Corpus-level concentration.
    pub gamma: f64,
    /// Document-level concentration.
    pub alpha: f64,
    /// Symmetric Dirichlet parameter of the base measure.
    pub eta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Topics holding less than this fraction of an epoch's tokens are
    /// dissolved into the survivors after sampling.
    pub min_topic_mass: f64,
    /// Resample gamma and alpha each sweep (vague Gamma priors).
    pub resample_concentrations: bool,
}

impl Default for HdpConfig {
    fn default() -> Self {
        HdpConfig {
            gamma: 1.0,
            alpha: 1.0,
            eta: 0.01,
            iterations: 1000,
            burn_in: 500,
            seed: 0,
            min_topic_mass: 0.005,
            resample_concentrations: false,
        }
    }
}

impl HdpConfig {
    pub fn validate(&self) -> Result<(), HdpError> {
        let bad = |m: &str| Err(HdpError::InvalidConfig(m.into()));
        for (name, v) in [("gamma", self.gamma), ("alpha", self.alpha), ("eta", self.eta)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be positive, got {v}"));
            }
        }
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if self.burn_in >= self.iterations {
            return bad("burn_in must be smaller than iterations");
        }
        if !(0.0..1.0).contains(&self.min_topic_mass) {
            return bad("min_topic_mass must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    #[serde(skip)]
    pub epoch: usize,
    pub id: usize,
    pub mass: f64,
    pub token_count: u64,
    pub term_dist: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochModel {
    pub epoch: usize,
    pub topics: Vec<Topic>,
    /// Per document, per token (in [`BagOfWords::tokens`] order) topic ids.
    /// Not persisted.
    #[serde(skip)]
    pub assignments: Vec<Vec<usize>>,
    /// log p(w | z) after every sweep.
    pub log_likelihood_trace: Vec<f64>,
}

impl EpochModel {
    pub fn topic(&self, id: usize) -> Option<&Topic> {
        self.topics.iter().find(|t| t.id == id)
    }

    pub fn token_count(&self) -> u64 {
        self.topics.iter().map(|t| t.token_count).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        let mut m: EpochModel = serde_json::from_str(text)?;
        for t in &mut m.topics {
            t.epoch = m.epoch;
        }
        Ok(m)
    }
}

/// Cooperative cancellation, checked between sweeps.
#[derive(Clone, Debug, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

pub fn fit_epoch(bags: &[BagOfWords], vocab_size: usize, config: &HdpConfig) -> Result<EpochModel, HdpError> {
    fit_epoch_seeded(0, bags, vocab_size, config, config.seed, &CancelToken::new())
}

fn expand_tokens(bags: &[BagOfWords], vocab_size: usize) -> Result<Vec<Vec<usize>>, HdpError> {
    bags.iter()
        .map(|b| {
            if let Some((&index, _)) = b.counts.range(vocab_size..).next() {
                return Err(HdpError::TermOutOfRange { doc_id: b.doc_id.clone(), index, vocab_size });
            }
            Ok(b.tokens().collect())
        })
        .collect()
}

/// Fits one epoch with an explicit chain seed.
///
/// Topics are read off the post-burn-in sample with the highest joint
/// density. Topics below `min_topic_mass` are dissolved by a constrained
/// reassignment sweep, and the remainder are renumbered by descending mass.
pub fn fit_epoch_seeded(
    epoch: usize,
    bags: &[BagOfWords],
    vocab_size: usize,
    config: &HdpConfig,
    seed: u64,
    cancel: &CancelToken,
) -> Result<EpochModel, HdpError> {
    config.validate()?;
    if bags.is_empty() {
        return Err(HdpError::NoDocuments);
    }
    if bags.iter().all(BagOfWords::is_empty) {
        return Err(HdpError::AllBagsEmpty);
    }
    if vocab_size < 2 {
        return Err(HdpError::InvalidConfig(format!("vocabulary size {vocab_size} < 2")));
    }
    let docs = expand_tokens(bags, vocab_size)?;

    let rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Sampler::new(&docs, vocab_size, config.alpha, config.gamma, config.eta, rng);
    s.initialize();

    let mut trace = Vec::with_capacity(config.iterations);
    let mut best: Option<(f64, sampler::Snapshot)> = None;
    for it in 0..config.iterations {
        if cancel.is_cancelled() {
            return Err(HdpError::Cancelled);
        }
        s.sweep();
        let tables = s.resample_beta();
        if config.resample_concentrations {
            s.resample_concentrations(&tables);
        }
        trace.push(s.word_log_likelihood());
        if it >= config.burn_in {
            let joint = s.joint_log_probability();
            if best.as_ref().is_none_or(|(b, _)| joint > *b) {
                best = Some((joint, s.snapshot()));
            }
        }
    }
    let (_, snap) = best.expect("at least one post-burn-in sweep");
    let mut rng = s.into_rng();
    Ok(extract(epoch, &docs, snap, vocab_size, config, trace, &mut rng))
}

fn extract(
    epoch: usize,
    docs: &[Vec<usize>],
    snap: sampler::Snapshot,
    vocab_size: usize,
    config: &HdpConfig,
    trace: Vec<f64>,
    rng: &mut ChaCha8Rng,
) -> EpochModel {
    let sampler::Snapshot { mut z, beta, active, alpha } = snap;
    let slots = beta.len();
    let mut counts = Counts::from_assignments(docs, &z, slots, vocab_size);
    let total: u64 = counts.n_k.iter().map(|&n| n as u64).sum();

    let mut keep: Vec<usize> = active
        .iter()
        .copied()
        .filter(|&k| counts.n_k[k] as f64 / total as f64 >= config.min_topic_mass)
        .collect();
    if keep.is_empty() {
        let largest = active.iter().copied().max_by_key(|&k| (counts.n_k[k], std::cmp::Reverse(k))).expect("active topic");
        keep.push(largest);
    }
    if keep.len() < active.len() {
        reassign_constrained(docs, &mut z, &mut counts, &keep, &beta, alpha, config.eta, rng);
    }

    // stable: equal masses keep creation order
    keep.sort_by_key(|&k| std::cmp::Reverse(counts.n_k[k]));
    let mut relabel = vec![usize::MAX; slots];
    for (id, &k) in keep.iter().enumerate() {
        relabel[k] = id;
    }
    let v_eta = vocab_size as f64 * config.eta;
    let topics = keep
        .iter()
        .enumerate()
        .map(|(id, &k)| {
            let n = counts.n_k[k];
            let denom = n as f64 + v_eta;
            Topic {
                epoch,
                id,
                mass: n as f64 / total as f64,
                token_count: n as u64,
                term_dist: counts.n_kw[k].iter().map(|&c| (c as f64 + config.eta) / denom).collect(),
            }
        })
        .collect();
    let assignments = z.into_iter().map(|zd| zd.into_iter().map(|k| relabel[k]).collect()).collect();
    EpochModel { epoch, topics, assignments, log_likelihood_trace: trace }
}

/// Fits every epoch with the shared configuration, using up to `jobs`
/// threads (0 means one per core).
pub fn fit_corpus(
    epoch_bags: &[(EpochSlice, Vec<BagOfWords>)],
    vocab_size: usize,
    config: &HdpConfig,
    jobs: usize,
    cancel: &CancelToken,
) -> Result<Vec<EpochModel>, HdpError> {
    for (i, (slice, _)) in epoch_bags.iter().enumerate() {
        if slice.index != i {
            return Err(HdpError::InvalidConfig(format!("epoch slices must be numbered consecutively from 0; found {} at position {i}", slice.index)));
        }
    }
    let fit_one = |(slice, bags): &(EpochSlice, Vec<BagOfWords>)| {
        let seed = config.seed ^ slice.index as u64;
        fit_epoch_seeded(slice.index, bags, vocab_size, config, seed, cancel)
            .map_err(|e| HdpError::Epoch { epoch: slice.index, source: Box::new(e) })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HdpError::InvalidConfig(e.to_string()))?;
    pool.install(|| epoch_bags.par_iter().map(fit_one).collect())
}

/// Collapsed log p(w | z) of the bags under the model's assignments.
pub fn log_likelihood(bags: &[BagOfWords], model: &EpochModel, eta: f64) -> f64 {
    let vocab_size = model.topics.first().map_or(0, |t| t.term_dist.len());
    let k = model.topics.len();
    let mut n_kw = vec![vec![0u32; vocab_size]; k];
    let mut n_k = vec![0u32; k];
    for (bag, zd) in bags.iter().zip(&model.assignments) {
        for (w, &t) in bag.tokens().zip(zd) {
            n_kw[t][w] += 1;
            n_k[t] += 1;
        }
    }
    sampler::word_log_likelihood(n_k.iter().copied().zip(n_kw.iter().map(Vec::as_slice)), vocab_size, eta)
}
