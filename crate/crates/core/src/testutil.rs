//! Hand-built bundles for unit tests.

use chrono::NaiveDate;

use crate::bundle::AnalysisBundle;
use crate::config::AnalysisConfig;
use crate::corpus::EpochSlice;
use crate::hdp::{EpochModel, Topic};
use crate::preprocess::{LemmaLexicon, StopWords, TermCount, TextPipeline, Vocabulary};
use crate::relatedness::{build_graph, Measure};

/// Adds a little mass everywhere and renormalizes.
pub fn smooth(raw: &[f64]) -> Vec<f64> {
    let eps = 1e-3;
    let s: f64 = raw.iter().map(|x| x + eps).sum();
    raw.iter().map(|x| (x + eps) / s).collect()
}

pub fn model(epoch: usize, dists: &[Vec<f64>]) -> EpochModel {
    EpochModel {
        epoch,
        topics: dists
            .iter()
            .enumerate()
            .map(|(id, d)| Topic { epoch, id, mass: 1.0 / dists.len() as f64, token_count: 10, term_dist: d.clone() })
            .collect(),
        assignments: Vec::new(),
        log_likelihood_trace: vec![-1.0, -0.5],
    }
}

/// Bundle over `terms` with one epoch per entry of `epochs`, each epoch
/// holding the given topic distributions and `docs_per_epoch` documents.
pub fn bundle(terms: &[&str], epochs: &[Vec<Vec<f64>>], zeta: f64, docs_per_epoch: usize) -> AnalysisBundle {
    let vocab = Vocabulary::from_terms(
        terms.iter().map(|t| TermCount { term: t.to_string(), count: 1 }).collect(),
        1.0,
    )
    .unwrap();
    let lexicon = LemmaLexicon::from_pairs([("cells", "cell")]).unwrap();
    let text = TextPipeline::new(lexicon, StopWords::default_list());
    let slices = (0..epochs.len())
        .map(|i| EpochSlice {
            index: i,
            start: NaiveDate::from_ymd_opt(2000 + i as i32, 1, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2001 + i as i32, 1, 1).unwrap(),
            document_ids: (0..docs_per_epoch).map(|d| format!("e{i}d{d}")).collect(),
        })
        .collect();
    let models: Vec<EpochModel> = epochs.iter().enumerate().map(|(i, d)| model(i, d)).collect();
    let graphs = Measure::ALL.map(|m| build_graph(&models, m).unwrap());
    let mut config = AnalysisConfig::default();
    for m in Measure::ALL {
        config.zeta.set(m, zeta);
    }
    AnalysisBundle::assemble(config, vocab, text, slices, models, graphs).unwrap()
}
