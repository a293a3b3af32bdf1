//! End-to-end run: corpus file in, sealed analysis bundle out.

use std::collections::HashMap;

use thiserror::Error;

use crate::bundle::{AnalysisBundle, BundleError};
use crate::config::{AnalysisConfig, ConfigError, RunConfig};
use crate::corpus::{load_corpus, partition_epochs, CorpusError, RawDocument};
use crate::hdp::{fit_corpus, CancelToken, HdpError};
use crate::preprocess::{LemmaLexicon, PreprocessError, StopWords, TextPipeline};
use crate::relatedness::{build_graph, GraphError, Measure};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Hdp(#[from] HdpError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

impl PipelineError {
    /// Bad input as opposed to a failure while processing it.
    pub fn is_validation(&self) -> bool {
        match self {
            PipelineError::Config(_) => true,
            PipelineError::Corpus(e) => !matches!(e, CorpusError::Io { .. }),
            _ => false,
        }
    }
}

/// Loads the configured inputs, runs the analysis and returns the bundle.
/// Nothing is written; see [`AnalysisBundle::write`].
pub fn run(
    cfg: &RunConfig,
    jobs: usize,
    cancel: &CancelToken,
    progress: &mut dyn FnMut(&str),
) -> Result<AnalysisBundle, PipelineError> {
    cfg.validate()?;
    let stopwords = match &cfg.paths.stopwords {
        Some(p) => StopWords::load(p)?,
        None => StopWords::default_list(),
    };
    let lexicon = match &cfg.paths.lexicon {
        Some(p) => LemmaLexicon::load(p)?,
        None => LemmaLexicon::default(),
    };
    let docs = load_corpus(&cfg.paths.corpus, cfg.corpus_format()?)?;
    progress(&format!("loaded {} documents from {}", docs.len(), cfg.paths.corpus.display()));
    analyze(&docs, TextPipeline::new(lexicon, stopwords), &cfg.analysis(), jobs, cancel, progress)
}

/// The analysis proper, on documents already in memory.
pub fn analyze(
    docs: &[RawDocument],
    text: TextPipeline,
    config: &AnalysisConfig,
    jobs: usize,
    cancel: &CancelToken,
    progress: &mut dyn FnMut(&str),
) -> Result<AnalysisBundle, PipelineError> {
    config.validate()?;
    let slices = partition_epochs(docs, &config.epochs)?;
    progress(&format!("partitioned into {} epochs", slices.len()));
    if slices.len() < 2 {
        return Err(GraphError::TooFewEpochs(slices.len()).into());
    }

    let by_id: HashMap<&str, &RawDocument> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let texts: Vec<String> = docs.iter().map(RawDocument::text).collect();
    let vocabulary = text.build_vocabulary(&texts, config.preprocess.energy_fraction)?;
    progress(&format!("vocabulary of {} terms", vocabulary.len()));

    let epoch_bags: Vec<_> = slices
        .iter()
        .map(|s| {
            let bags = s.document_ids.iter().map(|id| text.vectorize(id, &by_id[id.as_str()].text(), &vocabulary)).collect();
            (s.clone(), bags)
        })
        .collect();
    progress(&format!("fitting {} epochs", epoch_bags.len()));
    let models = fit_corpus(&epoch_bags, vocabulary.len(), &config.hdp, jobs, cancel)?;
    for m in &models {
        progress(&format!("epoch {}: {} topics", m.epoch, m.topics.len()));
    }

    let [b, f, k] = Measure::ALL.map(|m| build_graph(&models, m));
    let graphs = [b?, f?, k?];
    progress(&format!("built graphs with {} edges each", graphs[0].edges().len()));
    let bundle = AnalysisBundle::assemble(config.clone(), vocabulary, text, slices, models, graphs)?;
    progress(&format!("classified {} topics", bundle.events().len()));
    Ok(bundle)
}
