//! Run configuration: where the inputs live plus every analysis setting.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusFormat, EpochSpec};
use crate::hdp::HdpConfig;
use crate::relatedness::Measure;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{what} not found: {path}")]
    MissingFile { what: &'static str, path: PathBuf },
    #[error("invalid setting: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    /// Corpus format; inferred from the extension when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<CorpusFormat>,
    /// Stop-word list; the built-in English list when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopwords: Option<PathBuf>,
    /// Lemma lexicon (TSV); no lemmatization when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub energy_fraction: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { energy_fraction: 0.9 }
    }
}

/// Pruning operating point per measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Zetas {
    pub bhattacharyya: f64,
    pub kld_forward: f64,
    pub kld_backward: f64,
}

impl Default for Zetas {
    fn default() -> Self {
        Zetas { bhattacharyya: 0.5, kld_forward: 0.5, kld_backward: 0.5 }
    }
}

impl Zetas {
    pub fn get(&self, m: Measure) -> f64 {
        match m {
            Measure::Bhattacharyya => self.bhattacharyya,
            Measure::KldForward => self.kld_forward,
            Measure::KldBackward => self.kld_backward,
        }
    }

    pub fn set(&mut self, m: Measure, zeta: f64) {
        match m {
            Measure::Bhattacharyya => self.bhattacharyya = zeta,
            Measure::KldForward => self.kld_forward = zeta,
            Measure::KldBackward => self.kld_backward = zeta,
        }
    }
}

/// Everything that determines the analysis output. Stored in the bundle
/// manifest; paths are deliberately not part of it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub epochs: EpochSpec,
    pub preprocess: PreprocessConfig,
    pub hdp: HdpConfig,
    pub zeta: Zetas,
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.epochs.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let e = self.preprocess.energy_fraction;
        if !(e > 0.0 && e <= 1.0) {
            return Err(ConfigError::Invalid(format!("preprocess.energy_fraction {e} outside (0, 1]")));
        }
        self.hdp.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for m in Measure::ALL {
            let z = self.zeta.get(m);
            if !(0.0..=1.0).contains(&z) {
                return Err(ConfigError::Invalid(format!("zeta.{m} {z} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    #[serde(default)]
    pub epochs: EpochSpec,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub hdp: HdpConfig,
    #[serde(default)]
    pub zeta: Zetas,
}

impl RunConfig {
    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig { epochs: self.epochs.clone(), preprocess: self.preprocess.clone(), hdp: self.hdp.clone(), zeta: self.zeta }
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_path_buf(), message: e.to_string() })
    }

    /// Reads a TOML config. Relative paths inside it resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.paths.corpus);
        resolve(&mut cfg.paths.output);
        cfg.paths.stopwords.as_mut().map(resolve);
        cfg.paths.lexicon.as_mut().map(resolve);
        Ok(cfg)
    }

    pub fn corpus_format(&self) -> Result<CorpusFormat, ConfigError> {
        match self.paths.format {
            Some(f) => Ok(f),
            None => CorpusFormat::from_path(&self.paths.corpus).ok_or_else(|| {
                ConfigError::Invalid(format!("cannot infer corpus format of {}; set paths.format", self.paths.corpus.display()))
            }),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let must_exist = |what, p: &Path| {
            if p.is_file() {
                Ok(())
            } else {
                Err(ConfigError::MissingFile { what, path: p.to_path_buf() })
            }
        };
        must_exist("corpus", &self.paths.corpus)?;
        if let Some(p) = &self.paths.stopwords {
            must_exist("stop-word list", p)?;
        }
        if let Some(p) = &self.paths.lexicon {
            must_exist("lemma lexicon", p)?;
        }
        self.corpus_format()?;
        self.analysis().validate()
    }

    /// Commented TOML with every default spelled out.
    pub fn default_toml() -> String {
        let a = AnalysisConfig::default();
        let h = &a.hdp;
        format!(
            r#"[paths]
corpus = "corpus.jsonl"
# format = "jsonl"            # or "csv"; inferred from the extension by default
# stopwords = "stopwords.txt"  # one word per line; built-in English list by default
# lexicon = "lexicon.tsv"      # token<TAB>lemma; no lemmatization by default
output = "bundle"

[epochs]
mode = "fixed-length"          # or "explicit-boundaries" with boundaries = ["2001-01-01", ...]
length_months = {months}
min_documents = {min_docs}

[preprocess]
energy_fraction = {energy:?}

[hdp]
gamma = {gamma:?}
alpha = {alpha:?}
eta = {eta:?}
iterations = {iterations}
burn_in = {burn_in}
seed = {seed}
min_topic_mass = {mass:?}
resample_concentrations = {resample}

[zeta]
bhattacharyya = {zb:?}
kld_forward = {zf:?}
kld_backward = {zk:?}
"#,
            months = a.epochs.length_months,
            min_docs = a.epochs.min_documents,
            energy = a.preprocess.energy_fraction,
            gamma = h.gamma,
            alpha = h.alpha,
            eta = h.eta,
            iterations = h.iterations,
            burn_in = h.burn_in,
            seed = h.seed,
            mass = h.min_topic_mass,
            resample = h.resample_concentrations,
            zb = a.zeta.bhattacharyya,
            zf = a.zeta.kld_forward,
            zk = a.zeta.kld_backward,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_toml_parses_to_defaults() {
        let cfg = RunConfig::parse(&RunConfig::default_toml(), Path::new("x.toml")).unwrap();
        assert_eq!(cfg.analysis(), AnalysisConfig::default());
        assert_eq!(cfg.paths.corpus, PathBuf::from("corpus.jsonl"));
        assert!(cfg.paths.lexicon.is_none());
    }

    #[test]
    fn sections_are_optional() {
        let cfg = RunConfig::parse("[paths]\ncorpus = \"c.csv\"\noutput = \"o\"\n[hdp]\nseed = 5\n", Path::new("x.toml")).unwrap();
        assert_eq!(cfg.hdp.seed, 5);
        assert_eq!(cfg.hdp.iterations, 1000);
        assert_eq!(cfg.zeta, Zetas::default());
        assert_eq!(cfg.corpus_format().unwrap(), CorpusFormat::Csv);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("[paths]\ncorpus = \"c\"\noutput = \"o\"\n[hdp]\nsed = 5\n", Path::new("x")).is_err());
        assert!(RunConfig::parse("[paths]\ncorpus = \"c\"\noutput = \"o\"\n[zetta]\n", Path::new("x")).is_err());
    }

    #[test]
    fn validation_names_missing_corpus() {
        let cfg = RunConfig::parse("[paths]\ncorpus = \"/nonexistent/corpus.jsonl\"\noutput = \"o\"\n", Path::new("x")).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("/nonexistent/corpus.jsonl"), "{err}");
    }

    #[test]
    fn range_checks() {
        let mut a = AnalysisConfig::default();
        a.zeta.kld_forward = 1.5;
        assert!(a.validate().is_err());
        let mut a = AnalysisConfig::default();
        a.preprocess.energy_fraction = 0.0;
        assert!(a.validate().is_err());
        let mut a = AnalysisConfig::default();
        a.hdp.burn_in = a.hdp.iterations;
        assert!(a.validate().is_err());
        assert!(AnalysisConfig::default().validate().is_ok());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[paths]\ncorpus = \"data/c.jsonl\"\nlexicon = \"/abs/lex.tsv\"\noutput = \"out\"\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.paths.corpus, dir.path().join("data/c.jsonl"));
        assert_eq!(cfg.paths.output, dir.path().join("out"));
        assert_eq!(cfg.paths.lexicon, Some(PathBuf::from("/abs/lex.tsv")));
    }
}
