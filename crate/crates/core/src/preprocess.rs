//! Text normalization into bags-of-words.
//!
//! Pipeline: NFKC fold, lowercase, split on anything outside `[a-z]`, drop
//! tokens shorter than two characters, look each token up in a lemma table
//! (no stemming), drop stop-words, keep in-vocabulary lemmas.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Stop-words shipped with the crate, used when no list is configured.
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Format { path: String, line: usize, reason: String },
    #[error("energy fraction {0} outside (0, 1]")]
    InvalidEnergy(f64),
    #[error("no documents")]
    NoDocuments,
    #[error("every token was a stop-word")]
    EmptyAfterFiltering,
    #[error("bad vocabulary: {0}")]
    BadVocabulary(String),
}

/// Lowercased alphabetic tokens of at least two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    let folded: String = text.nfkc().flat_map(char::to_lowercase).collect();
    folded
        .split(|c: char| !c.is_ascii_lowercase())
        .filter(|t| t.len() >= 2)
        .map(str::to_owned)
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StopWords(BTreeSet<String>);

impl StopWords {
    /// Parses one word per line; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        StopWords(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self, PreprocessError> {
        let text = fs::read_to_string(path)
            .map_err(|source| PreprocessError::Io { path: path.display().to_string(), source })?;
        Ok(Self::parse(&text))
    }

    pub fn default_list() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    /// Serialized back to the one-word-per-line format.
    pub fn to_text(&self) -> String {
        self.0.iter().map(|w| format!("{w}\n")).collect()
    }
}

impl<S: Into<String>> FromIterator<S> for StopWords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        StopWords(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

/// Surface form to lemma lookup table. Lemmas are fixed points: a lemma is
/// never itself a key mapping somewhere else.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LemmaLexicon {
    surface_to_lemma: BTreeMap<String, String>,
}

impl LemmaLexicon {
    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut map = BTreeMap::new();
        for (s, l) in pairs {
            let s = s.as_ref().trim().to_lowercase();
            let l = l.as_ref().trim().to_lowercase();
            if s.is_empty() || l.is_empty() {
                return Err("empty surface form or lemma".into());
            }
            if s != l {
                map.insert(s, l);
            }
        }
        for (s, l) in &map {
            if let Some(next) = map.get(l) {
                return Err(format!("lemma {l:?} of {s:?} is not a fixed point (maps to {next:?})"));
            }
        }
        Ok(LemmaLexicon { surface_to_lemma: map })
    }

    /// Parses `surface<TAB>lemma` lines. Blank lines and `#` comments are skipped.
    pub fn parse_tsv(text: &str, origin: &str) -> Result<Self, PreprocessError> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some(s), Some(l), None) => pairs.push((s.to_owned(), l.to_owned())),
                _ => {
                    return Err(PreprocessError::Format {
                        path: origin.into(),
                        line: i + 1,
                        reason: "expected two tab-separated columns".into(),
                    })
                }
            }
        }
        Self::from_pairs(pairs).map_err(|reason| PreprocessError::Format { path: origin.into(), line: 0, reason })
    }

    pub fn load(path: &Path) -> Result<Self, PreprocessError> {
        let text = fs::read_to_string(path)
            .map_err(|source| PreprocessError::Io { path: path.display().to_string(), source })?;
        Self::parse_tsv(&text, &path.display().to_string())
    }

    pub fn to_tsv(&self) -> String {
        self.surface_to_lemma.iter().map(|(s, l)| format!("{s}\t{l}\n")).collect()
    }

    pub fn len(&self) -> usize {
        self.surface_to_lemma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surface_to_lemma.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&str> {
        self.surface_to_lemma.get(token).map(String::as_str)
    }
}

/// Lexicon lemma when present, otherwise the token itself.
pub fn lemmatize<'a>(token: &'a str, lexicon: &'a LemmaLexicon) -> &'a str {
    lexicon.get(token).unwrap_or(token)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermCount {
    pub term: String,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    counts: Vec<u64>,
    index_of: HashMap<String, usize>,
    energy_fraction: f64,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    energy_fraction: f64,
    terms: Vec<TermCount>,
}

impl Vocabulary {
    pub fn from_terms(terms: Vec<TermCount>, energy_fraction: f64) -> Result<Self, PreprocessError> {
        let mut index_of = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index_of.insert(t.term.clone(), i).is_some() {
                return Err(PreprocessError::BadVocabulary(format!("duplicate term {:?}", t.term)));
            }
        }
        let (terms, counts) = terms.into_iter().map(|t| (t.term, t.count)).unzip();
        Ok(Vocabulary { terms, counts, index_of, energy_fraction })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn corpus_counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index_of.get(term).copied()
    }

    pub fn energy_fraction(&self) -> f64 {
        self.energy_fraction
    }

    pub fn to_json(&self) -> String {
        let file = VocabularyFile {
            energy_fraction: self.energy_fraction,
            terms: self
                .terms
                .iter()
                .zip(&self.counts)
                .map(|(t, c)| TermCount { term: t.clone(), count: *c })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PreprocessError> {
        let file: VocabularyFile =
            serde_json::from_str(text).map_err(|e| PreprocessError::BadVocabulary(e.to_string()))?;
        Self::from_terms(file.terms, file.energy_fraction)
    }
}

fn check_energy(energy_fraction: f64) -> Result<(), PreprocessError> {
    if energy_fraction > 0.0 && energy_fraction <= 1.0 {
        Ok(())
    } else {
        Err(PreprocessError::InvalidEnergy(energy_fraction))
    }
}

/// Selects the shortest prefix of terms, in descending frequency order (ties
/// lexicographic), whose cumulative count covers `energy_fraction` of all
/// non-stop-word tokens.
pub fn build_vocabulary<D, T>(docs: &[D], stopwords: &StopWords, energy_fraction: f64) -> Result<Vocabulary, PreprocessError>
where
    D: AsRef<[T]>,
    T: AsRef<str>,
{
    check_energy(energy_fraction)?;
    if docs.is_empty() {
        return Err(PreprocessError::NoDocuments);
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for doc in docs {
        for tok in doc.as_ref() {
            let tok = tok.as_ref();
            if !stopwords.contains(tok) {
                *counts.entry(tok).or_default() += 1;
            }
        }
    }
    select_by_energy(counts, energy_fraction)
}

fn select_by_energy(counts: HashMap<&str, u64>, energy_fraction: f64) -> Result<Vocabulary, PreprocessError> {
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(PreprocessError::EmptyAfterFiltering);
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let target = energy_fraction * total as f64;
    // relative slack so that e.g. 0.9 * 20 is not lost to rounding
    let slack = 1e-12 * total as f64;
    let mut cumulative = 0u64;
    let mut keep = ranked.len();
    for (i, (_, c)) in ranked.iter().enumerate() {
        cumulative += c;
        if cumulative as f64 + slack >= target {
            keep = i + 1;
            break;
        }
    }
    ranked.truncate(keep);
    let terms = ranked.into_iter().map(|(t, c)| TermCount { term: t.to_owned(), count: c }).collect();
    Vocabulary::from_terms(terms, energy_fraction)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagOfWords {
    pub doc_id: String,
    /// Term index to positive count.
    pub counts: BTreeMap<usize, u32>,
    pub total: u32,
}

impl BagOfWords {
    pub fn empty(doc_id: impl Into<String>) -> Self {
        BagOfWords { doc_id: doc_id.into(), counts: BTreeMap::new(), total: 0 }
    }

    pub fn from_indices(doc_id: impl Into<String>, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut bag = Self::empty(doc_id);
        for i in indices {
            *bag.counts.entry(i).or_default() += 1;
            bag.total += 1;
        }
        bag
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Tokens expanded in ascending term order.
    pub fn tokens(&self) -> impl Iterator<Item = usize> + '_ {
        self.counts.iter().flat_map(|(&w, &c)| std::iter::repeat_n(w, c as usize))
    }
}

/// Lemmatized, stop-filtered token stream; shared by vocabulary construction
/// and vectorization so both see identical lemmas.
pub fn normalize_tokens<'a, T: AsRef<str>>(
    tokens: &'a [T],
    lexicon: &'a LemmaLexicon,
    stopwords: &'a StopWords,
) -> impl Iterator<Item = &'a str> + 'a {
    tokens.iter().filter_map(move |t| {
        let t = t.as_ref();
        let lemma = lemmatize(t, lexicon);
        (!stopwords.contains(t) && !stopwords.contains(lemma)).then_some(lemma)
    })
}

pub fn vectorize<T: AsRef<str>>(
    doc_id: &str,
    tokens: &[T],
    lexicon: &LemmaLexicon,
    stopwords: &StopWords,
    vocab: &Vocabulary,
) -> BagOfWords {
    BagOfWords::from_indices(
        doc_id,
        normalize_tokens(tokens, lexicon, stopwords).filter_map(|l| vocab.index_of(l)),
    )
}

/// The configured text pipeline bundled together.
#[derive(Clone, Debug, Default)]
pub struct TextPipeline {
    pub lexicon: LemmaLexicon,
    pub stopwords: StopWords,
}

impl TextPipeline {
    pub fn new(lexicon: LemmaLexicon, stopwords: StopWords) -> Self {
        TextPipeline { lexicon, stopwords }
    }

    /// Tokenized, lemmatized, stop-filtered text.
    pub fn lemmas(&self, text: &str) -> Vec<String> {
        let toks = tokenize(text);
        normalize_tokens(&toks, &self.lexicon, &self.stopwords).map(str::to_owned).collect()
    }

    pub fn build_vocabulary<S: AsRef<str>>(&self, texts: &[S], energy_fraction: f64) -> Result<Vocabulary, PreprocessError> {
        let lemmas: Vec<Vec<String>> = texts.iter().map(|t| self.lemmas(t.as_ref())).collect();
        build_vocabulary(&lemmas, &self.stopwords, energy_fraction)
    }

    pub fn vectorize(&self, doc_id: &str, text: &str, vocab: &Vocabulary) -> BagOfWords {
        vectorize(doc_id, &tokenize(text), &self.lexicon, &self.stopwords, vocab)
    }
}
