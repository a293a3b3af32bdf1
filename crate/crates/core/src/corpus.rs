//! Timestamped document loading and epoch partitioning.
//!
//! A corpus is a flat list of [`RawDocument`]s sorted by `(timestamp, id)`.
//! [`partition_epochs`] buckets it into contiguous [`EpochSlice`]s that tile
//! the covered time span; underpopulated buckets are folded into a neighbour.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Local, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid epoch spec: {0}")]
    InvalidSpec(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Some(CorpusFormat::Jsonl),
            "csv" => Some(CorpusFormat::Csv),
            _ => None,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub timestamp: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub body: String,
}

impl RawDocument {
    /// Title and body joined, as fed to the tokenizer.
    pub fn text(&self) -> String {
        match &self.title {
            Some(t) if !t.trim().is_empty() => format!("{t}\n{}", self.body),
            _ => self.body.clone(),
        }
    }
}

#[derive(Deserialize)]
struct WireRecord {
    id: String,
    timestamp: String,
    #[serde(default)]
    title: Option<String>,
    body: String,
}

fn earliest_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(1800, 1, 1).expect("valid date")
}

fn validate_record(rec: WireRecord, line: usize, today: NaiveDate) -> Result<RawDocument, CorpusError> {
    let parse_err = |reason: String| CorpusError::Parse { line, reason };
    if rec.id.trim().is_empty() {
        return Err(parse_err("empty id".into()));
    }
    let timestamp = NaiveDate::parse_from_str(rec.timestamp.trim(), "%Y-%m-%d")
        .map_err(|e| parse_err(format!("bad timestamp {:?}: {e}", rec.timestamp)))?;
    if timestamp < earliest_date() || timestamp > today {
        return Err(parse_err(format!("timestamp {timestamp} outside [1800-01-01, {today}]")));
    }
    if rec.body.trim().is_empty() {
        return Err(parse_err("empty body".into()));
    }
    let title = rec.title.filter(|t| !t.is_empty());
    Ok(RawDocument { id: rec.id, timestamp, title, body: rec.body })
}

/// Loads and validates a whole corpus file. Any malformed record rejects the
/// file. The result is sorted by `(timestamp, id)`.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<RawDocument>, CorpusError> {
    let io_err = |source| CorpusError::Io { path: path.display().to_string(), source };
    let file = File::open(path).map_err(io_err)?;
    let today = Local::now().date_naive();
    let mut docs = match format {
        CorpusFormat::Jsonl => read_jsonl(BufReader::new(file), today)?,
        CorpusFormat::Csv => read_csv(file, today)?,
    };
    let mut seen = HashSet::with_capacity(docs.len());
    for d in &docs {
        if !seen.insert(d.id.as_str()) {
            return Err(CorpusError::DuplicateId(d.id.clone()));
        }
    }
    sort_documents(&mut docs);
    Ok(docs)
}

pub fn sort_documents(docs: &mut [RawDocument]) {
    docs.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
}

fn read_jsonl<R: BufRead>(reader: R, today: NaiveDate) -> Result<Vec<RawDocument>, CorpusError> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Parse { line: line_no, reason: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: WireRecord = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Parse { line: line_no, reason: e.to_string() })?;
        docs.push(validate_record(rec, line_no, today)?);
    }
    Ok(docs)
}

fn read_csv<R: std::io::Read>(reader: R, today: NaiveDate) -> Result<Vec<RawDocument>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Parse { line: 1, reason: e.to_string() })?
        .clone();
    let expected = ["id", "timestamp", "title", "body"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(CorpusError::Parse {
            line: 1,
            reason: format!("expected header {}", expected.join(",")),
        });
    }
    let mut docs = Vec::new();
    for rec in rdr.deserialize::<WireRecord>() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            CorpusError::Parse { line, reason: e.to_string() }
        })?;
        // header is line 1, records start at 2
        let line = docs.len() + 2;
        docs.push(validate_record(rec, line, today)?);
    }
    Ok(docs)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpochMode {
    #[default]
    FixedLength,
    ExplicitBoundaries,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochSpec {
    #[serde(default)]
    pub mode: EpochMode,
    /// Epoch length in whole months (fixed-length mode).
    #[serde(default = "default_length_months")]
    pub length_months: u32,
    /// Ascending boundary dates (explicit mode).
    #[serde(default)]
    pub boundaries: Vec<NaiveDate>,
    #[serde(default = "default_min_documents")]
    pub min_documents: usize,
}

fn default_length_months() -> u32 {
    12
}

fn default_min_documents() -> usize {
    20
}

impl Default for EpochSpec {
    fn default() -> Self {
        EpochSpec {
            mode: EpochMode::FixedLength,
            length_months: default_length_months(),
            boundaries: Vec::new(),
            min_documents: default_min_documents(),
        }
    }
}

impl EpochSpec {
    pub fn fixed(length_months: u32, min_documents: usize) -> Self {
        EpochSpec { mode: EpochMode::FixedLength, length_months, boundaries: Vec::new(), min_documents }
    }

    pub fn explicit(boundaries: Vec<NaiveDate>, min_documents: usize) -> Self {
        EpochSpec { mode: EpochMode::ExplicitBoundaries, length_months: default_length_months(), boundaries, min_documents }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.min_documents < 1 {
            return Err(CorpusError::InvalidSpec("min_documents must be >= 1".into()));
        }
        match self.mode {
            EpochMode::FixedLength if self.length_months < 1 => {
                Err(CorpusError::InvalidSpec("length_months must be >= 1".into()))
            }
            EpochMode::ExplicitBoundaries => {
                if self.boundaries.len() < 2 {
                    return Err(CorpusError::InvalidSpec("need at least two boundaries".into()));
                }
                if self.boundaries.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(CorpusError::InvalidSpec("boundaries must be strictly ascending".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSlice {
    pub index: usize,
    /// Inclusive.
    pub start: NaiveDate,
    /// Exclusive.
    pub end: NaiveDate,
    pub document_ids: Vec<String>,
}

impl EpochSlice {
    pub fn len(&self) -> usize {
        self.document_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.document_ids.is_empty()
    }
}

fn month_ordinal(d: NaiveDate) -> i64 {
    d.year() as i64 * 12 + d.month0() as i64
}

fn date_from_month_ordinal(m: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(m.div_euclid(12) as i32, m.rem_euclid(12) as u32 + 1, 1).expect("valid month")
}

struct Bucket {
    start: NaiveDate,
    end: NaiveDate,
    ids: Vec<String>,
}

/// Splits a sorted corpus into contiguous epochs.
///
/// Fixed-length epochs are aligned to multiples of `length_months` counted
/// from year 0, so twelve-month epochs coincide with calendar years. Buckets
/// holding fewer than `min_documents` documents (including empty ones) are
/// merged into the preceding slice; leading underpopulated buckets merge
/// forward until the threshold is met.
pub fn partition_epochs(docs: &[RawDocument], spec: &EpochSpec) -> Result<Vec<EpochSlice>, CorpusError> {
    if docs.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    spec.validate()?;
    if docs
        .windows(2)
        .any(|w| (w[0].timestamp, &w[0].id) > (w[1].timestamp, &w[1].id))
    {
        return Err(CorpusError::InvalidSpec("documents must be sorted by (timestamp, id)".into()));
    }

    let buckets = match spec.mode {
        EpochMode::FixedLength => fixed_buckets(docs, spec.length_months as i64),
        EpochMode::ExplicitBoundaries => explicit_buckets(docs, &spec.boundaries)?,
    };
    Ok(merge_buckets(buckets, spec.min_documents))
}

fn fixed_buckets(docs: &[RawDocument], len: i64) -> Vec<Bucket> {
    let bucket_of = |d: &RawDocument| month_ordinal(d.timestamp).div_euclid(len);
    let first = bucket_of(&docs[0]);
    let last = bucket_of(&docs[docs.len() - 1]);
    let mut buckets: Vec<Bucket> = (first..=last)
        .map(|b| Bucket {
            start: date_from_month_ordinal(b * len),
            end: date_from_month_ordinal((b + 1) * len),
            ids: Vec::new(),
        })
        .collect();
    for d in docs {
        buckets[(bucket_of(d) - first) as usize].ids.push(d.id.clone());
    }
    buckets
}

fn explicit_buckets(docs: &[RawDocument], bounds: &[NaiveDate]) -> Result<Vec<Bucket>, CorpusError> {
    let lo = bounds[0];
    let hi = bounds[bounds.len() - 1];
    let mut buckets: Vec<Bucket> = bounds
        .windows(2)
        .map(|w| Bucket { start: w[0], end: w[1], ids: Vec::new() })
        .collect();
    for d in docs {
        if d.timestamp < lo || d.timestamp >= hi {
            return Err(CorpusError::InvalidSpec(format!(
                "document {:?} dated {} lies outside [{lo}, {hi})",
                d.id, d.timestamp
            )));
        }
        let i = bounds.partition_point(|b| *b <= d.timestamp) - 1;
        buckets[i].ids.push(d.id.clone());
    }
    // Trim empty buckets outside the documents' span so the tiling starts and
    // ends at populated epochs.
    let first = buckets.iter().position(|b| !b.ids.is_empty()).expect("non-empty corpus");
    let last = buckets.iter().rposition(|b| !b.ids.is_empty()).expect("non-empty corpus");
    buckets.truncate(last + 1);
    buckets.drain(..first);
    Ok(buckets)
}

fn merge_buckets(buckets: Vec<Bucket>, min_documents: usize) -> Vec<EpochSlice> {
    let mut out: Vec<Bucket> = Vec::new();
    let mut pending: Option<Bucket> = None;
    for b in buckets {
        if let Some(mut p) = pending.take() {
            p.end = b.end;
            p.ids.extend(b.ids);
            if p.ids.len() >= min_documents {
                out.push(p);
            } else {
                pending = Some(p);
            }
            continue;
        }
        match out.last_mut() {
            None if b.ids.len() < min_documents => pending = Some(b),
            Some(prev) if b.ids.len() < min_documents => {
                prev.end = b.end;
                prev.ids.extend(b.ids);
            }
            _ => out.push(b),
        }
    }
    // the whole corpus never reached the threshold: one slice
    if let Some(p) = pending {
        out.push(p);
    }
    out.into_iter()
        .enumerate()
        .map(|(index, b)| EpochSlice { index, start: b.start, end: b.end, document_ids: b.ids })
        .collect()
}
