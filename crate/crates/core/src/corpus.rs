//! Labeled text corpora: loading, saving, statistics, splits and sampling.
//!
//! Randomness comes from `ChaCha8Rng::seed_from_u64(seed)`, which is
//! portable across platforms, so a seed fully determines every split and
//! sample.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::output;
use crate::scheme::{Label, LabelScheme};
use crate::textproc;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("corpus file not found: {}", .0.display())]
    NotFound(PathBuf),
    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("row {row}: malformed record: {message}")]
    Malformed { row: usize, message: String },
    #[error("row {row}: unknown label `{label}` for scheme `{scheme}`")]
    UnknownLabel { row: usize, label: String, scheme: String },
    #[error("row {row}: empty text")]
    EmptyText { row: usize },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("item `{0}` has an empty text")]
    EmptyItemText(String),
    #[error("item `{id}` has label `{label}` outside scheme `{scheme}`")]
    ForeignLabel { id: String, label: String, scheme: String },
    #[error("item `{0}` is unlabeled; this operation needs gold labels")]
    Unlabeled(String),
    #[error("label `{label}` has only {size} item(s); a stratified split needs at least 2")]
    StratumTooSmall { label: String, size: usize },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    FractionOutOfRange(f64),
    #[error("not enough items at level {level} in {source_name}: requested {requested}, available {available}")]
    Insufficient { level: String, source_name: String, requested: usize, available: usize },
    #[error("corpora use different label schemes (`{0}` vs `{1}`)")]
    SchemeMismatch(String, String),
    #[error("no corpora to sample from")]
    NoCorpora,
    #[error("unknown corpus format `{0}` (expected csv or jsonl)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// Guesses the format from a file extension (`.csv`, `.jsonl`, `.ndjson`).
    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Format::Csv),
            "jsonl" | "ndjson" => Some(Format::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for Format {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "ndjson" => Ok(Format::Jsonl),
            _ => Err(CorpusError::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabeledText {
    pub id: String,
    pub text: String,
    pub label: Option<Label>,
    pub source: String,
}

/// A validated collection of texts under one label scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    scheme: LabelScheme,
    items: Vec<LabeledText>,
}

impl Corpus {
    pub fn new(scheme: LabelScheme, items: Vec<LabeledText>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(items.len());
        for item in &items {
            if item.text.trim().is_empty() {
                return Err(CorpusError::EmptyItemText(item.id.clone()));
            }
            if let Some(label) = &item.label {
                if !scheme.contains(label) {
                    return Err(CorpusError::ForeignLabel {
                        id: item.id.clone(),
                        label: label.name().to_string(),
                        scheme: scheme.name().to_string(),
                    });
                }
            }
            if !seen.insert(item.id.as_str()) {
                return Err(CorpusError::DuplicateId(item.id.clone()));
            }
        }
        Ok(Self { scheme, items })
    }

    pub fn empty(scheme: LabelScheme) -> Self {
        Self { scheme, items: Vec::new() }
    }

    pub fn scheme(&self) -> &LabelScheme {
        &self.scheme
    }

    pub fn items(&self) -> &[LabeledText] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Fails on the first unlabeled item.
    pub fn require_labels(&self) -> Result<(), CorpusError> {
        match self.items.iter().find(|i| i.label.is_none()) {
            Some(item) => Err(CorpusError::Unlabeled(item.id.clone())),
            None => Ok(()),
        }
    }

    fn select(&self, indices: &[usize]) -> Corpus {
        Corpus { scheme: self.scheme.clone(), items: indices.iter().map(|&i| self.items[i].clone()).collect() }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    id: String,
    text: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    source: Option<String>,
}

fn row_to_item(row: Row, line: usize, scheme: &LabelScheme) -> Result<LabeledText, CorpusError> {
    if row.text.trim().is_empty() {
        return Err(CorpusError::EmptyText { row: line });
    }
    let label = match row.label.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(name) => Some(scheme.label(name).map_err(|_| CorpusError::UnknownLabel {
            row: line,
            label: name.to_string(),
            scheme: scheme.name().to_string(),
        })?),
    };
    Ok(LabeledText { id: row.id, text: row.text, label, source: row.source.unwrap_or_default() })
}

/// Reads a corpus; row numbers in errors count data rows from 1.
pub fn read_corpus<R: Read>(reader: R, format: Format, scheme: &LabelScheme) -> Result<Corpus, CorpusError> {
    let mut items = Vec::new();
    match format {
        Format::Csv => {
            let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
            for (i, row) in rdr.deserialize::<Row>().enumerate() {
                let row = row.map_err(|e| CorpusError::Malformed { row: i + 1, message: e.to_string() })?;
                items.push(row_to_item(row, i + 1, scheme)?);
            }
        }
        Format::Jsonl => {
            for (i, line) in BufReader::new(reader).lines().enumerate() {
                let line = line.map_err(|e| CorpusError::Malformed { row: i + 1, message: e.to_string() })?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: Row = serde_json::from_str(&line)
                    .map_err(|e| CorpusError::Malformed { row: i + 1, message: e.to_string() })?;
                items.push(row_to_item(row, i + 1, scheme)?);
            }
        }
    }
    Corpus::new(scheme.clone(), items)
}

pub fn load_corpus(path: &Path, format: Format, scheme: &LabelScheme) -> Result<Corpus, CorpusError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CorpusError::NotFound(path.to_path_buf()),
        _ => CorpusError::Io { path: path.to_path_buf(), source: e },
    })?;
    read_corpus(file, format, scheme)
}

pub fn write_corpus<W: Write>(corpus: &Corpus, writer: W, format: Format) -> std::io::Result<()> {
    let rows = corpus.items.iter().map(|item| Row {
        id: item.id.clone(),
        text: item.text.clone(),
        label: item.label.as_ref().map(|l| l.name().to_string()),
        source: Some(item.source.clone()),
    });
    match format {
        Format::Csv => {
            let mut wtr = csv::Writer::from_writer(writer);
            // header is written explicitly so an empty corpus still has one
            wtr.write_record(["id", "text", "label", "source"])?;
            for row in rows {
                wtr.write_record([&row.id, &row.text, row.label.as_deref().unwrap_or(""), row.source.as_deref().unwrap_or("")])?;
            }
            wtr.flush()?;
        }
        Format::Jsonl => {
            let mut writer = writer;
            for row in rows {
                serde_json::to_writer(&mut writer, &row)?;
                writer.write_all(b"\n")?;
            }
            writer.flush()?;
        }
    }
    Ok(())
}

/// Writes the corpus atomically (temporary file, then rename).
pub fn save_corpus(corpus: &Corpus, path: &Path, format: Format) -> std::io::Result<()> {
    let mut buf = Vec::new();
    write_corpus(corpus, &mut buf, format)?;
    output::write_atomic(path, &buf)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_items: usize,
    pub n_words: usize,
    /// Every character of every text, whitespace and punctuation included.
    pub n_chars: usize,
    pub per_label_counts: BTreeMap<String, usize>,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut per_label_counts: BTreeMap<String, usize> =
        corpus.scheme.label_names().iter().map(|n| (n.clone(), 0)).collect();
    let mut stats = CorpusStats { n_items: corpus.len(), n_words: 0, n_chars: 0, per_label_counts: BTreeMap::new() };
    for item in &corpus.items {
        stats.n_words += textproc::tokenize_words(&item.text).len();
        stats.n_chars += item.text.chars().count();
        if let Some(label) = &item.label {
            *per_label_counts.entry(label.name().to_string()).or_default() += 1;
        }
    }
    stats.per_label_counts = per_label_counts;
    stats
}

fn indices_by_rank(corpus: &Corpus) -> Vec<Vec<usize>> {
    let mut strata = vec![Vec::new(); corpus.scheme.len()];
    for (i, item) in corpus.items.iter().enumerate() {
        if let Some(label) = &item.label {
            strata[label.rank()].push(i);
        }
    }
    strata
}

/// Stratified, seeded train/test split.
///
/// Each label's items are shuffled and the first
/// `round(train_fraction * stratum size)` go to train. Both halves keep the
/// input order. Labels with no items are skipped; every present label needs
/// at least two items.
pub fn split_corpus(corpus: &Corpus, train_fraction: f64, seed: u64) -> Result<(Corpus, Corpus), CorpusError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CorpusError::FractionOutOfRange(train_fraction));
    }
    corpus.require_labels()?;
    let strata = indices_by_rank(corpus);
    for (rank, stratum) in strata.iter().enumerate() {
        if stratum.len() == 1 {
            return Err(CorpusError::StratumTooSmall { label: corpus.scheme.at(rank).name().to_string(), size: 1 });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut stratum in strata {
        stratum.shuffle(&mut rng);
        let n_train = (train_fraction * stratum.len() as f64).round() as usize;
        train.extend_from_slice(&stratum[..n_train]);
        test.extend_from_slice(&stratum[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((corpus.select(&train), corpus.select(&test)))
}

fn source_name(corpus: &Corpus, index: usize) -> String {
    let mut tags: Vec<&str> = corpus.items.iter().map(|i| i.source.as_str()).filter(|s| !s.is_empty()).collect();
    tags.sort_unstable();
    tags.dedup();
    if tags.is_empty() {
        format!("corpus #{index}")
    } else {
        format!("corpus #{index} ({})", tags.join(", "))
    }
}

/// Draws `per_level` items per (level, corpus) pair without replacement.
///
/// Output order: corpora in input order, then `levels` in the given order,
/// then original item order within each draw.
pub fn sample_eval_set(corpora: &[Corpus], per_level: usize, levels: &[Label], seed: u64) -> Result<Corpus, CorpusError> {
    let scheme = corpora.first().ok_or(CorpusError::NoCorpora)?.scheme.clone();
    for corpus in corpora {
        if corpus.scheme != scheme {
            return Err(CorpusError::SchemeMismatch(scheme.name().to_string(), corpus.scheme.name().to_string()));
        }
    }
    for level in levels {
        if !scheme.contains(level) {
            return Err(CorpusError::ForeignLabel {
                id: String::from("<requested level>"),
                label: level.name().to_string(),
                scheme: scheme.name().to_string(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(corpora.len() * levels.len() * per_level);
    for (ci, corpus) in corpora.iter().enumerate() {
        let strata = indices_by_rank(corpus);
        for level in levels {
            let stratum = &strata[level.rank()];
            if stratum.len() < per_level {
                return Err(CorpusError::Insufficient {
                    level: level.name().to_string(),
                    source_name: source_name(corpus, ci),
                    requested: per_level,
                    available: stratum.len(),
                });
            }
            let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, stratum.len(), per_level)
                .into_iter()
                .map(|k| stratum[k])
                .collect();
            picked.sort_unstable();
            items.extend(picked.into_iter().map(|i| corpus.items[i].clone()));
        }
    }
    Corpus::new(scheme, items)
}
