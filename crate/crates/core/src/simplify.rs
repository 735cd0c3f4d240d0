//! Simplification systems and their evaluation.
//!
//! A simplification is judged on two axes:
//! - accuracy: a proxy difficulty classifier must put the simplified text
//!   exactly one level below its reading of the original;
//! - similarity: cosine between embeddings of original and simplified text.
//!
//! The two corpus-level means are combined into a w-score, a weighted
//! harmonic mean.

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::difficulty::{DifficultyClassifier, DifficultyError};
use crate::parallel;
use crate::providers::{cosine, ChatBackend, Embedder, EmbeddingVector, ProviderError, VectorError};
use crate::scheme::{Label, LabelScheme};
use crate::textproc;

/// Bumped whenever the wording of the simplification prompt changes.
pub const SIMPLIFY_PROMPT_VERSION: &str = "fr-one-level-v1";

pub const SIMPLIFY_SYSTEM_PROMPT: &str = "Tu es un professeur de français langue étrangère. Tu réécris des phrases \
françaises pour des apprenants, en conservant leur sens.";

#[derive(Debug, thiserror::Error)]
pub enum SimplifyError {
    #[error("cannot simplify an empty text")]
    EmptyText,
    #[error("simplifier returned an empty completion")]
    EmptyCompletion,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Proxy(#[from] DifficultyError),
    #[error(transparent)]
    Vector(#[from] VectorError),
    #[error("w1 must lie strictly between 0 and 1, got {0}")]
    WeightOutOfRange(f64),
    #[error("{name} must lie in [{lo}, {hi}], got {value}")]
    MetricOutOfRange { name: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("max_iters must be at least 1")]
    NoIterations,
    #[error("no traces to aggregate")]
    NoTraces,
    #[error("trace {index} has {got} steps, expected {expected}")]
    TraceLength { index: usize, got: usize, expected: usize },
    #[error("trace {index} is incomplete: {reason}")]
    IncompleteTrace { index: usize, reason: String },
    #[error("trace {index} has label `{label}` outside scheme `{scheme}`")]
    ForeignLabel { index: usize, label: String, scheme: String },
    #[error("proxy scheme `{proxy}` does not match evaluation scheme `{corpus}`")]
    SchemeMismatch { proxy: String, corpus: String },
    #[error("item `{id}`: {source}")]
    Item { id: String, source: Box<SimplifyError> },
}

/// Rewrites a text one difficulty level lower.
pub trait Simplifier: Send + Sync {
    fn simplify(&self, text: &str, current_level: Option<&Label>) -> Result<String, SimplifyError>;
}

impl<T: Simplifier + ?Sized> Simplifier for std::sync::Arc<T> {
    fn simplify(&self, text: &str, current_level: Option<&Label>) -> Result<String, SimplifyError> {
        (**self).simplify(text, current_level)
    }
}

impl<T: Simplifier + ?Sized> Simplifier for Box<T> {
    fn simplify(&self, text: &str, current_level: Option<&Label>) -> Result<String, SimplifyError> {
        (**self).simplify(text, current_level)
    }
}

/// One simplification step with input and output checks.
pub fn simplify_once<S: Simplifier + ?Sized>(
    simplifier: &S,
    text: &str,
    current_level: Option<&Label>,
) -> Result<String, SimplifyError> {
    if text.trim().is_empty() {
        return Err(SimplifyError::EmptyText);
    }
    let out = simplifier.simplify(text, current_level)?;
    if out.trim().is_empty() {
        return Err(SimplifyError::EmptyCompletion);
    }
    Ok(out)
}

/// Renders the user prompt sent to a chat-backed simplifier.
pub fn render_simplify_prompt(text: &str, current_level: Option<&Label>, scheme: &LabelScheme) -> String {
    let target = current_level.and_then(|l| l.rank().checked_sub(1)).and_then(|r| scheme.get(r));
    let level_line = match (current_level, target) {
        (Some(from), Some(to)) => format!("La phrase est de niveau {from} ; réécris-la au niveau {to}.\n"),
        _ => String::new(),
    };
    format!(
        "Simplifie la phrase suivante pour qu'elle corresponde à un niveau du CECR inférieur d'un seul niveau. \
         Garde le même sens et réponds uniquement par la phrase simplifiée, en français.\n\
         {level_line}Phrase : {text}"
    )
}

/// A simplifier backed by a chat model.
pub struct ChatSimplifier<C> {
    chat: C,
    scheme: LabelScheme,
}

impl<C: ChatBackend> ChatSimplifier<C> {
    pub fn new(chat: C, scheme: LabelScheme) -> Self {
        Self { chat, scheme }
    }
}

impl<C: ChatBackend> Simplifier for ChatSimplifier<C> {
    fn simplify(&self, text: &str, current_level: Option<&Label>) -> Result<String, SimplifyError> {
        let prompt = render_simplify_prompt(text, current_level, &self.scheme);
        Ok(self.chat.complete(SIMPLIFY_SYSTEM_PROMPT, &prompt)?.trim().to_string())
    }
}

/// Offline simplifier: every word of three syllables or more becomes
/// `marker`. Texts without such words come back unchanged.
#[derive(Debug, Clone)]
pub struct RuleSimplifier {
    marker: String,
}

impl RuleSimplifier {
    pub const DEFAULT_MARKER: &'static str = "truc";

    pub fn new(marker: impl Into<String>) -> Self {
        Self { marker: marker.into() }
    }
}

impl Default for RuleSimplifier {
    fn default() -> Self {
        Self::new(Self::DEFAULT_MARKER)
    }
}

impl Simplifier for RuleSimplifier {
    fn simplify(&self, text: &str, _current_level: Option<&Label>) -> Result<String, SimplifyError> {
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        for span in textproc::word_spans(text) {
            if textproc::is_complex_word(&text[span.clone()]) {
                out.push_str(&text[last..span.start]);
                out.push_str(&self.marker);
                last = span.end;
            }
        }
        out.push_str(&text[last..]);
        Ok(out)
    }
}

/// Returns its input.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentitySimplifier;

impl Simplifier for IdentitySimplifier {
    fn simplify(&self, text: &str, _current_level: Option<&Label>) -> Result<String, SimplifyError> {
        Ok(text.to_string())
    }
}

/// Prefixes `text` with a level tag such as `[C2] `, read by [`TagProxy`].
pub fn tag_text(label: &Label, text: &str) -> String {
    format!("[{label}] {text}")
}

fn read_tag<'a>(text: &'a str, scheme: &LabelScheme) -> Option<(Label, &'a str)> {
    let rest = text.strip_prefix('[')?;
    let (name, body) = rest.split_once(']')?;
    Some((scheme.label(name).ok()?, body.strip_prefix(' ').unwrap_or(body)))
}

/// Offline "perfect" simplifier: lowers a leading level tag by exactly one
/// level and leaves everything else alone. Texts at the lowest level or
/// without a tag are returned unchanged.
#[derive(Debug, Clone)]
pub struct StepDownSimplifier {
    scheme: LabelScheme,
}

impl StepDownSimplifier {
    pub fn new(scheme: LabelScheme) -> Self {
        Self { scheme }
    }
}

impl Simplifier for StepDownSimplifier {
    fn simplify(&self, text: &str, _current_level: Option<&Label>) -> Result<String, SimplifyError> {
        Ok(match read_tag(text, &self.scheme) {
            Some((label, body)) if label.rank() > 0 => tag_text(&self.scheme.at(label.rank() - 1), body),
            _ => text.to_string(),
        })
    }
}

/// Offline proxy that reads the leading level tag written by [`tag_text`].
#[derive(Debug, Clone)]
pub struct TagProxy {
    scheme: LabelScheme,
}

impl TagProxy {
    pub fn new(scheme: LabelScheme) -> Self {
        Self { scheme }
    }
}

impl DifficultyClassifier for TagProxy {
    fn scheme(&self) -> &LabelScheme {
        &self.scheme
    }

    fn classify(&self, text: &str) -> Result<crate::difficulty::ClassifierOutput, DifficultyError> {
        read_tag(text, &self.scheme)
            .map(|(label, _)| crate::difficulty::ClassifierOutput::label_only(label))
            .ok_or_else(|| DifficultyError::UnparseableReply { reply: text.to_string(), scheme: self.scheme.name().to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// Exactly one level lower: A = 1.
    Valid,
    /// A = 0.
    Invalid,
    /// The original already sits at the lowest level.
    Skipped,
}

impl Verdict {
    pub fn from_ranks(original: usize, simplified: usize) -> Verdict {
        if original == 0 {
            Verdict::Skipped
        } else if simplified + 1 == original {
            Verdict::Valid
        } else {
            Verdict::Invalid
        }
    }

    /// `Some(1)`, `Some(0)`, or `None` when skipped.
    pub fn value(self) -> Option<u8> {
        match self {
            Verdict::Valid => Some(1),
            Verdict::Invalid => Some(0),
            Verdict::Skipped => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyOutcome {
    pub original: Label,
    pub simplified: Label,
    pub verdict: Verdict,
}

/// Classifies both texts with the proxy and compares the two readings.
/// Gold labels play no part: only the proxy's level difference counts.
pub fn simplification_accuracy<P: DifficultyClassifier + ?Sized>(
    proxy: &P,
    original: &str,
    simplified: &str,
) -> Result<AccuracyOutcome, SimplifyError> {
    let original = proxy.classify(original)?.label;
    let simplified = proxy.classify(simplified)?.label;
    let verdict = Verdict::from_ranks(original.rank(), simplified.rank());
    Ok(AccuracyOutcome { original, simplified, verdict })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WScoreFormula {
    /// `A*S / (w1*S + w2*A)`; equals `2AS/(A+S)` at `w1 = 0.5`.
    #[default]
    Harmonic,
    /// `2*(w1*A*w2*S) / (w1*A + w2*S)`, kept for comparison only.
    Literal,
}

/// Combines mean accuracy and mean similarity with weights `w1` and
/// `1 - w1`. Negative similarity is clamped to 0, and the score is 0 when
/// either input is 0.
pub fn w_score(mean_accuracy: f64, mean_similarity: f64, w1: f64, formula: WScoreFormula) -> Result<f64, SimplifyError> {
    if !(w1 > 0.0 && w1 < 1.0) {
        return Err(SimplifyError::WeightOutOfRange(w1));
    }
    if !(0.0..=1.0).contains(&mean_accuracy) {
        return Err(SimplifyError::MetricOutOfRange { name: "mean accuracy", value: mean_accuracy, lo: 0.0, hi: 1.0 });
    }
    if !(-1.0..=1.0).contains(&mean_similarity) {
        return Err(SimplifyError::MetricOutOfRange { name: "mean similarity", value: mean_similarity, lo: -1.0, hi: 1.0 });
    }
    let (a, s) = (mean_accuracy, mean_similarity.max(0.0));
    if a == 0.0 || s == 0.0 {
        return Ok(0.0);
    }
    let w2 = 1.0 - w1;
    Ok(match formula {
        WScoreFormula::Harmonic => a * s / (w1 * s + w2 * a),
        WScoreFormula::Literal => 2.0 * (w1 * a * w2 * s) / (w1 * a + w2 * s),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplificationRecord {
    pub id: String,
    pub original: String,
    pub simplified: String,
    pub gold_level: Option<Label>,
    pub proxy_level_original: Label,
    pub proxy_level_simplified: Label,
    /// 1 iff the proxy puts the simplified text exactly one level lower.
    pub accuracy: u8,
    pub skipped: bool,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplificationReport {
    pub mean_accuracy: f64,
    pub mean_similarity: f64,
    pub w_score: f64,
    pub w1: f64,
    pub formula: WScoreFormula,
    /// All evaluated pairs, skipped ones included.
    pub n_pairs: usize,
    /// Pairs whose original the proxy put at the lowest level; excluded from the means.
    pub n_skipped: usize,
    pub prompt_version: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub w1: f64,
    pub formula: WScoreFormula,
    pub parallelism: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { w1: 0.5, formula: WScoreFormula::Harmonic, parallelism: 1 }
    }
}

fn embed_pair<E: Embedder + ?Sized>(embedder: &E, a: &str, b: &str) -> Result<f64, SimplifyError> {
    let (u, v): (EmbeddingVector, EmbeddingVector) = (embedder.embed(a)?, embedder.embed(b)?);
    Ok(cosine(&u, &v)?)
}

fn evaluate_item<S, P, E>(
    simplifier: &S,
    proxy: &P,
    embedder: &E,
    item: &crate::corpus::LabeledText,
) -> Result<SimplificationRecord, SimplifyError>
where
    S: Simplifier + ?Sized,
    P: DifficultyClassifier + ?Sized,
    E: Embedder + ?Sized,
{
    let proxy_original = proxy.classify(&item.text)?.label;
    let hint = item.label.clone().unwrap_or_else(|| proxy_original.clone());
    let simplified = simplify_once(simplifier, &item.text, Some(&hint))?;
    let proxy_simplified = proxy.classify(&simplified)?.label;
    let verdict = Verdict::from_ranks(proxy_original.rank(), proxy_simplified.rank());
    let similarity = embed_pair(embedder, &item.text, &simplified)?;
    Ok(SimplificationRecord {
        id: item.id.clone(),
        original: item.text.clone(),
        simplified,
        gold_level: item.label.clone(),
        proxy_level_original: proxy_original,
        proxy_level_simplified: proxy_simplified,
        accuracy: verdict.value().unwrap_or(0),
        skipped: verdict == Verdict::Skipped,
        similarity,
    })
}

/// Aggregates records into corpus-level means and the w-score.
///
/// Similarities are summed in sorted order so the result does not depend
/// on record order.
pub fn summarize(records: &[SimplificationRecord], options: &EvalOptions) -> Result<SimplificationReport, SimplifyError> {
    let scored: Vec<&SimplificationRecord> = records.iter().filter(|r| !r.skipped).collect();
    let n_skipped = records.len() - scored.len();
    let (mean_accuracy, mean_similarity) = if scored.is_empty() {
        (0.0, 0.0)
    } else {
        let hits = scored.iter().filter(|r| r.accuracy == 1).count();
        let mut sims: Vec<f64> = scored.iter().map(|r| r.similarity).collect();
        sims.sort_by(f64::total_cmp);
        (hits as f64 / scored.len() as f64, sims.iter().sum::<f64>() / scored.len() as f64)
    };
    let w = w_score(mean_accuracy, mean_similarity.clamp(-1.0, 1.0), options.w1, options.formula)?;
    Ok(SimplificationReport {
        mean_accuracy,
        mean_similarity,
        w_score: w,
        w1: options.w1,
        formula: options.formula,
        n_pairs: records.len(),
        n_skipped,
        prompt_version: SIMPLIFY_PROMPT_VERSION.to_string(),
    })
}

/// Simplifies every item once and scores the result.
///
/// Items run concurrently up to `options.parallelism`; within an item the
/// steps are sequential. A failure aborts the run and names the first
/// failing item in corpus order.
pub fn evaluate_simplification<S, P, E>(
    simplifier: &S,
    proxy: &P,
    embedder: &E,
    eval_set: &Corpus,
    options: &EvalOptions,
) -> Result<(SimplificationReport, Vec<SimplificationRecord>), SimplifyError>
where
    S: Simplifier + ?Sized,
    P: DifficultyClassifier + ?Sized,
    E: Embedder + ?Sized,
{
    if eval_set.is_empty() {
        return Err(SimplifyError::EmptyEvalSet);
    }
    if proxy.scheme() != eval_set.scheme() {
        return Err(SimplifyError::SchemeMismatch {
            proxy: proxy.scheme().name().to_string(),
            corpus: eval_set.scheme().name().to_string(),
        });
    }
    // validate the weight before doing any work
    w_score(1.0, 1.0, options.w1, options.formula)?;
    let results = parallel::map_bounded(eval_set.items(), options.parallelism, |_, item| {
        evaluate_item(simplifier, proxy, embedder, item)
            .map_err(|e| SimplifyError::Item { id: item.id.clone(), source: Box::new(e) })
    });
    let records = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok((summarize(&records, options)?, records))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationStep {
    pub iteration: usize,
    pub text: String,
    pub proxy_level: Label,
    pub similarity_to_step0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    pub steps: Vec<IterationStep>,
    pub complete: bool,
    /// Why the run stopped early, when it did.
    pub failure: Option<String>,
}

/// Applies the simplifier `max_iters` times in a row, classifying each
/// result and comparing it with the original sentence.
///
/// There is no early stop. A backend failure ends the run and returns the
/// steps recorded so far with `complete = false`.
pub fn iterate_simplify<S, P, E>(
    simplifier: &S,
    proxy: &P,
    embedder: &E,
    sentence: &str,
    max_iters: usize,
) -> Result<IterationTrace, SimplifyError>
where
    S: Simplifier + ?Sized,
    P: DifficultyClassifier + ?Sized,
    E: Embedder + ?Sized,
{
    if sentence.trim().is_empty() {
        return Err(SimplifyError::EmptyText);
    }
    if max_iters == 0 {
        return Err(SimplifyError::NoIterations);
    }
    let mut steps = Vec::with_capacity(max_iters + 1);
    let result = (|| -> Result<(), SimplifyError> {
        let origin = embedder.embed(sentence)?;
        let level = proxy.classify(sentence)?.label;
        steps.push(IterationStep {
            iteration: 0,
            text: sentence.to_string(),
            proxy_level: level,
            similarity_to_step0: cosine(&origin, &origin)?,
        });
        for iteration in 1..=max_iters {
            let prev = steps.last().expect("step 0 recorded");
            let text = simplify_once(simplifier, &prev.text, Some(&prev.proxy_level))?;
            let proxy_level = proxy.classify(&text)?.label;
            let similarity_to_step0 = cosine(&origin, &embedder.embed(&text)?)?;
            steps.push(IterationStep { iteration, text, proxy_level, similarity_to_step0 });
        }
        Ok(())
    })();
    Ok(match result {
        Ok(()) => IterationTrace { steps, complete: true, failure: None },
        Err(e) => IterationTrace { steps, complete: false, failure: Some(e.to_string()) },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMean {
    pub iteration: usize,
    pub mean_rank: f64,
    pub mean_similarity: f64,
}

/// Per-iteration mean proxy rank and mean similarity over complete traces
/// of equal length.
pub fn aggregate_traces(traces: &[IterationTrace], scheme: &LabelScheme) -> Result<Vec<IterationMean>, SimplifyError> {
    let first = traces.first().ok_or(SimplifyError::NoTraces)?;
    let expected = first.steps.len();
    for (index, trace) in traces.iter().enumerate() {
        if !trace.complete {
            return Err(SimplifyError::IncompleteTrace {
                index,
                reason: trace.failure.clone().unwrap_or_else(|| "unknown".into()),
            });
        }
        if trace.steps.len() != expected {
            return Err(SimplifyError::TraceLength { index, got: trace.steps.len(), expected });
        }
        if let Some(step) = trace.steps.iter().find(|s| !scheme.contains(&s.proxy_level)) {
            return Err(SimplifyError::ForeignLabel {
                index,
                label: step.proxy_level.name().to_string(),
                scheme: scheme.name().to_string(),
            });
        }
    }
    let n = traces.len() as f64;
    Ok((0..expected)
        .map(|i| IterationMean {
            iteration: i,
            mean_rank: traces.iter().map(|t| t.steps[i].proxy_level.rank() as f64).sum::<f64>() / n,
            mean_similarity: traces.iter().map(|t| t.steps[i].similarity_to_step0).sum::<f64>() / n,
        })
        .collect())
}

/// `iteration,mean_rank,mean_similarity` rows, plot-ready.
pub fn aggregate_csv(means: &[IterationMean]) -> String {
    let mut out = String::from("iteration,mean_rank,mean_similarity\n");
    for m in means {
        out.push_str(&format!("{},{},{}\n", m.iteration, m.mean_rank, m.mean_similarity));
    }
    out
}
