//! Difficulty classifiers and the F1 evaluation harness.
//!
//! Three classifiers share one trait:
//! - [`ReadabilityClassifier`]: a readability score fed through a
//!   [`CalibrationModel`].
//! - [`EmbeddingHeadClassifier`]: softmax regression over text embeddings.
//! - [`RemoteClassifier`]: an LLM asked for a level, optionally with the
//!   assessor context as system prompt.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::calibration::{self, CalibrationError, CalibrationModel};
use crate::corpus::{Corpus, CorpusError};
use crate::parallel;
use crate::providers::{ChatBackend, Embedder, ProviderError};
use crate::readability::{Coefficients, Feature, ReadabilityError};
use crate::scheme::{Label, LabelScheme};
use crate::softmax::{self, Hyper, LinearSoftmax};
use crate::textproc;

/// Assessor context for CEFR-labelled French text (sent as system prompt).
pub const CEFR_ASSESSOR_PROMPT: &str = "Vous êtes un évaluateur linguistique qui utilise le Cadre européen commun \
de référence pour les langues (CECR). Votre tâche est d'attribuer un niveau de compétence linguistique à ce texte, \
en utilisant les niveaux du CECR de A1 (débutant) à C2 (avancé/natif). Évaluez ce texte et attribuez-lui le niveau \
CECR correspondant.";

#[derive(Debug, thiserror::Error)]
pub enum DifficultyError {
    #[error("cannot classify an empty text")]
    EmptyText,
    #[error(transparent)]
    Readability(#[from] ReadabilityError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("no {scheme} label found in reply {reply:?}")]
    UnparseableReply { reply: String, scheme: String },
    #[error("training data has fewer than two classes")]
    SingleClass,
    #[error("evaluation set is empty")]
    EmptyTestSet,
    #[error("classifier scheme `{classifier}` does not match corpus scheme `{corpus}`")]
    SchemeMismatch { classifier: String, corpus: String },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("item `{id}`: {source}")]
    Item { id: String, source: Box<DifficultyError> },
}

impl DifficultyError {
    /// Strips any [`DifficultyError::Item`] wrappers.
    pub fn root(&self) -> &DifficultyError {
        match self {
            DifficultyError::Item { source, .. } => source.root(),
            other => other,
        }
    }
}

/// A predicted label, with class probabilities when the classifier has them.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierOutput {
    pub label: Label,
    pub probabilities: Option<BTreeMap<Label, f64>>,
}

impl ClassifierOutput {
    pub fn label_only(label: Label) -> Self {
        Self { label, probabilities: None }
    }

    /// Picks the most probable label; ties go to the lower rank.
    pub fn from_probabilities(scheme: &LabelScheme, probabilities: Vec<f64>) -> Self {
        let label = scheme.at(softmax::argmax(&probabilities));
        let probabilities = scheme.labels().zip(probabilities).collect();
        Self { label, probabilities: Some(probabilities) }
    }

    /// Probabilities in rank order.
    pub fn probability_vec(&self) -> Option<Vec<f64>> {
        self.probabilities.as_ref().map(|p| p.values().copied().collect())
    }
}

impl Serialize for ClassifierOutput {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        struct Probs<'a>(&'a BTreeMap<Label, f64>);
        impl Serialize for Probs<'_> {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                let mut map = serializer.serialize_map(Some(self.0.len()))?;
                for (label, p) in self.0 {
                    map.serialize_entry(label.name(), p)?;
                }
                map.end()
            }
        }
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("label", &self.label)?;
        if let Some(p) = &self.probabilities {
            map.serialize_entry("probabilities", &Probs(p))?;
        }
        map.end()
    }
}

/// `f : text -> difficulty label`.
pub trait DifficultyClassifier: Send + Sync {
    fn scheme(&self) -> &LabelScheme;

    fn classify(&self, text: &str) -> Result<ClassifierOutput, DifficultyError>;
}

impl<T: DifficultyClassifier + ?Sized> DifficultyClassifier for Arc<T> {
    fn scheme(&self) -> &LabelScheme {
        (**self).scheme()
    }

    fn classify(&self, text: &str) -> Result<ClassifierOutput, DifficultyError> {
        (**self).classify(text)
    }
}

impl<T: DifficultyClassifier + ?Sized> DifficultyClassifier for Box<T> {
    fn scheme(&self) -> &LabelScheme {
        (**self).scheme()
    }

    fn classify(&self, text: &str) -> Result<ClassifierOutput, DifficultyError> {
        (**self).classify(text)
    }
}

pub fn classify<C: DifficultyClassifier + ?Sized>(classifier: &C, text: &str) -> Result<ClassifierOutput, DifficultyError> {
    classifier.classify(text)
}

fn require_text(text: &str) -> Result<(), DifficultyError> {
    if text.trim().is_empty() {
        Err(DifficultyError::EmptyText)
    } else {
        Ok(())
    }
}

/// Finds the first scheme label that appears as a standalone token in
/// `reply`, ignoring case. Tokens are maximal alphanumeric runs, so `B2.`
/// and `(B2)` match but `B22` does not.
pub fn parse_level_response(reply: &str, scheme: &LabelScheme) -> Result<Label, DifficultyError> {
    reply
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .find_map(|token| {
            let token = token.to_lowercase();
            scheme.label_names().iter().position(|name| name.to_lowercase() == token)
        })
        .map(|rank| scheme.at(rank))
        .ok_or_else(|| DifficultyError::UnparseableReply { reply: reply.to_string(), scheme: scheme.name().to_string() })
}

/// Readability score followed by a fitted calibration model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadabilityClassifier {
    pub feature: Feature,
    #[serde(default)]
    pub coefficients: Coefficients,
    pub model: CalibrationModel,
}

impl ReadabilityClassifier {
    pub fn new(feature: Feature, coefficients: Coefficients, model: CalibrationModel) -> Result<Self, DifficultyError> {
        model.validate()?;
        Ok(Self { feature, coefficients, model })
    }

    pub fn score(&self, text: &str) -> Result<f64, DifficultyError> {
        Ok(self.coefficients.score(self.feature, &textproc::compute_stats(text))?)
    }

    /// Fits the calibration on `train`, which must be fully labeled.
    pub fn train(train: &Corpus, feature: Feature, coefficients: Coefficients, hyper: &Hyper) -> Result<Self, DifficultyError> {
        train.require_labels()?;
        let pairs = train
            .items()
            .iter()
            .map(|item| {
                let score = coefficients
                    .score(feature, &textproc::compute_stats(&item.text))
                    .map_err(|e| DifficultyError::Item { id: item.id.clone(), source: Box::new(e.into()) })?;
                Ok((score, item.label.clone().expect("labels checked")))
            })
            .collect::<Result<Vec<_>, DifficultyError>>()?;
        let model = calibration::fit_calibration(&pairs, train.scheme(), hyper)?;
        Ok(Self { feature, coefficients, model })
    }
}

impl DifficultyClassifier for ReadabilityClassifier {
    fn scheme(&self) -> &LabelScheme {
        &self.model.scheme
    }

    fn classify(&self, text: &str) -> Result<ClassifierOutput, DifficultyError> {
        require_text(text)?;
        Ok(calibration::predict_calibrated(&self.model, self.score(text)?)?)
    }
}

/// Fitted softmax head over embedding vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingHead {
    pub scheme: LabelScheme,
    pub dim: usize,
    pub linear: LinearSoftmax,
    pub hyper: Hyper,
    pub training_loss: f64,
    #[serde(skip)]
    pub loss_trace: Vec<f64>,
}

impl EmbeddingHead {
    pub fn validate(&self) -> Result<(), DifficultyError> {
        if self.linear.n_classes() != self.scheme.len() || self.linear.dim() != self.dim {
            return Err(DifficultyError::InvalidModel(format!(
                "head shape {}x{} does not match scheme size {} and dim {}",
                self.linear.n_classes(),
                self.linear.dim(),
                self.scheme.len(),
                self.dim
            )));
        }
        if !self.linear.is_finite() {
            return Err(DifficultyError::InvalidModel("non-finite head parameter".into()));
        }
        Ok(())
    }

    pub fn probabilities(&self, embedding: &[f64]) -> Result<Vec<f64>, DifficultyError> {
        if embedding.len() != self.dim {
            return Err(ProviderError::DimMismatch { expected: self.dim, got: embedding.len() }.into());
        }
        Ok(self.linear.probabilities(embedding))
    }
}

/// Embeds every training text and fits a softmax head on the vectors.
pub fn train_embedding_head<E: Embedder + ?Sized>(train: &Corpus, embedder: &E, hyper: &Hyper) -> Result<EmbeddingHead, DifficultyError> {
    hyper.validate().map_err(CalibrationError::InvalidHyper)?;
    train.require_labels()?;
    let ys: Vec<usize> = train.items().iter().map(|i| i.label.as_ref().expect("labels checked").rank()).collect();
    if ys.iter().all(|y| Some(y) == ys.first()) {
        return Err(DifficultyError::SingleClass);
    }
    let mut xs = Vec::with_capacity(train.len());
    for item in train.items() {
        let v = embedder
            .embed(&item.text)
            .map_err(|e| DifficultyError::Item { id: item.id.clone(), source: Box::new(e.into()) })?;
        if let Some(first) = xs.first().map(Vec::len) {
            if first != v.dim() {
                return Err(ProviderError::DimMismatch { expected: first, got: v.dim() }.into());
            }
        }
        xs.push(v.into_values());
    }
    let dim = xs[0].len();
    let fit = softmax::fit(&xs, &ys, train.scheme().len(), dim, hyper);
    Ok(EmbeddingHead {
        scheme: train.scheme().clone(),
        dim,
        training_loss: fit.final_loss(),
        loss_trace: fit.loss_trace,
        linear: fit.model,
        hyper: *hyper,
    })
}

pub struct EmbeddingHeadClassifier<E> {
    head: EmbeddingHead,
    embedder: E,
}

impl<E: Embedder> EmbeddingHeadClassifier<E> {
    pub fn new(head: EmbeddingHead, embedder: E) -> Result<Self, DifficultyError> {
        head.validate()?;
        Ok(Self { head, embedder })
    }

    pub fn head(&self) -> &EmbeddingHead {
        &self.head
    }
}

impl<E: Embedder> DifficultyClassifier for EmbeddingHeadClassifier<E> {
    fn scheme(&self) -> &LabelScheme {
        &self.head.scheme
    }

    fn classify(&self, text: &str) -> Result<ClassifierOutput, DifficultyError> {
        require_text(text)?;
        let v = self.embedder.embed(text)?;
        let p = self.head.probabilities(v.values())?;
        Ok(ClassifierOutput::from_probabilities(&self.head.scheme, p))
    }
}

/// Builds the assessor system prompt for a scheme. CEFR gets the fixed
/// French assessor context; other schemes get the same instruction with
/// their own labels.
pub fn assessor_prompt(scheme: &LabelScheme) -> String {
    if scheme.label_names() == LabelScheme::cefr().label_names() {
        return CEFR_ASSESSOR_PROMPT.to_string();
    }
    let names = scheme.label_names();
    format!(
        "Vous êtes un évaluateur de la difficulté des textes en français. Votre tâche est d'attribuer un niveau de \
         difficulté à ce texte, parmi les niveaux {} (du plus facile au plus difficile). Évaluez ce texte et \
         attribuez-lui le niveau correspondant.",
        names.join(", ")
    )
}

/// Asks a chat backend for the level and parses the reply.
pub struct RemoteClassifier<C> {
    chat: C,
    scheme: LabelScheme,
    system_prompt: String,
}

impl<C: ChatBackend> RemoteClassifier<C> {
    /// `with_context` selects whether the assessor context is sent as the
    /// system prompt or the text is sent alone.
    pub fn new(chat: C, scheme: LabelScheme, with_context: bool) -> Self {
        let system_prompt = if with_context { assessor_prompt(&scheme) } else { String::new() };
        Self { chat, scheme, system_prompt }
    }

    pub fn system_prompt(&self) -> &str {
        &self.system_prompt
    }
}

impl<C: ChatBackend> DifficultyClassifier for RemoteClassifier<C> {
    fn scheme(&self) -> &LabelScheme {
        &self.scheme
    }

    fn classify(&self, text: &str) -> Result<ClassifierOutput, DifficultyError> {
        require_text(text)?;
        let reply = self.chat.complete(&self.system_prompt, text)?;
        Ok(ClassifierOutput::label_only(parse_level_response(&reply, &self.scheme)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyReport {
    pub labels: Vec<String>,
    /// Rows are gold labels, columns predictions.
    pub confusion: Vec<Vec<usize>>,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub n_evaluated: usize,
    /// Items whose classifier reply held no label; excluded from every count above.
    pub n_misparsed: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl DifficultyReport {
    pub fn from_confusion(labels: Vec<String>, confusion: Vec<Vec<usize>>, n_misparsed: usize) -> Self {
        let k = labels.len();
        assert!(confusion.len() == k && confusion.iter().all(|r| r.len() == k), "confusion must be K x K");
        let support: Vec<usize> = confusion.iter().map(|row| row.iter().sum()).collect();
        let predicted: Vec<usize> = (0..k).map(|c| confusion.iter().map(|row| row[c]).sum()).collect();
        let n_evaluated: usize = support.iter().sum();

        let per_class_precision: Vec<f64> = (0..k).map(|c| ratio(confusion[c][c], predicted[c])).collect();
        let per_class_recall: Vec<f64> = (0..k).map(|c| ratio(confusion[c][c], support[c])).collect();
        let per_class_f1: Vec<f64> = per_class_precision
            .iter()
            .zip(&per_class_recall)
            .map(|(p, r)| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
            .collect();
        let macro_f1 = per_class_f1.iter().sum::<f64>() / k as f64;
        let weighted_f1 = if n_evaluated == 0 {
            0.0
        } else {
            per_class_f1.iter().zip(&support).map(|(f, s)| f * *s as f64).sum::<f64>() / n_evaluated as f64
        };
        Self {
            labels,
            confusion,
            per_class_precision,
            per_class_recall,
            per_class_f1,
            macro_f1,
            weighted_f1,
            n_evaluated,
            n_misparsed,
        }
    }

    /// Builds the report from `(gold, predicted)` rank pairs.
    pub fn from_predictions(scheme: &LabelScheme, pairs: &[(usize, usize)], n_misparsed: usize) -> Self {
        let k = scheme.len();
        let mut confusion = vec![vec![0; k]; k];
        for &(gold, pred) in pairs {
            confusion[gold][pred] += 1;
        }
        Self::from_confusion(scheme.label_names().to_vec(), confusion, n_misparsed)
    }

    /// Confusion matrix as CSV: header `gold\predicted,<labels...>`, one row per gold label.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("gold\\predicted");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (label, row) in self.labels.iter().zip(&self.confusion) {
            out.push_str(label);
            for n in row {
                out.push(',');
                out.push_str(&n.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Classifies every item of a labeled test set and reports per-class and
/// averaged F1.
///
/// Replies without a recognisable label are counted in `n_misparsed` and
/// left out of the confusion matrix. Any other failure aborts the run and
/// names the first failing item in corpus order.
pub fn evaluate_difficulty<C: DifficultyClassifier + ?Sized>(
    classifier: &C,
    test: &Corpus,
    parallelism: usize,
) -> Result<DifficultyReport, DifficultyError> {
    if test.is_empty() {
        return Err(DifficultyError::EmptyTestSet);
    }
    test.require_labels()?;
    if classifier.scheme() != test.scheme() {
        return Err(DifficultyError::SchemeMismatch {
            classifier: classifier.scheme().name().to_string(),
            corpus: test.scheme().name().to_string(),
        });
    }
    let outcomes = parallel::map_bounded(test.items(), parallelism, |_, item| classifier.classify(&item.text));
    let mut pairs = Vec::with_capacity(outcomes.len());
    let mut misparsed = 0;
    for (item, outcome) in test.items().iter().zip(outcomes) {
        match outcome {
            Ok(out) => pairs.push((item.label.as_ref().expect("labels checked").rank(), out.label.rank())),
            Err(DifficultyError::UnparseableReply { .. }) => misparsed += 1,
            Err(e) => return Err(DifficultyError::Item { id: item.id.clone(), source: Box::new(e) }),
        }
    }
    Ok(DifficultyReport::from_predictions(test.scheme(), &pairs, misparsed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabeledText;
    use crate::providers::{EchoChat, FixedChat, MockEmbedder};

    #[test]
    fn parses_levels() {
        let s = LabelScheme::cefr();
        assert_eq!(parse_level_response("The text is B2 level.", &s).unwrap().name(), "B2");
        assert_eq!(parse_level_response("Between B1 and B2, I'd say B1.", &s).unwrap().name(), "B1");
        assert_eq!(parse_level_response("niveau c1", &s).unwrap().name(), "C1");
        assert!(matches!(parse_level_response("intermediate", &s), Err(DifficultyError::UnparseableReply { .. })));
        assert!(parse_level_response("B22 or AB2", &s).is_err());
        assert_eq!(parse_level_response("Level3 overall", &LabelScheme::ljl()).unwrap().name(), "level3");
    }

    #[test]
    fn remote_classifier_uses_reply() {
        let s = LabelScheme::cefr();
        let c = RemoteClassifier::new(FixedChat("B2".into()), s.clone(), true);
        assert_eq!(c.classify("Un texte.").unwrap().label.name(), "B2");
        let c = RemoteClassifier::new(FixedChat("I cannot assess this".into()), s.clone(), true);
        assert!(matches!(c.classify("Un texte."), Err(DifficultyError::UnparseableReply { .. })));
        assert!(matches!(c.classify("  "), Err(DifficultyError::EmptyText)));
    }

    #[test]
    fn context_toggle_controls_system_prompt() {
        let s = LabelScheme::cefr();
        assert_eq!(RemoteClassifier::new(EchoChat, s.clone(), true).system_prompt(), CEFR_ASSESSOR_PROMPT);
        assert_eq!(RemoteClassifier::new(EchoChat, s, false).system_prompt(), "");
        let ljl = assessor_prompt(&LabelScheme::ljl());
        assert!(ljl.contains("level1, level2, level3, level4"));
    }

    #[test]
    fn constant_classifier_f1() {
        let s = LabelScheme::new("two", ["easy", "hard"]).unwrap();
        let pairs = [(0, 0), (0, 0), (1, 0), (1, 0)];
        let r = DifficultyReport::from_predictions(&s, &pairs, 0);
        assert_eq!(r.per_class_f1, vec![2.0 / 3.0, 0.0]);
        assert_eq!(r.macro_f1, 1.0 / 3.0);
        assert_eq!(r.confusion, vec![vec![2, 0], vec![2, 0]]);
        assert_eq!(r.confusion_csv(), "gold\\predicted,easy,hard\neasy,2,0\nhard,2,0\n");
    }

    fn two_cluster_corpus() -> Corpus {
        let s = LabelScheme::new("two", ["easy", "hard"]).unwrap();
        let easy = ["aaa bbb", "bbb aaa", "aab abb", "aaaa bbbb", "ab ab ab"];
        let hard = ["xyz zyx", "zzz yyy", "xxy yzz", "xyzxyz", "zy zy zy"];
        let items = easy
            .iter()
            .map(|t| (t, 0))
            .chain(hard.iter().map(|t| (t, 1)))
            .enumerate()
            .map(|(i, (t, r))| LabeledText { id: i.to_string(), text: t.to_string(), label: Some(s.at(r)), source: "x".into() })
            .collect();
        Corpus::new(s, items).unwrap()
    }

    #[test]
    fn embedding_head_separates_clusters() {
        let corpus = two_cluster_corpus();
        let embedder = MockEmbedder::new(64).unwrap();
        let head = train_embedding_head(&corpus, &embedder, &Hyper::default()).unwrap();
        let clf = EmbeddingHeadClassifier::new(head, embedder).unwrap();
        let report = evaluate_difficulty(&clf, &corpus, 1).unwrap();
        assert_eq!(report.macro_f1, 1.0);
        assert_eq!(report.confusion, vec![vec![5, 0], vec![0, 5]]);
    }

    #[test]
    fn zero_epoch_head_is_uniform() {
        let corpus = two_cluster_corpus();
        let embedder = MockEmbedder::new(16).unwrap();
        let head = train_embedding_head(&corpus, &embedder, &Hyper { max_epochs: 0, ..Hyper::default() }).unwrap();
        let clf = EmbeddingHeadClassifier::new(head, embedder).unwrap();
        let out = clf.classify("quelque chose").unwrap();
        assert_eq!(out.probability_vec().unwrap(), vec![0.5, 0.5]);
        assert_eq!(out.label.rank(), 0);
    }

    #[test]
    fn head_rejects_single_class() {
        let s = LabelScheme::cefr();
        let items = (0..3)
            .map(|i| LabeledText { id: i.to_string(), text: "abc".into(), label: Some(s.at(2)), source: String::new() })
            .collect();
        let corpus = Corpus::new(s, items).unwrap();
        let e = MockEmbedder::new(8).unwrap();
        assert!(matches!(train_embedding_head(&corpus, &e, &Hyper::default()), Err(DifficultyError::SingleClass)));
    }

    #[test]
    fn evaluation_counts_misparses_and_checks_inputs() {
        let s = LabelScheme::cefr();
        let items = (0..4)
            .map(|i| LabeledText { id: i.to_string(), text: format!("texte {i}"), label: Some(s.at(i)), source: String::new() })
            .collect();
        let corpus = Corpus::new(s.clone(), items).unwrap();
        let clf = RemoteClassifier::new(FixedChat("aucune idée".into()), s.clone(), false);
        let report = evaluate_difficulty(&clf, &corpus, 2).unwrap();
        assert_eq!((report.n_evaluated, report.n_misparsed), (0, 4));
        assert_eq!(report.macro_f1, 0.0);
        assert!(matches!(evaluate_difficulty(&clf, &Corpus::empty(s), 1), Err(DifficultyError::EmptyTestSet)));
        let other = RemoteClassifier::new(FixedChat("level1".into()), LabelScheme::ljl(), false);
        assert!(matches!(evaluate_difficulty(&other, &corpus, 1), Err(DifficultyError::SchemeMismatch { .. })));
    }

    #[test]
    fn output_serializes_probabilities_by_name() {
        let s = LabelScheme::new("two", ["easy", "hard"]).unwrap();
        let out = ClassifierOutput::from_probabilities(&s, vec![0.25, 0.75]);
        assert_eq!(
            serde_json::to_value(&out).unwrap(),
            serde_json::json!({"label": "hard", "probabilities": {"easy": 0.25, "hard": 0.75}})
        );
    }
}
