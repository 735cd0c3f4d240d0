use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{self, Corpus, Format, LabeledText};
use crate::difficulty::{
    self, DifficultyClassifier, EmbeddingHead, EmbeddingHeadClassifier, ReadabilityClassifier, RemoteClassifier,
};
use crate::output;
use crate::parallel;
use crate::providers::{
    Embedder, HttpTransport, MockAssessorChat, MockEmbedder, ProviderConfig, RemoteChat, RemoteEmbedder, Transport,
};
use crate::readability::{Coefficients, Feature};
use crate::scheme::{Label, LabelScheme};
use crate::simplify::{self, ChatSimplifier, EvalOptions, RuleSimplifier, Simplifier, WScoreFormula};
use crate::softmax::Hyper;
use crate::textproc;

use super::{ClassifierKind, CliError, Command, Context, GlobalArgs, RunConfig};

pub(super) struct Session<'c, 'a> {
    config: RunConfig,
    global: GlobalArgs,
    scheme: LabelScheme,
    ctx: &'c mut Context<'a>,
}

#[derive(Serialize)]
struct ReadabilityRow<'t> {
    id: &'t str,
    gfi: f64,
    fkgl: f64,
    ari: f64,
}

impl<'c, 'a> Session<'c, 'a> {
    pub(super) fn new(config: RunConfig, global: GlobalArgs, ctx: &'c mut Context<'a>) -> Result<Self, CliError> {
        let scheme = LabelScheme::by_name(&config.scheme)?;
        Ok(Self { config, global, scheme, ctx })
    }

    pub(super) fn run(&mut self, command: Command) -> Result<(), CliError> {
        match command {
            Command::Stats => self.stats(),
            Command::Readability { emit } => self.readability(&emit),
            Command::Calibrate { feature, epochs, learning_rate, l2 } => {
                let hyper = self.hyper(epochs, learning_rate, l2)?;
                self.calibrate(feature.unwrap_or(self.config.classifier.feature), &hyper)
            }
            Command::TrainHead { epochs, learning_rate, l2 } => {
                let hyper = self.hyper(epochs, learning_rate, l2)?;
                self.train_head(&hyper)
            }
            Command::Classify { text } => self.classify(text),
            Command::EvalDifficulty { confusion_csv } => self.eval_difficulty(confusion_csv),
            Command::Simplify { text, level } => self.simplify(&text, level),
            Command::EvalSimplification { per_level, levels, literal_wscore } => {
                self.eval_simplification(per_level, &levels, literal_wscore)
            }
            Command::Iterate { text, max_iters, level, limit } => self.iterate(text, max_iters, level, limit),
            Command::Split { fraction } => self.split(fraction),
        }
    }

    // ---- inputs and outputs ----

    fn format_for(&self, path: &Path) -> Result<Format, CliError> {
        if let Some(f) = &self.global.input_format {
            return f.parse().map_err(|e: corpus::CorpusError| CliError::Usage(e.to_string()));
        }
        Format::from_path(path).ok_or_else(|| {
            CliError::Usage(format!("cannot tell the format of {}; pass --input-format csv|jsonl", path.display()))
        })
    }

    /// Every `--in` file, with empty `source` fields set to the file stem.
    fn corpora(&self) -> Result<Vec<Corpus>, CliError> {
        if self.global.inputs.is_empty() {
            return Err(CliError::Usage("this command needs at least one --in <corpus>".into()));
        }
        let mut out = Vec::with_capacity(self.global.inputs.len());
        for path in &self.global.inputs {
            let format = self.format_for(path)?;
            let loaded = corpus::load_corpus(path, format, &self.scheme)?;
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let items = loaded
                .items()
                .iter()
                .cloned()
                .map(|mut item| {
                    if item.source.is_empty() {
                        item.source = stem.clone();
                    }
                    item
                })
                .collect();
            out.push(Corpus::new(self.scheme.clone(), items)?);
        }
        Ok(out)
    }

    /// All inputs concatenated into one corpus; ids must stay unique.
    fn merged(&self) -> Result<Corpus, CliError> {
        let corpora = self.corpora()?;
        if corpora.len() == 1 {
            return Ok(corpora.into_iter().next().expect("one corpus"));
        }
        let items: Vec<LabeledText> = corpora.iter().flat_map(|c| c.items().iter().cloned()).collect();
        Ok(Corpus::new(self.scheme.clone(), items)?)
    }

    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self
            .global
            .out
            .clone()
            .or_else(|| self.config.output_dir.clone())
            .ok_or_else(|| CliError::Usage("this command needs --out <directory>".into()))?;
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
        Ok(dir)
    }

    /// Writes to `--out` atomically, or to stdout.
    fn emit(&mut self, bytes: &[u8]) -> Result<(), CliError> {
        match &self.global.out {
            Some(path) => write_file(path, bytes),
            None => self.ctx.stdout.write_all(bytes).map_err(CliError::from),
        }
    }

    fn note(&mut self, message: &str) {
        let _ = writeln!(self.ctx.stderr, "{message}");
    }

    fn hyper(&self, epochs: Option<usize>, learning_rate: Option<f64>, l2: Option<f64>) -> Result<Hyper, CliError> {
        let mut hyper = self.config.hyper;
        if let Some(e) = epochs {
            hyper.max_epochs = e;
        }
        if let Some(lr) = learning_rate {
            hyper.learning_rate = lr;
        }
        if let Some(l2) = l2 {
            hyper.l2 = l2;
        }
        hyper.validate().map_err(CliError::Usage)?;
        Ok(hyper)
    }

    // ---- backends ----

    fn transport(&mut self) -> Result<Arc<dyn Transport>, CliError> {
        if let Some(t) = &self.ctx.transport {
            return Ok(Arc::clone(t));
        }
        let t: Arc<dyn Transport> = Arc::new(HttpTransport::new().map_err(|e| CliError::Provider(e.to_string()))?);
        self.ctx.transport = Some(Arc::clone(&t));
        Ok(t)
    }

    fn remote_chat(&mut self, config: ProviderConfig) -> Result<RemoteChat, CliError> {
        let transport = self.transport()?;
        Ok(RemoteChat::new(config, transport)?.with_seed(self.config.seed))
    }

    fn embedder(&mut self) -> Result<Arc<dyn Embedder>, CliError> {
        if self.global.mock {
            return Ok(Arc::new(MockEmbedder::new(self.config.mock_embedding_dim)?));
        }
        let transport = self.transport()?;
        let config = self.config.providers.embedding.clone();
        Ok(Arc::new(RemoteEmbedder::new(config, transport)?.with_seed(self.config.seed)))
    }

    fn model_path(&self, what: &str) -> Result<PathBuf, CliError> {
        self.config
            .classifier
            .model_path
            .clone()
            .ok_or_else(|| CliError::Usage(format!("the {what} classifier needs --model <file>")))
    }

    fn classifier(&mut self) -> Result<Box<dyn DifficultyClassifier>, CliError> {
        let classifier: Box<dyn DifficultyClassifier> = match self.config.classifier.kind {
            ClassifierKind::Readability => {
                let model: ReadabilityClassifier = read_json(&self.model_path("readability")?)?;
                model.model.validate().map_err(|e| CliError::Data(e.to_string()))?;
                Box::new(model)
            }
            ClassifierKind::Head => {
                let head: EmbeddingHead = read_json(&self.model_path("head")?)?;
                let embedder = self.embedder()?;
                Box::new(EmbeddingHeadClassifier::new(head, embedder)?)
            }
            ClassifierKind::Remote => {
                let with_context = self.config.classifier.with_context;
                if self.global.mock {
                    Box::new(RemoteClassifier::new(MockAssessorChat::new(self.scheme.clone()), self.scheme.clone(), with_context))
                } else {
                    let chat = self.remote_chat(self.config.providers.classifier.clone())?;
                    Box::new(RemoteClassifier::new(chat, self.scheme.clone(), with_context))
                }
            }
        };
        if classifier.scheme() != &self.scheme {
            return Err(CliError::Usage(format!(
                "model uses the {} scheme but --scheme is {}",
                classifier.scheme().name(),
                self.scheme.name()
            )));
        }
        Ok(classifier)
    }

    fn simplifier(&mut self) -> Result<Box<dyn Simplifier>, CliError> {
        if self.global.mock {
            return Ok(Box::new(RuleSimplifier::default()));
        }
        let chat = self.remote_chat(self.config.providers.generation.clone())?;
        Ok(Box::new(ChatSimplifier::new(chat, self.scheme.clone())))
    }

    fn level(&self, name: &str) -> Result<Label, CliError> {
        Ok(self.scheme.label(name)?)
    }

    // ---- commands ----

    fn stats(&mut self) -> Result<(), CliError> {
        let corpus = self.merged()?;
        let stats = corpus::corpus_stats(&corpus);
        self.emit(&output::to_json_pretty(&stats))
    }

    fn readability(&mut self, emit: &str) -> Result<(), CliError> {
        let corpus = self.merged()?;
        let coefficients = Coefficients::default();
        let mut rows = Vec::with_capacity(corpus.len());
        for item in corpus.items() {
            let s = coefficients
                .scores(&textproc::compute_stats(&item.text))
                .map_err(|e| CliError::Data(format!("item {}: {e}", item.id)))?;
            rows.push(ReadabilityRow { id: &item.id, gfi: s.gfi, fkgl: s.fkgl, ari: s.ari });
        }
        let bytes = if emit == "json" {
            output::to_json_pretty(&rows)
        } else {
            let mut wtr = csv::Writer::from_writer(Vec::new());
            for row in &rows {
                wtr.serialize(row).map_err(|e| CliError::Data(e.to_string()))?;
            }
            if rows.is_empty() {
                wtr.write_record(["id", "gfi", "fkgl", "ari"]).map_err(|e| CliError::Data(e.to_string()))?;
            }
            wtr.into_inner().map_err(|e| CliError::Data(e.to_string()))?
        };
        self.emit(&bytes)
    }

    fn calibrate(&mut self, feature: Feature, hyper: &Hyper) -> Result<(), CliError> {
        let train = self.merged()?;
        let model = ReadabilityClassifier::train(&train, feature, Coefficients::default(), hyper)?;
        self.note(&format!(
            "calibrated {feature} on {} items: loss {:.6} after {} epochs",
            train.len(),
            model.model.training_loss,
            model.model.loss_trace.len().saturating_sub(1)
        ));
        self.emit(&output::to_json_pretty(&model))
    }

    fn train_head(&mut self, hyper: &Hyper) -> Result<(), CliError> {
        let train = self.merged()?;
        let embedder = self.embedder()?;
        let head = difficulty::train_embedding_head(&train, &embedder, hyper)?;
        self.note(&format!("trained head on {} items: loss {:.6}", train.len(), head.training_loss));
        self.emit(&output::to_json_pretty(&head))
    }

    fn classify(&mut self, text: Option<String>) -> Result<(), CliError> {
        let classifier = self.classifier()?;
        if let Some(text) = text {
            let out = difficulty::classify(&classifier, &text)?;
            return self.emit(&output::to_json_pretty(&out));
        }
        let corpus = self.merged()?;
        let outputs = parallel::map_bounded(corpus.items(), self.config.parallelism, |_, item| {
            difficulty::classify(&classifier, &item.text)
        });
        let mut rows = Vec::with_capacity(outputs.len());
        for (item, out) in corpus.items().iter().zip(outputs) {
            let out = out.map_err(|e| difficulty::DifficultyError::Item { id: item.id.clone(), source: Box::new(e) })?;
            let mut value = serde_json::to_value(&out).map_err(|e| CliError::Data(e.to_string()))?;
            value
                .as_object_mut()
                .expect("classifier output is an object")
                .insert("id".into(), serde_json::Value::String(item.id.clone()));
            rows.push(value);
        }
        self.emit(&output::to_jsonl(&rows))
    }

    fn eval_difficulty(&mut self, confusion_csv: Option<PathBuf>) -> Result<(), CliError> {
        let test = self.merged()?;
        let classifier = self.classifier()?;
        let report = difficulty::evaluate_difficulty(&classifier, &test, self.config.parallelism)?;
        if report.n_misparsed > 0 {
            self.note(&format!("{} replies named no level and were left out", report.n_misparsed));
        }
        if let Some(path) = confusion_csv {
            write_file(&path, report.confusion_csv().as_bytes())?;
        }
        self.emit(&output::to_json_pretty(&report))
    }

    fn simplify(&mut self, text: &str, level: Option<String>) -> Result<(), CliError> {
        let level = level.map(|l| self.level(&l)).transpose()?;
        let simplifier = self.simplifier()?;
        let mut simplified = simplify::simplify_once(&simplifier, text, level.as_ref())?;
        simplified.push('\n');
        self.emit(simplified.as_bytes())
    }

    fn eval_simplification(&mut self, per_level: Option<usize>, levels: &[String], literal: bool) -> Result<(), CliError> {
        let out_dir = self.out_dir()?;
        let eval_set = match per_level {
            Some(n) => {
                let levels: Vec<Label> = if levels.is_empty() {
                    self.scheme.labels().skip(1).collect()
                } else {
                    levels.iter().map(|l| self.level(l)).collect::<Result<_, _>>()?
                };
                let corpora = self.corpora()?;
                corpus::sample_eval_set(&corpora, n, &levels, self.config.seed)?
            }
            None if !levels.is_empty() => return Err(CliError::Usage("--levels needs --per-level".into())),
            None => self.merged()?,
        };
        let simplifier = self.simplifier()?;
        let proxy = self.classifier()?;
        let embedder = self.embedder()?;
        let options = EvalOptions {
            w1: self.config.w1,
            formula: if literal { WScoreFormula::Literal } else { WScoreFormula::Harmonic },
            parallelism: self.config.parallelism,
        };
        let (report, records) = simplify::evaluate_simplification(&simplifier, &proxy, &embedder, &eval_set, &options)?;
        write_file(&out_dir.join("records.jsonl"), &output::to_jsonl(&records))?;
        write_file(&out_dir.join("report.json"), &output::to_json_pretty(&report))?;
        self.note(&format!(
            "{} pairs ({} skipped): accuracy {:.4}, similarity {:.4}, w-score {:.4}",
            report.n_pairs, report.n_skipped, report.mean_accuracy, report.mean_similarity, report.w_score
        ));
        Ok(())
    }

    fn iterate(&mut self, text: Option<String>, max_iters: usize, level: Option<String>, limit: Option<usize>) -> Result<(), CliError> {
        let out_dir = self.out_dir()?;
        let sentences: Vec<String> = match text {
            Some(t) => vec![t],
            None => {
                let level = level.map(|l| self.level(&l)).transpose()?;
                let corpus = self.merged()?;
                let pool: Vec<String> = corpus
                    .items()
                    .iter()
                    .filter(|item| level.is_none() || item.label == level)
                    .map(|item| item.text.clone())
                    .collect();
                match limit {
                    Some(n) if n < pool.len() => {
                        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
                        let mut picks = rand::seq::index::sample(&mut rng, pool.len(), n).into_vec();
                        picks.sort_unstable();
                        picks.into_iter().map(|i| pool[i].clone()).collect()
                    }
                    _ => pool,
                }
            }
        };
        if sentences.is_empty() {
            return Err(CliError::Data("no sentences to simplify".into()));
        }
        let simplifier = self.simplifier()?;
        let proxy = self.classifier()?;
        let embedder = self.embedder()?;
        let traces = parallel::map_bounded(&sentences, self.config.parallelism, |_, s| {
            simplify::iterate_simplify(&simplifier, &proxy, &embedder, s, max_iters)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        write_file(&out_dir.join("traces.jsonl"), &output::to_jsonl(&traces))?;
        let means = simplify::aggregate_traces(&traces, &self.scheme).map_err(|e| match e {
            simplify::SimplifyError::IncompleteTrace { .. } => CliError::Provider(e.to_string()),
            other => other.into(),
        })?;
        write_file(&out_dir.join("aggregate.csv"), simplify::aggregate_csv(&means).as_bytes())
    }

    fn split(&mut self, fraction: f64) -> Result<(), CliError> {
        let out_dir = self.out_dir()?;
        let corpus = self.merged()?;
        let format = self.format_for(&self.global.inputs[0])?;
        let (train, test) = corpus::split_corpus(&corpus, fraction, self.config.seed)?;
        let ext = match format {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        };
        for (name, part) in [("train", &train), ("test", &test)] {
            let path = out_dir.join(format!("{name}.{ext}"));
            corpus::save_corpus(part, &path, format)
                .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        }
        self.note(&format!("{} train / {} test", train.len(), test.len()));
        Ok(())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    output::write_atomic(path, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("invalid model {}: {e}", path.display())))
}
