use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::providers::ProviderConfig;
use crate::readability::Feature;
use crate::softmax::Hyper;

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    /// Readability score + calibration model (`calibrate` output).
    Readability,
    /// Embedding softmax head (`train-head` output).
    Head,
    /// LLM assessor over the classifier provider.
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    pub model_path: Option<PathBuf>,
    /// Feature used when calibrating a readability classifier.
    pub feature: Feature,
    /// Send the assessor context as system prompt (remote classifier).
    pub with_context: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { kind: ClassifierKind::Remote, model_path: None, feature: Feature::Fkgl, with_context: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSet {
    pub generation: ProviderConfig,
    pub embedding: ProviderConfig,
    pub classifier: ProviderConfig,
}

impl Default for ProviderSet {
    fn default() -> Self {
        Self {
            generation: ProviderConfig::default(),
            embedding: ProviderConfig { model_id: "text-embedding-ada-002".into(), ..ProviderConfig::default() },
            classifier: ProviderConfig::default(),
        }
    }
}

impl ProviderSet {
    pub fn role_mut(&mut self, role: &str) -> Option<&mut ProviderConfig> {
        match role {
            "generation" => Some(&mut self.generation),
            "embedding" => Some(&mut self.embedding),
            "classifier" => Some(&mut self.classifier),
            _ => None,
        }
    }
}

/// Experiment settings: a JSON file, then command-line overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub scheme: String,
    pub seed: u64,
    pub parallelism: usize,
    pub w1: f64,
    pub output_dir: Option<PathBuf>,
    pub classifier: ClassifierConfig,
    pub providers: ProviderSet,
    pub hyper: Hyper,
    pub mock_embedding_dim: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scheme: "cefr".into(),
            seed: 0,
            parallelism: 1,
            w1: 0.5,
            output_dir: None,
            classifier: ClassifierConfig::default(),
            providers: ProviderSet::default(),
            hyper: Hyper::default(),
            mock_embedding_dim: 256,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Applies one `--provider.<role>.<field>` override.
    pub fn apply_provider_override(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let (role, field) = key
            .split_once('.')
            .ok_or_else(|| CliError::Usage(format!("expected --provider.<role>.<field>, got --provider.{key}")))?;
        let config = self
            .providers
            .role_mut(role)
            .ok_or_else(|| CliError::Usage(format!("unknown provider role `{role}` (generation, embedding, classifier)")))?;
        config.set_field(field, value).map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.parallelism == 0 {
            return Err(CliError::Usage("parallelism must be at least 1".into()));
        }
        if !(self.w1 > 0.0 && self.w1 < 1.0) {
            return Err(CliError::Usage(format!("w1 must lie strictly between 0 and 1, got {}", self.w1)));
        }
        if let Some(path) = &self.classifier.model_path {
            if !path.exists() {
                return Err(CliError::Usage(format!("model file not found: {}", path.display())));
            }
        }
        self.hyper.validate().map_err(CliError::Usage)?;
        Ok(())
    }
}
