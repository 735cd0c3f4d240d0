//! Gunning Fog, Flesch-Kincaid grade level and Automated Readability Index.
//!
//! Coefficients default to the standard English ones and live in
//! [`Coefficients`] so French-adapted variants can be swapped in.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::textproc::TextStats;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ReadabilityError {
    #[error("readability needs at least one sentence and one word (got {n_sentences} sentences, {n_words} words)")]
    Degenerate { n_sentences: usize, n_words: usize },
    #[error("unknown readability feature `{0}` (expected gfi, fkgl or ari)")]
    UnknownFeature(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GfiCoefficients {
    pub scale: f64,
    pub complex_percent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FkglCoefficients {
    pub words_per_sentence: f64,
    pub syllables_per_word: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AriCoefficients {
    pub chars_per_word: f64,
    pub words_per_sentence: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub gfi: GfiCoefficients,
    pub fkgl: FkglCoefficients,
    pub ari: AriCoefficients,
}

impl Default for Coefficients {
    fn default() -> Self {
        Self {
            gfi: GfiCoefficients { scale: 0.4, complex_percent: 100.0 },
            fkgl: FkglCoefficients { words_per_sentence: 0.39, syllables_per_word: 11.8, intercept: -15.59 },
            ari: AriCoefficients { chars_per_word: 4.71, words_per_sentence: 0.5, intercept: -21.43 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadabilityScores {
    pub gfi: f64,
    pub fkgl: f64,
    pub ari: f64,
}

/// Which scalar score a calibrated classifier consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Gfi,
    Fkgl,
    Ari,
}

impl Feature {
    pub const ALL: [Feature; 3] = [Feature::Gfi, Feature::Fkgl, Feature::Ari];

    pub fn pick(self, scores: &ReadabilityScores) -> f64 {
        match self {
            Feature::Gfi => scores.gfi,
            Feature::Fkgl => scores.fkgl,
            Feature::Ari => scores.ari,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Feature::Gfi => "gfi",
            Feature::Fkgl => "fkgl",
            Feature::Ari => "ari",
        })
    }
}

impl FromStr for Feature {
    type Err = ReadabilityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gfi" => Ok(Feature::Gfi),
            "fkgl" => Ok(Feature::Fkgl),
            "ari" => Ok(Feature::Ari),
            _ => Err(ReadabilityError::UnknownFeature(s.to_string())),
        }
    }
}

fn check(stats: &TextStats) -> Result<(f64, f64), ReadabilityError> {
    if stats.n_sentences == 0 || stats.n_words == 0 {
        return Err(ReadabilityError::Degenerate { n_sentences: stats.n_sentences, n_words: stats.n_words });
    }
    Ok((stats.n_words as f64, stats.n_sentences as f64))
}

impl Coefficients {
    pub fn gfi(&self, stats: &TextStats) -> Result<f64, ReadabilityError> {
        let (words, sentences) = check(stats)?;
        let c = &self.gfi;
        Ok(c.scale * (words / sentences + c.complex_percent * stats.n_complex_words as f64 / words))
    }

    pub fn fkgl(&self, stats: &TextStats) -> Result<f64, ReadabilityError> {
        let (words, sentences) = check(stats)?;
        let c = &self.fkgl;
        Ok(c.words_per_sentence * (words / sentences) + c.syllables_per_word * (stats.n_syllables as f64 / words)
            + c.intercept)
    }

    pub fn ari(&self, stats: &TextStats) -> Result<f64, ReadabilityError> {
        let (words, sentences) = check(stats)?;
        let c = &self.ari;
        Ok(c.chars_per_word * (stats.n_chars as f64 / words) + c.words_per_sentence * (words / sentences)
            + c.intercept)
    }

    pub fn scores(&self, stats: &TextStats) -> Result<ReadabilityScores, ReadabilityError> {
        Ok(ReadabilityScores { gfi: self.gfi(stats)?, fkgl: self.fkgl(stats)?, ari: self.ari(stats)? })
    }

    pub fn score(&self, feature: Feature, stats: &TextStats) -> Result<f64, ReadabilityError> {
        match feature {
            Feature::Gfi => self.gfi(stats),
            Feature::Fkgl => self.fkgl(stats),
            Feature::Ari => self.ari(stats),
        }
    }
}

/// Gunning Fog Index with the default coefficients.
pub fn gfi(stats: &TextStats) -> Result<f64, ReadabilityError> {
    Coefficients::default().gfi(stats)
}

/// Flesch-Kincaid grade level with the default coefficients.
pub fn fkgl(stats: &TextStats) -> Result<f64, ReadabilityError> {
    Coefficients::default().fkgl(stats)
}

/// Automated Readability Index with the default coefficients.
pub fn ari(stats: &TextStats) -> Result<f64, ReadabilityError> {
    Coefficients::default().ari(stats)
}

pub fn scores(stats: &TextStats) -> Result<ReadabilityScores, ReadabilityError> {
    Coefficients::default().scores(stats)
}
