//! Ordered difficulty label schemes (CEFR, LjL levels) and their labels.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SchemeError {
    #[error("label scheme `{0}` needs at least two labels")]
    TooFewLabels(String),
    #[error("label scheme `{scheme}` has an empty label name")]
    EmptyLabel { scheme: String },
    #[error("label scheme `{scheme}` repeats label `{label}`")]
    DuplicateLabel { scheme: String, label: String },
    #[error("unknown label `{label}` for scheme `{scheme}`")]
    UnknownLabel { scheme: String, label: String },
    #[error("unknown label scheme `{0}` (expected `cefr` or `ljl`)")]
    UnknownScheme(String),
}

/// A difficulty label bound to its rank in a [`LabelScheme`].
///
/// Labels are only created through a scheme, so the rank is always valid
/// for the scheme that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    rank: usize,
    name: String,
}

impl Label {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelScheme {
    name: String,
    labels: Vec<String>,
}

impl LabelScheme {
    pub fn new<S: Into<String>>(name: impl Into<String>, labels: impl IntoIterator<Item = S>) -> Result<Self, SchemeError> {
        let name = name.into();
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(SchemeError::TooFewLabels(name));
        }
        for (i, label) in labels.iter().enumerate() {
            if label.trim().is_empty() {
                return Err(SchemeError::EmptyLabel { scheme: name });
            }
            if labels[..i].contains(label) {
                return Err(SchemeError::DuplicateLabel { scheme: name, label: label.clone() });
            }
        }
        Ok(Self { name, labels })
    }

    /// The six CEFR levels, A1 (easiest) to C2.
    pub fn cefr() -> Self {
        Self::new("cefr", ["A1", "A2", "B1", "B2", "C1", "C2"]).expect("static scheme is valid")
    }

    /// The four-level scheme of the LjL children's literature corpus.
    pub fn ljl() -> Self {
        Self::new("ljl", ["level1", "level2", "level3", "level4"]).expect("static scheme is valid")
    }

    pub fn by_name(name: &str) -> Result<Self, SchemeError> {
        match name.to_ascii_lowercase().as_str() {
            "cefr" => Ok(Self::cefr()),
            "ljl" => Ok(Self::ljl()),
            _ => Err(SchemeError::UnknownScheme(name.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label_names(&self) -> &[String] {
        &self.labels
    }

    /// Looks a label up by exact name.
    pub fn label(&self, name: &str) -> Result<Label, SchemeError> {
        self.rank_of(name).map(|rank| self.at(rank)).ok_or_else(|| SchemeError::UnknownLabel {
            scheme: self.name.clone(),
            label: name.to_string(),
        })
    }

    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    /// Label at `rank`. Panics when `rank >= len()`.
    pub fn at(&self, rank: usize) -> Label {
        Label { rank, name: self.labels[rank].clone() }
    }

    pub fn get(&self, rank: usize) -> Option<Label> {
        (rank < self.labels.len()).then(|| self.at(rank))
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        (0..self.labels.len()).map(|r| self.at(r))
    }

    pub fn lowest(&self) -> Label {
        self.at(0)
    }

    pub fn highest(&self) -> Label {
        self.at(self.labels.len() - 1)
    }

    pub fn contains(&self, label: &Label) -> bool {
        self.labels.get(label.rank).is_some_and(|n| *n == label.name)
    }
}

impl<'de> Deserialize<'de> for LabelScheme {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            name: String,
            labels: Vec<String>,
        }
        let raw = Raw::deserialize(deserializer)?;
        LabelScheme::new(raw.name, raw.labels).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_are_a_bijection() {
        let scheme = LabelScheme::cefr();
        for (i, name) in scheme.label_names().iter().enumerate() {
            assert_eq!(scheme.rank_of(name), Some(i));
            assert_eq!(scheme.at(i).name(), name);
        }
        assert_eq!(scheme.label("C2").unwrap().rank(), 5);
    }

    #[test]
    fn rejects_bad_schemes() {
        assert_eq!(LabelScheme::new("x", ["a"]).unwrap_err(), SchemeError::TooFewLabels("x".into()));
        assert!(matches!(LabelScheme::new("x", ["a", "a"]), Err(SchemeError::DuplicateLabel { .. })));
        assert!(matches!(LabelScheme::new("x", ["a", " "]), Err(SchemeError::EmptyLabel { .. })));
        assert!(LabelScheme::by_name("klingon").is_err());
    }

    #[test]
    fn unknown_label() {
        let err = LabelScheme::cefr().label("Z9").unwrap_err();
        assert!(err.to_string().contains("Z9"));
    }

    #[test]
    fn scheme_json_roundtrip_validates() {
        let json = serde_json::to_string(&LabelScheme::ljl()).unwrap();
        let back: LabelScheme = serde_json::from_str(&json).unwrap();
        assert_eq!(back, LabelScheme::ljl());
        assert!(serde_json::from_str::<LabelScheme>(r#"{"name":"x","labels":["a"]}"#).is_err());
    }
}
