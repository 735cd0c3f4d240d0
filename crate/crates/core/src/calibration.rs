//! Score-to-label calibration: multinomial logistic regression over one
//! standardized readability score.

use serde::{Deserialize, Serialize};

use crate::difficulty::ClassifierOutput;
use crate::scheme::{Label, LabelScheme};
use crate::softmax::{self, Hyper, LinearSoftmax};

const MIN_STD: f64 = 1e-12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CalibrationError {
    #[error("calibration needs at least two distinct labels")]
    SingleClass,
    #[error("non-finite score {0}")]
    NonFiniteScore(f64),
    #[error("label `{label}` is not in scheme `{scheme}`")]
    ForeignLabel { label: String, scheme: String },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("invalid calibration model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub scheme: LabelScheme,
    /// One slope per class, on the standardized score.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub feature_mean: f64,
    pub feature_std: f64,
    pub hyper: Hyper,
    /// Objective value at the returned parameters.
    pub training_loss: f64,
    #[serde(skip)]
    pub loss_trace: Vec<f64>,
}

impl CalibrationModel {
    /// A model with every parameter at zero: uniform probabilities everywhere.
    pub fn zeroed(scheme: LabelScheme, hyper: Hyper) -> Self {
        let k = scheme.len();
        Self {
            scheme,
            weights: vec![0.0; k],
            biases: vec![0.0; k],
            feature_mean: 0.0,
            feature_std: 1.0,
            hyper,
            training_loss: f64::NAN,
            loss_trace: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let k = self.scheme.len();
        if self.weights.len() != k || self.biases.len() != k {
            return Err(CalibrationError::InvalidModel(format!(
                "expected {k} weights and biases, got {} and {}",
                self.weights.len(),
                self.biases.len()
            )));
        }
        if !(self.feature_std.is_finite() && self.feature_std > 0.0) {
            return Err(CalibrationError::InvalidModel(format!("feature_std must be positive, got {}", self.feature_std)));
        }
        let finite = self.weights.iter().chain(&self.biases).chain([&self.feature_mean]).all(|v| v.is_finite());
        if !finite {
            return Err(CalibrationError::InvalidModel("non-finite parameter".into()));
        }
        Ok(())
    }

    fn linear(&self) -> LinearSoftmax {
        LinearSoftmax { weights: self.weights.iter().map(|w| vec![*w]).collect(), biases: self.biases.clone() }
    }

    fn standardize(&self, score: f64) -> f64 {
        (score - self.feature_mean) / self.feature_std
    }

    pub fn probabilities(&self, score: f64) -> Result<Vec<f64>, CalibrationError> {
        if !score.is_finite() {
            return Err(CalibrationError::NonFiniteScore(score));
        }
        Ok(self.linear().probabilities(&[self.standardize(score)]))
    }

    /// Regularized cross-entropy of this model on `pairs`.
    pub fn loss(&self, pairs: &[(f64, Label)]) -> Result<f64, CalibrationError> {
        let (xs, ys) = self.design(pairs)?;
        Ok(self.linear().loss(&xs, &ys, self.hyper.l2))
    }

    fn design(&self, pairs: &[(f64, Label)]) -> Result<(Vec<Vec<f64>>, Vec<usize>), CalibrationError> {
        let mut xs = Vec::with_capacity(pairs.len());
        let mut ys = Vec::with_capacity(pairs.len());
        for (score, label) in pairs {
            if !score.is_finite() {
                return Err(CalibrationError::NonFiniteScore(*score));
            }
            if !self.scheme.contains(label) {
                return Err(CalibrationError::ForeignLabel {
                    label: label.name().to_string(),
                    scheme: self.scheme.name().to_string(),
                });
            }
            xs.push(vec![self.standardize(*score)]);
            ys.push(label.rank());
        }
        Ok((xs, ys))
    }
}

pub fn fit_calibration(
    pairs: &[(f64, Label)],
    scheme: &LabelScheme,
    hyper: &Hyper,
) -> Result<CalibrationModel, CalibrationError> {
    hyper.validate().map_err(CalibrationError::InvalidHyper)?;
    if let Some((bad, _)) = pairs.iter().find(|(s, _)| !s.is_finite()) {
        return Err(CalibrationError::NonFiniteScore(*bad));
    }
    let first = pairs.first().map(|(_, l)| l.rank());
    if !pairs.iter().any(|(_, l)| Some(l.rank()) != first) {
        return Err(CalibrationError::SingleClass);
    }

    let n = pairs.len() as f64;
    let mean = pairs.iter().map(|(s, _)| s).sum::<f64>() / n;
    let var = pairs.iter().map(|(s, _)| (s - mean).powi(2)).sum::<f64>() / n;

    let mut model = CalibrationModel::zeroed(scheme.clone(), *hyper);
    model.feature_mean = mean;
    model.feature_std = var.sqrt().max(MIN_STD);
    let (xs, ys) = model.design(pairs)?;

    let fit = softmax::fit(&xs, &ys, scheme.len(), 1, hyper);
    model.training_loss = fit.final_loss();
    model.weights = fit.model.weights.iter().map(|w| w[0]).collect();
    model.biases = fit.model.biases;
    model.loss_trace = fit.loss_trace;
    model.validate()?;
    Ok(model)
}

pub fn predict_calibrated(model: &CalibrationModel, score: f64) -> Result<ClassifierOutput, CalibrationError> {
    let probabilities = model.probabilities(score)?;
    Ok(ClassifierOutput::from_probabilities(&model.scheme, probabilities))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> Vec<(f64, Label)> {
        let scheme = LabelScheme::cefr();
        let mut pairs = vec![(1.0, scheme.label("A1").unwrap()); 20];
        pairs.extend(vec![(10.0, scheme.label("C2").unwrap()); 20]);
        pairs
    }

    #[test]
    fn separable_fixture_is_learned() {
        let scheme = LabelScheme::cefr();
        let pairs = separable();
        let model = fit_calibration(&pairs, &scheme, &Hyper::default()).unwrap();
        let correct = pairs.iter().filter(|(s, l)| predict_calibrated(&model, *s).unwrap().label == *l).count();
        assert_eq!(correct, pairs.len());
        assert_eq!(predict_calibrated(&model, 1.0).unwrap().label.name(), "A1");
        assert_eq!(predict_calibrated(&model, 10.0).unwrap().label.name(), "C2");
        assert_eq!(model.loss(&pairs).unwrap(), model.training_loss);
    }

    #[test]
    fn zero_epochs_gives_uniform_output() {
        let scheme = LabelScheme::cefr();
        let hyper = Hyper { max_epochs: 0, ..Hyper::default() };
        let model = fit_calibration(&separable(), &scheme, &hyper).unwrap();
        let out = predict_calibrated(&model, 123.0).unwrap();
        assert_eq!(out.label.name(), "A1");
        for p in out.probability_vec().unwrap() {
            assert_eq!(p, 1.0 / 6.0);
        }
    }

    #[test]
    fn bias_shift_keeps_probabilities() {
        let scheme = LabelScheme::cefr();
        let model = fit_calibration(&separable(), &scheme, &Hyper::default()).unwrap();
        let mut shifted = model.clone();
        shifted.biases.iter_mut().for_each(|b| *b += 7.5);
        for score in [-3.0, 1.0, 4.2, 10.0, 30.0] {
            let p = model.probabilities(score).unwrap();
            let q = shifted.probabilities(score).unwrap();
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let scheme = LabelScheme::cefr();
        let a1 = scheme.label("A1").unwrap();
        let one_class = vec![(1.0, a1.clone()), (2.0, a1.clone())];
        assert_eq!(fit_calibration(&one_class, &scheme, &Hyper::default()).unwrap_err(), CalibrationError::SingleClass);
        let c2 = scheme.label("C2").unwrap();
        let nan = vec![(f64::NAN, a1), (2.0, c2)];
        assert!(matches!(fit_calibration(&nan, &scheme, &Hyper::default()), Err(CalibrationError::NonFiniteScore(_))));
        assert!(fit_calibration(&[], &scheme, &Hyper::default()).is_err());
        let model = CalibrationModel::zeroed(scheme, Hyper::default());
        assert!(predict_calibrated(&model, f64::INFINITY).is_err());
    }

    #[test]
    fn constant_scores_clamp_std() {
        let scheme = LabelScheme::ljl();
        let pairs = vec![(5.0, scheme.at(0)), (5.0, scheme.at(3))];
        let model = fit_calibration(&pairs, &scheme, &Hyper::default()).unwrap();
        assert_eq!(model.feature_std, MIN_STD);
        assert!(model.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn json_roundtrip() {
        let scheme = LabelScheme::cefr();
        let model = fit_calibration(&separable(), &scheme, &Hyper { max_epochs: 50, ..Hyper::default() }).unwrap();
        let back: CalibrationModel = serde_json::from_str(&serde_json::to_string(&model).unwrap()).unwrap();
        assert_eq!(back.weights, model.weights);
        assert_eq!(back.biases, model.biases);
        assert_eq!(back.scheme, model.scheme);
        back.validate().unwrap();
    }
}
