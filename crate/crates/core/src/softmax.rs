//! Multinomial logistic regression trained by full-batch gradient descent.
//!
//! Shared by the readability calibration (one standardized feature) and the
//! embedding head (one feature per embedding dimension). The objective is
//! mean cross-entropy plus `l2 / 2 * ||W||^2`; biases are not penalized.
//! Parameters start at zero, so fits are deterministic.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub learning_rate: f64,
    pub l2: f64,
    pub max_epochs: usize,
    /// Stop once one epoch improves the loss by less than this.
    pub tolerance: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self { learning_rate: 0.1, l2: 1e-4, max_epochs: 5_000, tolerance: 1e-9 }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(format!("l2 must be non-negative, got {}", self.l2));
        }
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return Err(format!("tolerance must be non-negative, got {}", self.tolerance));
        }
        Ok(())
    }
}

/// Class weights (`K x D`) and biases (`K`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSoftmax {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl LinearSoftmax {
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        Self { weights: vec![vec![0.0; dim]; n_classes], biases: vec![0.0; n_classes] }
    }

    pub fn n_classes(&self) -> usize {
        self.biases.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| b + w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>())
            .collect()
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    pub fn is_finite(&self) -> bool {
        self.biases.iter().chain(self.weights.iter().flatten()).all(|v| v.is_finite())
    }

    /// Parameters as one vector: all weights row by row, then the biases.
    pub fn to_flat(&self) -> Vec<f64> {
        self.weights.iter().flatten().chain(&self.biases).copied().collect()
    }

    pub fn from_flat(n_classes: usize, dim: usize, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), n_classes * (dim + 1), "flat parameter length");
        let weights = (0..n_classes).map(|c| flat[c * dim..(c + 1) * dim].to_vec()).collect();
        Self { weights, biases: flat[n_classes * dim..].to_vec() }
    }

    /// Objective value and its gradient over `(xs, ys)`.
    pub fn loss_and_gradient(&self, xs: &[Vec<f64>], ys: &[usize], l2: f64) -> (f64, LinearSoftmax) {
        let k = self.n_classes();
        let mut grad = LinearSoftmax::zeros(k, self.dim());
        let n = xs.len().max(1) as f64;
        let mut nll = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let logits = self.logits(x);
            let lse = log_sum_exp(&logits);
            nll += lse - logits[y];
            for (c, logit) in logits.iter().enumerate() {
                let residual = (logit - lse).exp() - if c == y { 1.0 } else { 0.0 };
                grad.biases[c] += residual / n;
                for (g, xi) in grad.weights[c].iter_mut().zip(x) {
                    *g += residual * xi / n;
                }
            }
        }
        let mut penalty = 0.0;
        for (w_row, g_row) in self.weights.iter().zip(grad.weights.iter_mut()) {
            for (w, g) in w_row.iter().zip(g_row.iter_mut()) {
                penalty += w * w;
                *g += l2 * w;
            }
        }
        (nll / n + 0.5 * l2 * penalty, grad)
    }

    pub fn loss(&self, xs: &[Vec<f64>], ys: &[usize], l2: f64) -> f64 {
        self.loss_and_gradient(xs, ys, l2).0
    }

    fn descend(&mut self, grad: &LinearSoftmax, rate: f64) {
        for (w_row, g_row) in self.weights.iter_mut().zip(&grad.weights) {
            for (w, g) in w_row.iter_mut().zip(g_row) {
                *w -= rate * g;
            }
        }
        for (b, g) in self.biases.iter_mut().zip(&grad.biases) {
            *b -= rate * g;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub model: LinearSoftmax,
    /// Loss before the first step, then after every step.
    pub loss_trace: Vec<f64>,
}

impl Fit {
    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("trace holds the initial loss")
    }
}

/// Fits from zero initialization; `ys` are class indices below `n_classes`.
pub fn fit(xs: &[Vec<f64>], ys: &[usize], n_classes: usize, dim: usize, hyper: &Hyper) -> Fit {
    let mut model = LinearSoftmax::zeros(n_classes, dim);
    let (mut loss, mut grad) = model.loss_and_gradient(xs, ys, hyper.l2);
    let mut loss_trace = vec![loss];
    for _ in 0..hyper.max_epochs {
        model.descend(&grad, hyper.learning_rate);
        let (next_loss, next_grad) = model.loss_and_gradient(xs, ys, hyper.l2);
        loss_trace.push(next_loss);
        let improvement = loss - next_loss;
        loss = next_loss;
        grad = next_grad;
        if improvement < hyper.tolerance {
            break;
        }
    }
    Fit { model, loss_trace }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
