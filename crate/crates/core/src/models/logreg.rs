//! Binary logistic regression trained by full-batch gradient descent.
//!
//! Features are standardized internally; the fitted scaler ships with the
//! model so scoring applies the identical transform. The loss is the mean
//! log-loss (optionally class-balanced) plus an optional L2 penalty on the
//! weights; the bias is never regularized.

use super::scaler::Scaler;
use super::ModelError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, schemars::JsonSchema)]
#[serde(default)]
pub struct LogRegParams {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop when the epoch-over-epoch loss improvement drops below this.
    pub tol: f64,
    pub l2: f64,
    /// Reweight samples inversely to class frequency.
    pub class_weight: bool,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self { learning_rate: 0.1, max_epochs: 5000, tol: 1e-8, l2: 0.0, class_weight: false }
    }
}

/// Fitted coefficients plus the training-set scaler.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub scaler: Scaler,
}

impl LogRegModel {
    /// Probability of the positive class for one raw (unstandardized) row.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let z: f64 = self
            .scaler
            .transform_row(row)
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| x * w)
            .sum::<f64>()
            + self.bias;
        sigmoid(z)
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-sample weights: uniform, or inverse class frequency when balancing.
pub fn sample_weights(y: &[u8], class_weight: bool) -> Vec<f64> {
    if !class_weight {
        return vec![1.0; y.len()];
    }
    let n = y.len() as f64;
    let pos = y.iter().filter(|v| **v == 1).count() as f64;
    let neg = n - pos;
    y.iter().map(|v| if *v == 1 { n / (2.0 * pos) } else { n / (2.0 * neg) }).collect()
}

/// Weighted mean log-loss plus L2 penalty, on rows as given (no standardization).
pub fn logistic_loss(x: &[Vec<f64>], y: &[u8], weights: &[f64], coef: &[f64], bias: f64, l2: f64) -> f64 {
    let mut total = 0.0;
    let mut weight_sum = 0.0;
    for ((row, &target), &s) in x.iter().zip(y).zip(weights) {
        let z: f64 = row.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>() + bias;
        // max(z, 0) - z*y + ln(1 + exp(-|z|)) == -y ln p - (1 - y) ln(1 - p)
        let ce = z.max(0.0) - z * f64::from(target) + (-z.abs()).exp().ln_1p();
        total += s * ce;
        weight_sum += s;
    }
    total / weight_sum + 0.5 * l2 * coef.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`logistic_loss`] in `(d loss / d coef, d loss / d bias)`.
pub fn logistic_gradient(
    x: &[Vec<f64>],
    y: &[u8],
    weights: &[f64],
    coef: &[f64],
    bias: f64,
    l2: f64,
) -> (Vec<f64>, f64) {
    let d = coef.len();
    let mut grad_w = vec![0.0; d];
    let mut grad_b = 0.0;
    let mut weight_sum = 0.0;
    for ((row, &target), &s) in x.iter().zip(y).zip(weights) {
        let z: f64 = row.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>() + bias;
        let err = s * (sigmoid(z) - f64::from(target));
        for (g, v) in grad_w.iter_mut().zip(row) {
            *g += err * v;
        }
        grad_b += err;
        weight_sum += s;
    }
    for (g, w) in grad_w.iter_mut().zip(coef) {
        *g = *g / weight_sum + l2 * w;
    }
    (grad_w, grad_b / weight_sum)
}

/// Trains on raw rows; both classes must be present and all values finite
/// (validated by the caller in [`super::train`]).
pub fn train_logreg(x: &[Vec<f64>], y: &[u8], params: &LogRegParams) -> Result<LogRegModel, ModelError> {
    let scaler = Scaler::fit(x);
    let xs = scaler.transform(x);
    let weights = sample_weights(y, params.class_weight);
    let d = xs[0].len();
    let mut coef = vec![0.0; d];
    let mut bias = 0.0;
    let mut prev_loss = logistic_loss(&xs, y, &weights, &coef, bias, params.l2);
    for _ in 0..params.max_epochs {
        let (grad_w, grad_b) = logistic_gradient(&xs, y, &weights, &coef, bias, params.l2);
        for (w, g) in coef.iter_mut().zip(&grad_w) {
            *w -= params.learning_rate * g;
        }
        bias -= params.learning_rate * grad_b;
        let loss = logistic_loss(&xs, y, &weights, &coef, bias, params.l2);
        if prev_loss - loss < params.tol {
            break;
        }
        prev_loss = loss;
    }
    Ok(LogRegModel { weights: coef, bias, scaler })
}
