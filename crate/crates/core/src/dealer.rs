//! Dealer-account classifier: logistic regression with L1 regularization,
//! trained by proximal gradient descent (ISTA).
//!
//! The prox step soft-thresholds weights, producing exact zeros, so
//! feature selection is a plain magnitude cut on the fitted coefficients
//! followed by a refit on the surviving dimensions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitted logistic regression over a subset of the feature dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    /// One weight per entry of `active_indices`.
    pub weights: Vec<f64>,
    /// Unpenalized intercept.
    pub bias: f64,
    /// Indices into the original feature vector, in ascending order.
    pub active_indices: Vec<usize>,
    /// L1 strength the model was trained with.
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct L1Config {
    pub lambda: f64,
    /// Gradient step size; `None` derives a safe step from the Lipschitz
    /// bound of the logistic loss, ||X||^2/(4n) with the bias column
    /// included.
    pub step_size: Option<f64>,
    pub max_iters: usize,
    /// Stop when no parameter moves more than this between iterations.
    pub tolerance: f64,
    /// Coefficient magnitude below which a feature is dropped by
    /// [`feature_select`].
    pub select_epsilon: f64,
}

impl Default for L1Config {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            step_size: None,
            max_iters: 5000,
            tolerance: 1e-9,
            select_epsilon: 1e-3,
        }
    }
}

impl L1Config {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::invalid(format!("lambda {} must be >= 0", self.lambda)));
        }
        if let Some(s) = self.step_size {
            if s <= 0.0 {
                return Err(Error::invalid(format!("step_size {s} must be > 0")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        if self.tolerance < 0.0 || self.select_epsilon < 0.0 {
            return Err(Error::invalid("tolerance and select_epsilon must be >= 0"));
        }
        Ok(())
    }
}

/// Training transcript: the model plus the objective value recorded after
/// every iteration (index 0 is the objective at initialization).
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: LogRegModel,
    pub objective_history: Vec<f64>,
    pub converged: bool,
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// sign(w) * max(|w| - t, 0)
pub fn soft_threshold(w: f64, t: f64) -> f64 {
    if w > t {
        w - t
    } else if w < -t {
        w + t
    } else {
        0.0
    }
}

/// ln(1 + e^z) without overflow.
fn log1p_exp(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean logistic loss plus lambda * ||w||_1 (bias unpenalized).
fn objective(x: &[Vec<f64>], y: &[bool], weights: &[f64], bias: f64, lambda: f64) -> f64 {
    let n = x.len() as f64;
    let mut loss = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z = dot(weights, row) + bias;
        loss += log1p_exp(z) - if label { z } else { 0.0 };
    }
    loss / n + lambda * weights.iter().map(|w| w.abs()).sum::<f64>()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// 1/L with L bounded by ||X||_F^2/(4n), the ones column for the bias
/// included.
fn auto_step_size(x: &[Vec<f64>]) -> f64 {
    let n = x.len() as f64;
    let sq: f64 = x.iter().flat_map(|row| row.iter()).map(|v| v * v).sum::<f64>() + n;
    4.0 * n / sq
}

fn check_training_input(x: &[Vec<f64>], y: &[bool]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::data(format!(
            "got {} rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::data("cannot train on an empty feature matrix"));
    }
    let n_pos = y.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(Error::data(
            "logistic regression needs at least one sample of each class",
        ));
    }
    let dim = x[0].len();
    if x.iter().any(|row| row.len() != dim) {
        return Err(Error::data("inconsistent feature dimensions"));
    }
    Ok(dim)
}

/// ISTA on the L1-regularized mean logistic loss, from zero
/// initialization: gradient step on loss, soft-threshold by
/// lambda * step, bias updated without penalty.
pub fn train_l1(x: &[Vec<f64>], y: &[bool], config: &L1Config) -> Result<FitResult> {
    config.validate()?;
    let dim = check_training_input(x, y)?;
    let step = config.step_size.unwrap_or_else(|| auto_step_size(x));
    let n = x.len() as f64;

    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut history = vec![objective(x, y, &weights, bias, config.lambda)];
    let mut converged = false;

    for _ in 0..config.max_iters {
        let mut grad_w = vec![0.0; dim];
        let mut grad_b = 0.0;
        for (row, &label) in x.iter().zip(y) {
            let residual = sigmoid(dot(&weights, row) + bias) - f64::from(u8::from(label));
            for (g, v) in grad_w.iter_mut().zip(row) {
                *g += residual * v;
            }
            grad_b += residual;
        }
        let mut max_delta: f64 = 0.0;
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            let updated = soft_threshold(*w - step * g / n, step * config.lambda);
            max_delta = max_delta.max((updated - *w).abs());
            *w = updated;
        }
        let new_bias = bias - step * grad_b / n;
        max_delta = max_delta.max((new_bias - bias).abs());
        bias = new_bias;

        history.push(objective(x, y, &weights, bias, config.lambda));
        if max_delta < config.tolerance {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        model: LogRegModel {
            weights,
            bias,
            active_indices: (0..dim).collect(),
            lambda: config.lambda,
        },
        objective_history: history,
        converged,
    })
}

/// Original-space indices whose coefficient magnitude reaches `epsilon`,
/// order preserved.
pub fn feature_select(model: &LogRegModel, epsilon: f64) -> Vec<usize> {
    model
        .weights
        .iter()
        .zip(&model.active_indices)
        .filter(|(w, _)| w.abs() >= epsilon)
        .map(|(_, &i)| i)
        .collect()
}

/// Refits on the columns in `retained` (typically with lambda zero or
/// small). The result predicts from full-width feature vectors through
/// its `active_indices`.
pub fn refit(
    x: &[Vec<f64>],
    y: &[bool],
    retained: &[usize],
    config: &L1Config,
) -> Result<FitResult> {
    config.validate()?;
    let dim = check_training_input(x, y)?;
    if let Some(&bad) = retained.iter().find(|&&i| i >= dim) {
        return Err(Error::data(format!(
            "retained index {bad} out of range for {dim} features"
        )));
    }
    if retained.is_empty() {
        // Bias-only model: fit the intercept alone so it predicts the
        // class prior.
        let restricted: Vec<Vec<f64>> = x.iter().map(|_| Vec::new()).collect();
        let mut fit = train_l1(&restricted, y, config)?;
        fit.model.active_indices = Vec::new();
        return Ok(fit);
    }
    let restricted: Vec<Vec<f64>> = x
        .iter()
        .map(|row| retained.iter().map(|&i| row[i]).collect())
        .collect();
    let mut fit = train_l1(&restricted, y, config)?;
    fit.model.active_indices = retained.to_vec();
    Ok(fit)
}

/// sigmoid(w . x[active] + b); the vector must cover every active index.
pub fn predict_dealer_prob(model: &LogRegModel, features: &[f64]) -> Result<f64> {
    let mut z = model.bias;
    for (w, &i) in model.weights.iter().zip(&model.active_indices) {
        let v = features.get(i).ok_or_else(|| {
            Error::data(format!(
                "feature vector of dim {} missing active index {i}",
                features.len()
            ))
        })?;
        z += w * v;
    }
    Ok(sigmoid(z))
}
