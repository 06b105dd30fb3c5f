use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::dataset::{Dataset, Labels};
use crate::data::model::{softmax, LinearModel, LogisticModel};
use crate::error::{Error, Result};
use crate::numeric::solve_dense;

/// Closed-form (weighted) ridge regression with an unpenalized intercept.
///
/// Solves `(X̃ᵀWX̃ + ridge·P) w = X̃ᵀWy` where `X̃` has a leading column of
/// ones and `P` is the identity with a zero in the intercept slot.
pub fn train_linear(data: &Dataset, ridge: f64) -> Result<LinearModel> {
    let y = match data.labels() {
        Labels::Regression(y) => y,
        _ => return Err(Error::KindMismatch("linear regression needs real-valued labels".into())),
    };
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(ridge >= 0.0) {
        return Err(Error::invalid("ridge must be non-negative"));
    }
    let p = data.n_features() + 1;
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut design = vec![1.0; p];
    for (i, row) in data.rows().enumerate() {
        design[1..].copy_from_slice(row);
        let w = data.weight(i);
        for a in 0..p {
            rhs[a] += w * design[a] * y[i];
            for b in 0..p {
                gram[a * p + b] += w * design[a] * design[b];
            }
        }
    }
    // the weights are normalized, so the ridge term is scaled to match an
    // unnormalized sum of squared residuals
    let scale = 1.0 / data.n_rows() as f64;
    for a in 1..p {
        gram[a * p + a] += ridge * scale;
    }
    let coef = solve_dense(&gram, &rhs)?;
    Ok(LinearModel::new(coef[1..].to_vec(), coef[0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticConfig {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            lr: 0.5,
            epochs: 1000,
            l2: 0.0,
            seed: 0,
        }
    }
}

/// Learning rate below which full-batch gradient descent on the softmax
/// cross entropy is guaranteed not to increase the training loss: `1/L`
/// with `L = ½·max_i(1 + ‖x_i‖²) + l2` bounding the Hessian.
pub fn logistic_stable_lr(data: &Dataset, l2: f64) -> f64 {
    let max_norm = data
        .rows()
        .map(|r| 1.0 + r.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    1.0 / (0.5 * max_norm + l2)
}

pub fn train_logistic(data: &Dataset, config: &LogisticConfig) -> Result<LogisticModel> {
    train_logistic_traced(data, config).map(|(m, _)| m)
}

/// Full-batch gradient descent on the weighted mean softmax cross entropy
/// plus `l2/2·‖W‖²`; returns the model and the loss before every epoch.
pub fn train_logistic_traced(data: &Dataset, config: &LogisticConfig) -> Result<(LogisticModel, Vec<f64>)> {
    let (classes, n_classes) = match data.labels() {
        Labels::Classification { classes, n_classes } => (classes, *n_classes),
        _ => return Err(Error::KindMismatch("logistic regression needs class labels".into())),
    };
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = data.n_features();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = LogisticModel {
        weights: (0..n_classes)
            .map(|_| (0..d).map(|_| rng.gen_range(-0.01..0.01)).collect())
            .collect(),
        biases: vec![0.0; n_classes],
    };
    let mut history = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..=config.epochs {
        let mut loss = 0.0;
        let mut grad_w = vec![vec![0.0; d]; n_classes];
        let mut grad_b = vec![0.0; n_classes];
        for (i, row) in data.rows().enumerate() {
            let w = data.weight(i);
            let p = softmax(&model.logits(row));
            loss -= w * p[classes[i]].max(1e-300).ln();
            for k in 0..n_classes {
                let delta = w * (p[k] - if k == classes[i] { 1.0 } else { 0.0 });
                grad_b[k] += delta;
                for j in 0..d {
                    grad_w[k][j] += delta * row[j];
                }
            }
        }
        loss += 0.5 * config.l2 * model.weights.iter().flatten().map(|v| v * v).sum::<f64>();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.push(loss);
        if epoch == config.epochs {
            break;
        }
        for k in 0..n_classes {
            model.biases[k] -= config.lr * grad_b[k];
            for j in 0..d {
                model.weights[k][j] -= config.lr * (grad_w[k][j] + config.l2 * model.weights[k][j]);
            }
        }
        if model.weights.iter().flatten().chain(&model.biases).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
    }
    Ok((model, history))
}
