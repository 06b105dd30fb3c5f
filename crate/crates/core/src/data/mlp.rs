//! A small feed-forward network for models that see `(x ⊙ m, m)`: the
//! masked features with removed entries zeroed, followed by the mask itself.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::dataset::{Dataset, Labels};
use crate::data::model::{check_len, softmax, OutputKind, Predictor};
use crate::error::{Error, Result};
use crate::estimation::MaskSampler;
use crate::game::{enumerate_subsets, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Elu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn grad(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    a + 1.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    n_in: usize,
    n_out: usize,
    /// row-major `n_out × n_in`
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Dense {
    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            out.push(self.b[o] + row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    activation: Activation,
    output: OutputKind,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        n_in: usize,
        hidden: &[usize],
        output: OutputKind,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![n_in];
        sizes.extend_from_slice(hidden);
        sizes.push(output.dim());
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let bound = (6.0 / (n_in + n_out) as f64).sqrt();
                Dense {
                    n_in,
                    n_out,
                    w: (0..n_in * n_out).map(|_| rng.gen_range(-bound..bound)).collect(),
                    b: vec![0.0; n_out],
                }
            })
            .collect();
        Self {
            layers,
            activation,
            output,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_kind(&self) -> OutputKind {
        self.output
    }

    /// Pre-activations and activations of every layer.
    fn trace(&self, input: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len() + 1);
        post.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(&post[l], &mut z);
            let a = if l == last {
                match self.output {
                    OutputKind::Classification(_) => softmax(&z),
                    OutputKind::Regression => z.clone(),
                }
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
            post.push(a);
        }
        (pre, post)
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.trace(input).1.pop().expect("at least one layer")
    }

    fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Weighted loss and its gradient, flattened layer by layer as `(w, b)`.
    fn loss_and_grad(&self, samples: &[Sample]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.n_params()];
        let mut loss = 0.0;
        for s in samples {
            let (pre, post) = self.trace(&s.input);
            let out = post.last().expect("output");
            // gradient of the loss w.r.t. the last pre-activation
            let mut delta: Vec<f64> = match self.output {
                OutputKind::Classification(_) => {
                    loss -= s.weight
                        * s.target
                            .iter()
                            .zip(out)
                            .filter(|(t, _)| **t > 0.0)
                            .map(|(t, p)| t * p.max(1e-300).ln())
                            .sum::<f64>();
                    out.iter().zip(&s.target).map(|(p, t)| s.weight * (p - t)).collect()
                }
                OutputKind::Regression => {
                    loss += s.weight * out.iter().zip(&s.target).map(|(o, t)| (o - t).powi(2)).sum::<f64>();
                    out.iter().zip(&s.target).map(|(o, t)| 2.0 * s.weight * (o - t)).collect()
                }
            };
            let mut offset = self.n_params();
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                offset -= layer.w.len() + layer.b.len();
                let input = &post[l];
                for o in 0..layer.n_out {
                    let row = offset + o * layer.n_in;
                    for i in 0..layer.n_in {
                        grad[row + i] += delta[o] * input[i];
                    }
                    grad[offset + layer.w.len() + o] += delta[o];
                }
                if l > 0 {
                    let mut next = vec![0.0; layer.n_in];
                    for o in 0..layer.n_out {
                        let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                        for i in 0..layer.n_in {
                            next[i] += row[i] * delta[o];
                        }
                    }
                    for (i, g) in next.iter_mut().enumerate() {
                        *g *= self.activation.grad(pre[l - 1][i], post[l][i]);
                    }
                    delta = next;
                }
            }
        }
        (loss, grad)
    }

    fn apply_update(&mut self, step: &[f64]) {
        let mut k = 0;
        for layer in &mut self.layers {
            for v in layer.w.iter_mut().chain(layer.b.iter_mut()) {
                *v -= step[k];
                k += 1;
            }
        }
    }

    /// Full-batch Adam; returns the loss before every epoch.
    fn fit(&mut self, samples: &[Sample], config: &MlpConfig) -> Result<Vec<f64>> {
        let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
        let n = self.n_params();
        let mut m = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut step = vec![0.0; n];
        let mut history = Vec::with_capacity(config.epochs);
        let decay_start = (config.epochs as f64 * 0.6) as usize;
        for epoch in 0..config.epochs {
            let (loss, grad) = self.loss_and_grad(samples);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            history.push(loss);
            let lr = if epoch < decay_start {
                config.lr
            } else {
                // linear anneal to a tenth of the base rate
                let frac = (epoch - decay_start) as f64 / (config.epochs - decay_start).max(1) as f64;
                config.lr * (1.0 - 0.9 * frac)
            };
            let t = (epoch + 1) as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            for k in 0..n {
                m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
                step[k] = lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
            self.apply_update(&step);
        }
        Ok(history)
    }

    fn to_json(&self) -> Value {
        Value::Array(
            self.layers
                .iter()
                .map(|l| {
                    let rows: Vec<&[f64]> = l.w.chunks(l.n_in.max(1)).collect();
                    json!([rows, l.b])
                })
                .collect(),
        )
    }

    fn from_json(weights: &Value, activation: Activation, output: OutputKind) -> Result<Self> {
        let raw: Vec<(Vec<Vec<f64>>, Vec<f64>)> = serde_json::from_value(weights.clone())
            .map_err(|_| Error::Config("masked-mlp weights must be [[W, b], ...]".into()))?;
        if raw.is_empty() {
            return Err(Error::Config("masked-mlp needs at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(raw.len());
        for (w, b) in raw {
            let n_out = w.len();
            let n_in = w.first().map_or(0, Vec::len);
            if b.len() != n_out || w.iter().any(|r| r.len() != n_in) {
                return Err(Error::Config("masked-mlp layer shapes are inconsistent".into()));
            }
            if let Some(prev) = layers.last() {
                let prev: &Dense = prev;
                if prev.n_out != n_in {
                    return Err(Error::Config("masked-mlp layers do not chain".into()));
                }
            }
            layers.push(Dense {
                n_in,
                n_out,
                w: w.into_iter().flatten().collect(),
                b,
            });
        }
        if layers.last().map(|l| l.n_out) != Some(output.dim()) {
            return Err(Error::Config("masked-mlp output size disagrees with meta.output".into()));
        }
        Ok(Self {
            layers,
            activation,
            output,
        })
    }
}

#[derive(Debug, Clone)]
struct Sample {
    input: Vec<f64>,
    target: Vec<f64>,
    weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Enumerate every mask with its sampler probability when `d` is at most this.
    pub exact_mask_cap: usize,
    /// Masks drawn per row when enumeration is not used.
    pub masks_per_row: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Elu,
            epochs: 3000,
            lr: 0.005,
            seed: 0,
            exact_mask_cap: 10,
            masks_per_row: 32,
        }
    }
}

/// A model evaluated on `(x ⊙ m, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedPredictor {
    d: usize,
    net: Mlp,
}

pub(crate) fn masked_input(x: &[f64], m: Mask) -> Vec<f64> {
    let mut input = Vec::with_capacity(2 * x.len());
    input.extend(x.iter().enumerate().map(|(j, &v)| if m.contains(j) { v } else { 0.0 }));
    input.extend((0..x.len()).map(|j| if m.contains(j) { 1.0 } else { 0.0 }));
    input
}

impl MaskedPredictor {
    pub fn new(d: usize, net: Mlp) -> Result<Self> {
        if net.n_inputs() != 2 * d {
            return Err(Error::DimensionMismatch {
                expected: 2 * d,
                actual: net.n_inputs(),
            });
        }
        Ok(Self { d, net })
    }

    pub fn predict_masked(&self, x: &[f64], m: Mask) -> Result<Vec<f64>> {
        check_len(x, self.d)?;
        if m.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: m.dim(),
            });
        }
        Ok(self.net.forward(&masked_input(x, m)))
    }

    pub(crate) fn to_json_parts(&self) -> (Value, Value) {
        (
            self.net.to_json(),
            json!({
                "features": self.d,
                "activation": self.net.activation,
                "output": self.net.output,
            }),
        )
    }

    pub(crate) fn from_json_parts(weights: &Value, meta: &Value) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Meta {
            features: usize,
            activation: Activation,
            output: OutputKind,
        }
        let meta: Meta = serde_json::from_value(meta.clone())?;
        let net = Mlp::from_json(weights, meta.activation, meta.output)?;
        Self::new(meta.features, net)
    }
}

impl Predictor for MaskedPredictor {
    fn n_features(&self) -> usize {
        self.d
    }

    fn output_kind(&self) -> OutputKind {
        self.net.output
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.predict_masked(x, Mask::full(self.d))
    }
}

/// Expands rows into `(x ⊙ m, m)` samples and merges duplicates; merging
/// is exact for both losses because they are affine in the target.
fn build_samples(
    data: &Dataset,
    targets: &[Vec<f64>],
    sampler: MaskSampler,
    config: &MlpConfig,
) -> Result<Vec<Sample>> {
    sampler.validate()?;
    let d = data.n_features();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_0F_4A5C);
    let exact: Option<Vec<(Mask, f64)>> = if d <= config.exact_mask_cap {
        Some(
            enumerate_subsets(d)?
                .map(|m| (m, sampler.probability(m)))
                .filter(|(_, p)| *p > 0.0)
                .collect(),
        )
    } else {
        None
    };
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut merged: Vec<Sample> = Vec::new();
    let mut push = |input: Vec<f64>, target: &[f64], weight: f64| {
        let key: Vec<u64> = input.iter().map(|v| v.to_bits()).collect();
        let slot = *index.entry(key).or_insert_with(|| {
            merged.push(Sample {
                input,
                target: vec![0.0; target.len()],
                weight: 0.0,
            });
            merged.len() - 1
        });
        let s = &mut merged[slot];
        s.weight += weight;
        for (acc, t) in s.target.iter_mut().zip(target) {
            *acc += weight * t;
        }
    };
    for (i, row) in data.rows().enumerate() {
        let w = data.weight(i);
        match &exact {
            Some(masks) => {
                for &(m, p) in masks {
                    push(masked_input(row, m), &targets[i], w * p);
                }
            }
            None => {
                let k = config.masks_per_row.max(1);
                for _ in 0..k {
                    let m = sampler.sample(d, &mut rng);
                    push(masked_input(row, m), &targets[i], w / k as f64);
                }
            }
        }
    }
    for s in &mut merged {
        for t in &mut s.target {
            *t /= s.weight;
        }
    }
    Ok(merged)
}

fn fit_masked(
    data: &Dataset,
    targets: Vec<Vec<f64>>,
    output: OutputKind,
    sampler: MaskSampler,
    config: &MlpConfig,
) -> Result<MaskedPredictor> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let samples = build_samples(data, &targets, sampler, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = data.n_features();
    let mut net = Mlp::new(2 * d, &config.hidden, output, config.activation, &mut rng);
    net.fit(&samples, config)?;
    MaskedPredictor::new(d, net)
}

/// Trains a surrogate `g(x ⊙ m, m)` to match a teacher's predictions under
/// randomly held-out features (soft cross entropy, or squared error for
/// regression teachers).
pub fn train_masked_surrogate(
    teacher: &dyn Predictor,
    data: &Dataset,
    sampler: MaskSampler,
    config: &MlpConfig,
) -> Result<MaskedPredictor> {
    if teacher.n_features() != data.n_features() {
        return Err(Error::DimensionMismatch {
            expected: teacher.n_features(),
            actual: data.n_features(),
        });
    }
    let targets = data.rows().map(|r| teacher.predict(r)).collect::<Result<Vec<_>>>()?;
    fit_masked(data, targets, teacher.output_kind(), sampler, config)
}

/// Trains a model on the true labels with features held out at training time.
pub fn train_with_missingness(data: &Dataset, sampler: MaskSampler, config: &MlpConfig) -> Result<MaskedPredictor> {
    let (targets, output) = match data.labels() {
        Labels::Regression(y) => (y.iter().map(|&v| vec![v]).collect(), OutputKind::Regression),
        Labels::Classification { classes, n_classes } => (
            classes
                .iter()
                .map(|&c| (0..*n_classes).map(|k| (k == c) as u8 as f64).collect())
                .collect(),
            OutputKind::Classification(*n_classes),
        ),
        Labels::Unlabeled => return Err(Error::KindMismatch("missingness training needs labels".into())),
    };
    fit_masked(data, targets, output, sampler, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::model::{FnModel, PredictModel};

    fn finite_difference_check(output: OutputKind) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Mlp::new(3, &[4, 3], output, Activation::Elu, &mut rng);
        let samples = vec![
            Sample {
                input: vec![0.3, -1.2, 0.5],
                target: match output {
                    OutputKind::Regression => vec![0.7],
                    OutputKind::Classification(_) => vec![0.2, 0.8],
                },
                weight: 0.6,
            },
            Sample {
                input: vec![-0.4, 0.1, 2.0],
                target: match output {
                    OutputKind::Regression => vec![-1.1],
                    OutputKind::Classification(_) => vec![1.0, 0.0],
                },
                weight: 0.4,
            },
        ];
        let (_, grad) = net.loss_and_grad(&samples);
        let h = 1e-6;
        for k in 0..net.n_params() {
            let mut step = vec![0.0; net.n_params()];
            step[k] = -h;
            let mut plus = net.clone();
            plus.apply_update(&step);
            step[k] = h;
            let mut minus = net.clone();
            minus.apply_update(&step);
            let numeric = (plus.loss_and_grad(&samples).0 - minus.loss_and_grad(&samples).0) / (2.0 * h);
            assert!((numeric - grad[k]).abs() < 1e-6, "param {k}: {numeric} vs {}", grad[k]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        finite_difference_check(OutputKind::Regression);
        finite_difference_check(OutputKind::Classification(2));
    }

    #[test]
    fn masked_output_ignores_removed_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(6, &[8], OutputKind::Classification(2), Activation::Tanh, &mut rng);
        let g = MaskedPredictor::new(3, net).unwrap();
        let m = Mask::from_indices(&[1], 3).unwrap();
        let a = g.predict_masked(&[1.0, 2.0, 3.0], m).unwrap();
        let b = g.predict_masked(&[-5.0, 2.0, 9.0], m).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_teacher() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![(i % 2) as f64, (i / 2) as f64]).collect();
        let data = Dataset::unlabeled(rows).unwrap();
        let teacher = FnModel::new(2, OutputKind::Regression, |_| vec![0.75]);
        let cfg = MlpConfig {
            epochs: 800,
            ..Default::default()
        };
        let g = train_masked_surrogate(&teacher, &data, MaskSampler::UniformCardinality, &cfg).unwrap();
        for row in data.rows() {
            for m in enumerate_subsets(2).unwrap() {
                let out = g.predict_masked(row, m).unwrap()[0];
                assert!((out - 0.75).abs() <= 1e-3, "{out}");
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(4, &[5, 3], OutputKind::Classification(3), Activation::Elu, &mut rng);
        let model = PredictModel::MaskedMlp(MaskedPredictor::new(2, net).unwrap());
        let back = PredictModel::from_json(&model.to_json()).unwrap();
        assert_eq!(model, back);
    }
}
