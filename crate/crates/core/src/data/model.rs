use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::joint::DiscreteJoint;
use crate::data::mlp::MaskedPredictor;
use crate::error::{Error, Result};
use crate::game::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Regression,
    /// Probability vector over this many classes.
    Classification(usize),
}

impl OutputKind {
    pub fn dim(&self) -> usize {
        match self {
            OutputKind::Regression => 1,
            OutputKind::Classification(c) => *c,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, OutputKind::Classification(_))
    }
}

/// A trained model `f: X -> Y`.
pub trait Predictor: Send + Sync {
    fn n_features(&self) -> usize;

    fn output_kind(&self) -> OutputKind;

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl<P: Predictor + ?Sized> Predictor for std::sync::Arc<P> {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }

    fn output_kind(&self) -> OutputKind {
        (**self).output_kind()
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).predict(x)
    }
}

pub(crate) fn check_len(x: &[f64], d: usize) -> Result<()> {
    if x.len() == d {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: d,
            actual: x.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, intercept: f64) -> Self {
        Self { weights, intercept }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

impl Predictor for LinearModel {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn output_kind(&self) -> OutputKind {
        OutputKind::Regression
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x, self.weights.len())?;
        Ok(vec![self.eval(x)])
    }
}

/// Multinomial logistic regression; `weights` is `classes × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl LogisticModel {
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl Predictor for LogisticModel {
    fn n_features(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn output_kind(&self) -> OutputKind {
        OutputKind::Classification(self.biases.len())
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x, self.n_features())?;
        Ok(softmax(&self.logits(x)))
    }
}

/// The Bayes classifier `p(Y | X = x)` of a discrete joint.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesModel {
    joint: DiscreteJoint,
}

impl BayesModel {
    pub fn new(joint: DiscreteJoint) -> Self {
        Self { joint }
    }

    pub fn joint(&self) -> &DiscreteJoint {
        &self.joint
    }
}

impl Predictor for BayesModel {
    fn n_features(&self) -> usize {
        self.joint.n_features()
    }

    fn output_kind(&self) -> OutputKind {
        OutputKind::Classification(self.joint.classes())
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let cell = self.joint.cell_of(x)?;
        self.joint
            .class_posterior(&cell, Mask::full(self.joint.n_features()))
    }
}

pub fn bayes_predictor(joint: &DiscreteJoint) -> BayesModel {
    BayesModel::new(joint.clone())
}

/// Predictions looked up from an explicit table of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TableModel {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub kind: OutputKind,
}

impl Predictor for TableModel {
    fn n_features(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    fn output_kind(&self) -> OutputKind {
        self.kind
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x, self.n_features())?;
        self.inputs
            .iter()
            .position(|row| row.as_slice() == x)
            .map(|i| self.outputs[i].clone())
            .ok_or_else(|| Error::invalid(format!("input {x:?} not present in the prediction table")))
    }
}

/// Wraps a closure as a model; handy for analytic test functions.
pub struct FnModel<F> {
    d: usize,
    kind: OutputKind,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    pub fn new(d: usize, kind: OutputKind, f: F) -> Self {
        Self { d, kind, f }
    }
}

impl<F> Predictor for FnModel<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn n_features(&self) -> usize {
        self.d
    }

    fn output_kind(&self) -> OutputKind {
        self.kind
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x, self.d)?;
        Ok((self.f)(x))
    }
}

/// Any of the built-in model kinds, with a JSON file format of the shape
/// `{"kind", "weights", "meta"}`.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictModel {
    Linear(LinearModel),
    Logistic(LogisticModel),
    MaskedMlp(MaskedPredictor),
    Bayes(BayesModel),
    ExternalTable(TableModel),
}

impl PredictModel {
    fn inner(&self) -> &dyn Predictor {
        match self {
            PredictModel::Linear(m) => m,
            PredictModel::Logistic(m) => m,
            PredictModel::MaskedMlp(m) => m,
            PredictModel::Bayes(m) => m,
            PredictModel::ExternalTable(m) => m,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PredictModel::Linear(_) => "linear",
            PredictModel::Logistic(_) => "logistic",
            PredictModel::MaskedMlp(_) => "masked-mlp",
            PredictModel::Bayes(_) => "bayes-from-joint",
            PredictModel::ExternalTable(_) => "external-table",
        }
    }

    pub fn to_json_value(&self) -> Value {
        let (weights, meta) = match self {
            PredictModel::Linear(m) => (json!([m.weights, [m.intercept]]), json!({})),
            PredictModel::Logistic(m) => (json!([m.weights, m.biases]), json!({})),
            PredictModel::MaskedMlp(m) => m.to_json_parts(),
            PredictModel::Bayes(m) => (json!([]), json!({ "joint": m.joint })),
            PredictModel::ExternalTable(m) => (json!([m.inputs, m.outputs]), json!({ "output": m.kind })),
        };
        json!({ "kind": self.kind_name(), "weights": weights, "meta": meta })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_json_value()).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        Self::from_json_value(&value)
    }

    pub fn from_json_value(value: &Value) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Envelope {
            kind: String,
            weights: Value,
            #[serde(default)]
            meta: Value,
        }
        let env: Envelope = serde_json::from_value(value.clone())?;
        let bad = |what: &str| Error::Config(format!("model `{}`: {what}", env.kind));
        match env.kind.as_str() {
            "linear" => {
                let (w, b): (Vec<f64>, [f64; 1]) =
                    serde_json::from_value(env.weights.clone()).map_err(|_| bad("weights must be [[w..], [b]]"))?;
                Ok(PredictModel::Linear(LinearModel::new(w, b[0])))
            }
            "logistic" => {
                let (w, b): (Vec<Vec<f64>>, Vec<f64>) =
                    serde_json::from_value(env.weights.clone()).map_err(|_| bad("weights must be [W, b]"))?;
                if w.len() != b.len() || w.iter().any(|r| r.len() != w[0].len()) {
                    return Err(bad("inconsistent weight shapes"));
                }
                Ok(PredictModel::Logistic(LogisticModel { weights: w, biases: b }))
            }
            "masked-mlp" => Ok(PredictModel::MaskedMlp(MaskedPredictor::from_json_parts(
                &env.weights,
                &env.meta,
            )?)),
            "bayes-from-joint" => {
                let joint = env.meta.get("joint").ok_or_else(|| bad("meta.joint missing"))?;
                let joint: DiscreteJoint = serde_json::from_value(joint.clone())?;
                Ok(PredictModel::Bayes(BayesModel::new(joint)))
            }
            "external-table" => {
                let (inputs, outputs): (Vec<Vec<f64>>, Vec<Vec<f64>>) =
                    serde_json::from_value(env.weights.clone()).map_err(|_| bad("weights must be [inputs, outputs]"))?;
                let kind: OutputKind = env
                    .meta
                    .get("output")
                    .map(|v| serde_json::from_value(v.clone()))
                    .transpose()?
                    .unwrap_or(OutputKind::Regression);
                if inputs.len() != outputs.len() || outputs.iter().any(|o| o.len() != kind.dim()) {
                    return Err(bad("table shapes disagree"));
                }
                Ok(PredictModel::ExternalTable(TableModel { inputs, outputs, kind }))
            }
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Predictor for PredictModel {
    fn n_features(&self) -> usize {
        self.inner().n_features()
    }

    fn output_kind(&self) -> OutputKind {
        self.inner().output_kind()
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.inner().predict(x)
    }
}

impl From<LinearModel> for PredictModel {
    fn from(m: LinearModel) -> Self {
        PredictModel::Linear(m)
    }
}

impl From<LogisticModel> for PredictModel {
    fn from(m: LogisticModel) -> Self {
        PredictModel::Logistic(m)
    }
}

impl From<MaskedPredictor> for PredictModel {
    fn from(m: MaskedPredictor) -> Self {
        PredictModel::MaskedMlp(m)
    }
}

impl From<BayesModel> for PredictModel {
    fn from(m: BayesModel) -> Self {
        PredictModel::Bayes(m)
    }
}
