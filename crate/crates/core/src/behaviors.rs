//! Model behaviors: turning a subset function into a cooperative game.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Labels, OutputKind};
use crate::error::{Error, Result};
use crate::game::{check_exhaustive, enumerate_subsets, CooperativeGame, Mask};
use crate::numeric::compensated_sum;
use crate::removal::SubsetFunction;

/// Probabilities are clipped to `[EPS, 1 − EPS]` before taking logs.
pub const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFn {
    CrossEntropy,
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkFn {
    #[default]
    Identity,
    /// `ln(p / (1 − p))` of the selected class probability.
    LogOdds,
}

/// A label compared against a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Class(usize),
    Value(Vec<f64>),
    /// A probability vector, compared through the soft cross entropy.
    Probs(Vec<f64>),
}

impl LossFn {
    /// `ℓ(prediction, target)`; cross entropy clips the prediction at [`EPS`].
    pub fn loss(&self, pred: &[f64], target: &Target) -> Result<f64> {
        let value = match (self, target) {
            (LossFn::CrossEntropy, Target::Class(c)) => {
                let p = *pred
                    .get(*c)
                    .ok_or(Error::IndexOutOfRange { index: *c, d: pred.len() })?;
                -p.max(EPS).ln()
            }
            (LossFn::CrossEntropy, Target::Probs(a)) => {
                check_target_len(pred, a)?;
                -compensated_sum(
                    a.iter()
                        .zip(pred)
                        .filter(|(&aj, _)| aj != 0.0)
                        .map(|(aj, bj)| aj * bj.max(EPS).ln()),
                )
            }
            (LossFn::CrossEntropy, Target::Value(_)) => {
                return Err(Error::KindMismatch(
                    "cross entropy needs a class or probability target".into(),
                ))
            }
            (LossFn::Mse, Target::Value(y)) | (LossFn::Mse, Target::Probs(y)) => {
                check_target_len(pred, y)?;
                compensated_sum(pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)))
            }
            (LossFn::Mse, Target::Class(c)) => {
                if *c >= pred.len() {
                    return Err(Error::IndexOutOfRange { index: *c, d: pred.len() });
                }
                compensated_sum(pred.iter().enumerate().map(|(k, p)| {
                    let t = if k == *c { 1.0 } else { 0.0 };
                    (p - t) * (p - t)
                }))
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFiniteValue(format!("loss evaluated to {value}")))
        }
    }

    fn target_for_output(&self, full: &[f64]) -> Target {
        match self {
            LossFn::CrossEntropy => Target::Probs(full.to_vec()),
            LossFn::Mse => Target::Value(full.to_vec()),
        }
    }
}

fn check_target_len(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: pred.len(),
            actual: target.len(),
        });
    }
    Ok(())
}

impl LinkFn {
    pub fn apply(&self, p: f64) -> f64 {
        match self {
            LinkFn::Identity => p,
            LinkFn::LogOdds => {
                let p = p.clamp(EPS, 1.0 - EPS);
                (p / (1.0 - p)).ln()
            }
        }
    }
}

/// The model behavior analyzed by an explanation.
#[derive(Debug, Clone)]
pub enum BehaviorSpec {
    /// `u_x(S) = link(F(x_S)_k)`.
    Prediction { x: Vec<f64>, class: Option<usize>, link: LinkFn },
    /// `v_xy(S) = −ℓ(F(x_S), y)`.
    PredictionLoss { x: Vec<f64>, y: Target, loss: LossFn },
    /// `v_x(S) = −E_{p(Y|x)}[ℓ(F(x_S), Y)]` for a class distribution.
    PredictionMeanLoss { x: Vec<f64>, label_probs: Vec<f64>, loss: LossFn },
    /// `v(S) = −E_{XY}[ℓ(F(X_S), Y)]`.
    DatasetLoss { data: Dataset, loss: LossFn },
    /// `w_x(S) = −ℓ(F(x_S), F(x))`.
    OutputLoss { x: Vec<f64>, loss: LossFn },
    /// `w(S) = −E_X[ℓ(F(X_S), F(X))]`.
    DatasetOutputLoss { data: Dataset, loss: LossFn },
}

impl BehaviorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            BehaviorSpec::Prediction { .. } => "prediction",
            BehaviorSpec::PredictionLoss { .. } => "prediction_loss",
            BehaviorSpec::PredictionMeanLoss { .. } => "prediction_mean_loss",
            BehaviorSpec::DatasetLoss { .. } => "dataset_loss",
            BehaviorSpec::OutputLoss { .. } => "output_loss",
            BehaviorSpec::DatasetOutputLoss { .. } => "dataset_output_loss",
        }
    }
}

/// Converts dataset labels into per-row targets.
pub fn row_targets(data: &Dataset) -> Result<Vec<Target>> {
    match data.labels() {
        Labels::Regression(y) => Ok(y.iter().map(|&v| Target::Value(vec![v])).collect()),
        Labels::Classification { classes, .. } => Ok(classes.iter().map(|&c| Target::Class(c)).collect()),
        Labels::Unlabeled => Err(Error::KindMismatch("dataset loss needs labels".into())),
    }
}

enum Prepared {
    Prediction { x: Vec<f64>, k: usize, link: LinkFn },
    Single { x: Vec<f64>, targets: Vec<(Target, f64)>, loss: LossFn },
    Rows { rows: Vec<Vec<f64>>, targets: Vec<Target>, weights: Vec<f64>, loss: LossFn },
}

/// A cooperative game produced by [`make_game`].
pub struct BehaviorGame {
    f: Arc<dyn SubsetFunction>,
    prepared: Prepared,
    name: &'static str,
}

impl BehaviorGame {
    pub fn behavior(&self) -> &'static str {
        self.name
    }
}

fn check_x(f: &dyn SubsetFunction, x: &[f64]) -> Result<()> {
    if x.len() != f.n_features() {
        return Err(Error::DimensionMismatch {
            expected: f.n_features(),
            actual: x.len(),
        });
    }
    Ok(())
}

fn check_data(f: &dyn SubsetFunction, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.n_features() != f.n_features() {
        return Err(Error::DimensionMismatch {
            expected: f.n_features(),
            actual: data.n_features(),
        });
    }
    Ok(())
}

fn check_loss_kind(f: &dyn SubsetFunction, loss: LossFn) -> Result<()> {
    if loss == LossFn::CrossEntropy && !f.output_kind().is_classification() {
        return Err(Error::KindMismatch(
            "cross entropy needs a probabilistic (classification) output".into(),
        ));
    }
    Ok(())
}

/// Builds the game `u(S)` for a behavior of `F`. Output-loss behaviors
/// evaluate `F(x, D)` once up front.
pub fn make_game(f: Arc<dyn SubsetFunction>, spec: &BehaviorSpec) -> Result<BehaviorGame> {
    let d = f.n_features();
    let full = Mask::full(d);
    let prepared = match spec {
        BehaviorSpec::Prediction { x, class, link } => {
            check_x(f.as_ref(), x)?;
            let k = match (f.output_kind(), class) {
                (OutputKind::Regression, None) | (OutputKind::Regression, Some(0)) => {
                    if *link == LinkFn::LogOdds {
                        return Err(Error::KindMismatch("log-odds link needs a probability output".into()));
                    }
                    0
                }
                (OutputKind::Regression, Some(c)) => return Err(Error::IndexOutOfRange { index: *c, d: 1 }),
                (OutputKind::Classification(_), None) => {
                    return Err(Error::KindMismatch(
                        "a classification prediction needs an explicit class index".into(),
                    ))
                }
                (OutputKind::Classification(n), Some(c)) => {
                    if *c >= n {
                        return Err(Error::IndexOutOfRange { index: *c, d: n });
                    }
                    *c
                }
            };
            Prepared::Prediction {
                x: x.clone(),
                k,
                link: *link,
            }
        }
        BehaviorSpec::PredictionLoss { x, y, loss } => {
            check_x(f.as_ref(), x)?;
            check_loss_kind(f.as_ref(), *loss)?;
            Prepared::Single {
                x: x.clone(),
                targets: vec![(y.clone(), 1.0)],
                loss: *loss,
            }
        }
        BehaviorSpec::PredictionMeanLoss { x, label_probs, loss } => {
            check_x(f.as_ref(), x)?;
            check_loss_kind(f.as_ref(), *loss)?;
            match f.output_kind() {
                OutputKind::Classification(n) if n == label_probs.len() => {}
                _ => {
                    return Err(Error::KindMismatch(
                        "label distribution must cover every output class".into(),
                    ))
                }
            }
            Prepared::Single {
                x: x.clone(),
                targets: label_probs
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(c, &p)| (Target::Class(c), p))
                    .collect(),
                loss: *loss,
            }
        }
        BehaviorSpec::OutputLoss { x, loss } => {
            check_x(f.as_ref(), x)?;
            check_loss_kind(f.as_ref(), *loss)?;
            let out = f.evaluate(x, full)?;
            Prepared::Single {
                x: x.clone(),
                targets: vec![(loss.target_for_output(&out), 1.0)],
                loss: *loss,
            }
        }
        BehaviorSpec::DatasetLoss { data, loss } => {
            check_data(f.as_ref(), data)?;
            check_loss_kind(f.as_ref(), *loss)?;
            Prepared::Rows {
                rows: data.rows().map(<[f64]>::to_vec).collect(),
                targets: row_targets(data)?,
                weights: (0..data.n_rows()).map(|i| data.weight(i)).collect(),
                loss: *loss,
            }
        }
        BehaviorSpec::DatasetOutputLoss { data, loss } => {
            check_data(f.as_ref(), data)?;
            check_loss_kind(f.as_ref(), *loss)?;
            let targets = data
                .rows()
                .collect::<Vec<_>>()
                .par_iter()
                .map(|x| f.evaluate(x, full).map(|out| loss.target_for_output(&out)))
                .collect::<Result<Vec<_>>>()?;
            Prepared::Rows {
                rows: data.rows().map(<[f64]>::to_vec).collect(),
                targets,
                weights: (0..data.n_rows()).map(|i| data.weight(i)).collect(),
                loss: *loss,
            }
        }
    };
    Ok(BehaviorGame {
        f,
        prepared,
        name: spec.name(),
    })
}

impl CooperativeGame for BehaviorGame {
    fn players(&self) -> usize {
        self.f.n_features()
    }

    fn value(&self, s: Mask) -> Result<f64> {
        let value = match &self.prepared {
            Prepared::Prediction { x, k, link } => {
                let out = self.f.evaluate(x, s)?;
                let p = *out.get(*k).ok_or(Error::IndexOutOfRange { index: *k, d: out.len() })?;
                link.apply(p)
            }
            Prepared::Single { x, targets, loss } => {
                let out = self.f.evaluate(x, s)?;
                let terms = targets
                    .iter()
                    .map(|(t, w)| loss.loss(&out, t).map(|l| w * l))
                    .collect::<Result<Vec<_>>>()?;
                -compensated_sum(terms)
            }
            Prepared::Rows {
                rows,
                targets,
                weights,
                loss,
            } => {
                let terms = rows
                    .par_iter()
                    .zip(targets.par_iter())
                    .zip(weights.par_iter())
                    .map(|((x, t), w)| self.f.evaluate(x, s).and_then(|out| loss.loss(&out, t)).map(|l| w * l))
                    .collect::<Result<Vec<_>>>()?;
                -compensated_sum(terms)
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFiniteValue(format!("game value {value} at {s}")))
        }
    }
}

/// `v(S) = −Σ_i w_i ℓ(F(x_i, S), y_i)`; the weights are probabilities when
/// the dataset enumerates a discrete joint, giving the exact expectation.
pub fn dataset_loss_value(f: Arc<dyn SubsetFunction>, data: &Dataset, loss: LossFn, s: Mask) -> Result<f64> {
    make_game(f, &BehaviorSpec::DatasetLoss { data: data.clone(), loss })?.value(s)
}

/// `w(S) = −E_X[(F(X_S) − F(X))²]`, so that `w(S) − w(∅)` is the variance
/// of the model output explained by `X_S` when `F` is the exact conditional
/// expectation.
pub fn variance_explained_game(f: Arc<dyn SubsetFunction>, data: &Dataset) -> Result<BehaviorGame> {
    if f.output_kind().dim() != 1 {
        return Err(Error::KindMismatch("variance explained needs a scalar output".into()));
    }
    make_game(
        f,
        &BehaviorSpec::DatasetOutputLoss {
            data: data.clone(),
            loss: LossFn::Mse,
        },
    )
}

/// Largest absolute violation of each identity linking the behaviors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RelationshipReport {
    /// `v_xy(S) = −ℓ(F(x_S), y)`.
    pub prediction_loss: f64,
    /// `w_x(S) = −ℓ(F(x_S), F(x))`.
    pub output_loss: f64,
    /// `v_x(S) = E_{p(Y|x)}[v_xY(S)]` (classification only).
    pub mean_loss: f64,
    /// `v(S) = E_{XY}[v_XY(S)]`.
    pub dataset_loss: f64,
    /// `w(S) = E_X[w_X(S)]`.
    pub dataset_output_loss: f64,
}

impl RelationshipReport {
    pub fn max_violation(&self) -> f64 {
        [
            self.prediction_loss,
            self.output_loss,
            self.mean_loss,
            self.dataset_loss,
            self.dataset_output_loss,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Checks the behavior identities over every coalition, using the rows of
/// `data` as `(x, y)` pairs. For classification, `p(Y | x)` is taken as the
/// weighted label distribution among rows with the same `x`.
pub fn relationship_check(f: Arc<dyn SubsetFunction>, data: &Dataset, loss: LossFn) -> Result<RelationshipReport> {
    let d = f.n_features();
    check_exhaustive(d)?;
    check_data(f.as_ref(), data)?;
    let targets = row_targets(data)?;
    let mut report = RelationshipReport::default();
    let n = data.n_rows();
    let weights: Vec<f64> = (0..n).map(|i| data.weight(i)).collect();

    let mut v_xy = Vec::with_capacity(n);
    let mut w_x = Vec::with_capacity(n);
    for (i, target) in targets.iter().enumerate() {
        let x = data.row(i).to_vec();
        v_xy.push(make_game(
            f.clone(),
            &BehaviorSpec::PredictionLoss {
                x: x.clone(),
                y: target.clone(),
                loss,
            },
        )?);
        w_x.push(make_game(f.clone(), &BehaviorSpec::OutputLoss { x, loss })?);
    }
    let dataset = make_game(f.clone(), &BehaviorSpec::DatasetLoss { data: data.clone(), loss })?;
    let dataset_output = make_game(f.clone(), &BehaviorSpec::DatasetOutputLoss { data: data.clone(), loss })?;

    let label_dists: Option<Vec<Vec<f64>>> = match (data.labels(), f.output_kind()) {
        (Labels::Classification { classes, n_classes }, OutputKind::Classification(k)) if *n_classes == k => Some(
            (0..n)
                .map(|i| {
                    let mut p = vec![0.0; k];
                    for r in 0..n {
                        if data.row(r) == data.row(i) {
                            p[classes[r]] += weights[r];
                        }
                    }
                    let total: f64 = p.iter().sum();
                    p.iter().map(|v| v / total).collect()
                })
                .collect(),
        ),
        _ => None,
    };
    let mean_games = match &label_dists {
        Some(dists) => Some(
            dists
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    make_game(
                        f.clone(),
                        &BehaviorSpec::PredictionMeanLoss {
                            x: data.row(i).to_vec(),
                            label_probs: p.clone(),
                            loss,
                        },
                    )
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };

    let full = Mask::full(d);
    for s in enumerate_subsets(d)? {
        let mut vxy_s = Vec::with_capacity(n);
        let mut wx_s = Vec::with_capacity(n);
        for i in 0..n {
            let x = data.row(i);
            let out = f.evaluate(x, s)?;
            let a = v_xy[i].value(s)?;
            let direct = -loss.loss(&out, &targets[i])?;
            report.prediction_loss = report.prediction_loss.max((a - direct).abs());
            let b = w_x[i].value(s)?;
            let reference = loss.target_for_output(&f.evaluate(x, full)?);
            let direct = -loss.loss(&out, &reference)?;
            report.output_loss = report.output_loss.max((b - direct).abs());
            vxy_s.push(a);
            wx_s.push(b);
        }
        if let (Some(games), Some(dists)) = (&mean_games, &label_dists) {
            for i in 0..n {
                let x = data.row(i);
                let expected = compensated_sum(dists[i].iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(c, &p)| {
                    let out = f.evaluate(x, s).expect("evaluated above");
                    -p * loss.loss(&out, &Target::Class(c)).expect("evaluated above")
                }));
                report.mean_loss = report.mean_loss.max((games[i].value(s)? - expected).abs());
            }
        }
        let expected = compensated_sum(vxy_s.iter().zip(&weights).map(|(v, w)| v * w));
        report.dataset_loss = report.dataset_loss.max((dataset.value(s)? - expected).abs());
        let expected = compensated_sum(wx_s.iter().zip(&weights).map(|(v, w)| v * w));
        report.dataset_output_loss = report.dataset_output_loss.max((dataset_output.value(s)? - expected).abs());
    }
    Ok(report)
}
