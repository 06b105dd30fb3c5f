use serde::{Deserialize, Serialize};

use super::{check_query, SubsetFunction};
use crate::data::{train_linear, train_logistic, Dataset, LogisticConfig, MaskedPredictor, OutputKind, Predictor};
use crate::error::{Error, Result};
use crate::game::{enumerate_subsets, Mask};

/// Largest feature count for which one model per subset is trained.
pub const SEPARATE_MODELS_CAP: usize = 12;

/// Learning algorithm used for every feature subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trainer {
    Linear { ridge: f64 },
    Logistic(LogisticConfig),
}

impl Trainer {
    fn fit(&self, data: &Dataset) -> Result<Box<dyn Predictor>> {
        Ok(match self {
            Trainer::Linear { ridge } => Box::new(train_linear(data, *ridge)?),
            Trainer::Logistic(config) => Box::new(train_logistic(data, config)?),
        })
    }
}

/// One model `f_S` trained on `x_S` alone for every subset `S`.
pub struct SeparateModels {
    d: usize,
    kind: OutputKind,
    models: Vec<Box<dyn Predictor>>,
}

pub fn extend_separate_models(trainer: &Trainer, data: &Dataset) -> Result<SeparateModels> {
    let d = data.n_features();
    if d > SEPARATE_MODELS_CAP {
        return Err(Error::DimensionTooLarge {
            d,
            cap: SEPARATE_MODELS_CAP,
        });
    }
    let models = enumerate_subsets(d)?
        .map(|s| trainer.fit(&data.select_columns(s)))
        .collect::<Result<Vec<_>>>()?;
    let kind = models[models.len() - 1].output_kind();
    Ok(SeparateModels { d, kind, models })
}

impl SeparateModels {
    pub fn model(&self, s: Mask) -> &dyn Predictor {
        self.models[s.index()].as_ref()
    }
}

impl SubsetFunction for SeparateModels {
    fn n_features(&self) -> usize {
        self.d
    }

    fn output_kind(&self) -> OutputKind {
        self.kind
    }

    fn evaluate(&self, x: &[f64], s: Mask) -> Result<Vec<f64>> {
        check_query(x, s, self.d)?;
        let xs: Vec<f64> = s.iter().map(|j| x[j]).collect();
        self.model(s).predict(&xs)
    }
}

/// A surrogate or missingness-trained network used as `F(x, S)` directly.
#[derive(Debug, Clone)]
pub struct MaskedExtension {
    predictor: MaskedPredictor,
}

pub fn wrap_masked(predictor: MaskedPredictor) -> MaskedExtension {
    MaskedExtension { predictor }
}

impl MaskedExtension {
    pub fn predictor(&self) -> &MaskedPredictor {
        &self.predictor
    }
}

impl SubsetFunction for MaskedExtension {
    fn n_features(&self) -> usize {
        self.predictor.n_features()
    }

    fn output_kind(&self) -> OutputKind {
        self.predictor.output_kind()
    }

    fn evaluate(&self, x: &[f64], s: Mask) -> Result<Vec<f64>> {
        self.predictor.predict_masked(x, s)
    }
}
