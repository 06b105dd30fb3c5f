//! Datasets, built-in models, exact discrete joints and training routines.

mod dataset;
mod joint;
mod mlp;
mod model;
mod train;

pub use dataset::{Dataset, DatasetSchema, FeatureKind, Labels, TaskKind};
pub use joint::DiscreteJoint;
pub use mlp::{train_masked_surrogate, train_with_missingness, Activation, MaskedPredictor, Mlp, MlpConfig};
pub use model::{
    bayes_predictor, BayesModel, FnModel, LinearModel, LogisticModel, OutputKind, PredictModel, Predictor,
    TableModel,
};
pub use train::{logistic_stable_lr, train_linear, train_logistic, train_logistic_traced, LogisticConfig};
