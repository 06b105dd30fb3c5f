//! Feature-removal strategies: each turns a model `f` into a subset
//! function `F(x, S)` that predicts using only the features in `S`.

mod conditional;
mod marginal;
mod separate;

use std::sync::Arc;

pub use conditional::{
    bayes_subset_predictor, extend_conditional_empirical, extend_conditional_exact, BayesSubsetPredictor,
    ConditionalEmpirical, ConditionalExact, NoMatchFallback,
};
pub use marginal::{
    extend_default, extend_monte_carlo, DefaultExtension, FeatureRange, MonteCarloExtension, ReplacementDistribution,
    Sampling,
};
pub use separate::{extend_separate_models, wrap_masked, MaskedExtension, SeparateModels, Trainer};

use crate::data::{Dataset, DiscreteJoint, MaskedPredictor, OutputKind, Predictor};
use crate::error::{Error, Result};
use crate::game::Mask;
use crate::numeric::hash_words;

/// `F(x, S)`: a prediction that may only depend on `x_S`.
pub trait SubsetFunction: Send + Sync {
    fn n_features(&self) -> usize;

    fn output_kind(&self) -> OutputKind;

    fn evaluate(&self, x: &[f64], s: Mask) -> Result<Vec<f64>>;
}

impl<F: SubsetFunction + ?Sized> SubsetFunction for Arc<F> {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }

    fn output_kind(&self) -> OutputKind {
        (**self).output_kind()
    }

    fn evaluate(&self, x: &[f64], s: Mask) -> Result<Vec<f64>> {
        (**self).evaluate(x, s)
    }
}

impl<F: SubsetFunction + ?Sized> SubsetFunction for Box<F> {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }

    fn output_kind(&self) -> OutputKind {
        (**self).output_kind()
    }

    fn evaluate(&self, x: &[f64], s: Mask) -> Result<Vec<f64>> {
        (**self).evaluate(x, s)
    }
}

pub(crate) fn check_query(x: &[f64], s: Mask, d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: x.len(),
        });
    }
    if s.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: s.dim(),
        });
    }
    Ok(())
}

/// Seed for the random draws behind `F(x, S)`; depends only on `(x_S, S)`
/// so that Monte Carlo subset functions are exactly invariant to `x_{S̄}`.
pub(crate) fn query_seed(master: u64, x: &[f64], s: Mask) -> u64 {
    hash_words(
        master,
        std::iter::once(s.bits()).chain(s.iter().map(|j| x[j].to_bits())),
    )
}

/// The tagged union of supported removal strategies.
#[derive(Debug, Clone)]
pub enum RemovalStrategy {
    Zeros,
    Default { reference: Vec<f64> },
    MarginalJoint { background: Dataset, sampling: Sampling },
    ProductOfMarginals { background: Dataset, sampling: Sampling },
    Uniform { ranges: Vec<FeatureRange>, sampling: Sampling },
    /// Categorical replacement draws; not a valid subset function.
    ReplacementCategorical { background: Dataset, sampling: Sampling },
    ConditionalEmpirical { background: Dataset, fallback: NoMatchFallback },
    ConditionalExact { joint: DiscreteJoint },
    Surrogate { predictor: MaskedPredictor },
    Missingness { predictor: MaskedPredictor },
    SeparateModels { trainer: Trainer, data: Dataset },
}

impl RemovalStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            RemovalStrategy::Zeros => "zeros",
            RemovalStrategy::Default { .. } => "default",
            RemovalStrategy::MarginalJoint { .. } => "marginal",
            RemovalStrategy::ProductOfMarginals { .. } => "product",
            RemovalStrategy::Uniform { .. } => "uniform",
            RemovalStrategy::ReplacementCategorical { .. } => "replacement",
            RemovalStrategy::ConditionalEmpirical { .. } => "conditional-empirical",
            RemovalStrategy::ConditionalExact { .. } => "conditional-exact",
            RemovalStrategy::Surrogate { .. } => "surrogate",
            RemovalStrategy::Missingness { .. } => "missingness",
            RemovalStrategy::SeparateModels { .. } => "separate-models",
        }
    }

    /// Whether the resulting function satisfies the subset-function invariance.
    pub fn is_subset_function(&self) -> bool {
        !matches!(self, RemovalStrategy::ReplacementCategorical { .. })
    }

    /// Builds the subset function for `model`. Strategies that carry their
    /// own predictor (surrogate, missingness, separate models) ignore it.
    pub fn build(&self, model: Arc<dyn Predictor>, seed: u64) -> Result<Arc<dyn SubsetFunction>> {
        let d = model.n_features();
        Ok(match self {
            RemovalStrategy::Zeros => Arc::new(extend_default(model, vec![0.0; d])?),
            RemovalStrategy::Default { reference } => Arc::new(extend_default(model, reference.clone())?),
            RemovalStrategy::MarginalJoint { background, sampling } => Arc::new(extend_monte_carlo(
                model,
                ReplacementDistribution::marginal_joint(background)?,
                *sampling,
                seed,
            )?),
            RemovalStrategy::ProductOfMarginals { background, sampling } => Arc::new(extend_monte_carlo(
                model,
                ReplacementDistribution::product_of_marginals(background)?,
                *sampling,
                seed,
            )?),
            RemovalStrategy::Uniform { ranges, sampling } => Arc::new(extend_monte_carlo(
                model,
                ReplacementDistribution::Uniform(ranges.clone()),
                *sampling,
                seed,
            )?),
            RemovalStrategy::ReplacementCategorical { background, sampling } => Arc::new(extend_monte_carlo(
                model,
                ReplacementDistribution::replacement_categorical(background)?,
                *sampling,
                seed,
            )?),
            RemovalStrategy::ConditionalEmpirical { background, fallback } => Arc::new(
                extend_conditional_empirical(model, background.clone())?.with_fallback(*fallback),
            ),
            RemovalStrategy::ConditionalExact { joint } => Arc::new(extend_conditional_exact(model, joint.clone())?),
            RemovalStrategy::Surrogate { predictor } | RemovalStrategy::Missingness { predictor } => {
                Arc::new(wrap_masked(predictor.clone()))
            }
            RemovalStrategy::SeparateModels { trainer, data } => Arc::new(extend_separate_models(trainer, data)?),
        })
    }
}
