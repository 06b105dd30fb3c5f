//! Declarative descriptions of an explanation method (removal, behavior,
//! summary) and of the data it runs on, plus the pipeline that executes them.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::behaviors::{make_game, BehaviorSpec, LinkFn, LossFn, Target};
use crate::data::{
    bayes_predictor, train_masked_surrogate, train_with_missingness, Dataset, DatasetSchema, DiscreteJoint, MlpConfig,
    PredictModel, Predictor,
};
use crate::error::{Error, Result};
use crate::estimation::{
    banzhaf_sampled, mean_when_included_sampled, shapley_sampled, wls_sampled, EstimateResult, EstimatorConfig,
    MaskSampler,
};
use crate::game::{CooperativeGame, Mask};
use crate::removal::{
    bayes_subset_predictor, FeatureRange, NoMatchFallback, RemovalStrategy, Sampling, SubsetFunction, Trainer,
};
use crate::summaries::{
    banzhaf_exact, include_individual, mean_when_included_exact_p, normalize_attributions, remove_individual,
    select_fixed_size, select_low_value, select_min_size, select_min_size_greedy, select_partition, select_regularized,
    selection_via_excess, shapley_exact, wls_fit, AttributionResult, ExcessProblem, Regularizer, SelectionResult,
    WeightingKernel,
};

/// Current configuration format version.
pub const CONFIG_VERSION: u32 = 1;

/// A model given either as a path to a model file or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Path(PathBuf),
    Inline(serde_json::Value),
}

/// Data and model references; relative paths resolve against the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSource>,
    /// CSV file of the (labeled) evaluation dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Schema sidecar for `dataset` and `background`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    /// CSV file of background rows used by removal strategies; defaults to `dataset`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<PathBuf>,
    /// Discrete joint distribution; supplies the Bayes model, the dataset and
    /// the background when those are not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<PathBuf>,
}

/// Loaded data shared by every method run on it.
#[derive(Clone, Default)]
pub struct Context {
    pub model: Option<Arc<dyn Predictor>>,
    pub dataset: Option<Dataset>,
    pub background: Option<Dataset>,
    pub joint: Option<DiscreteJoint>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

impl Context {
    pub fn load(data: &DataConfig, base: &Path) -> Result<Self> {
        let joint = data
            .joint
            .as_ref()
            .map(|p| {
                let path = resolve(base, p);
                DiscreteJoint::from_json(&read(&path)?)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
            })
            .transpose()?;
        let model: Option<Arc<dyn Predictor>> = match &data.model {
            Some(ModelSource::Path(p)) => {
                let path = resolve(base, p);
                let m = PredictModel::from_json(&read(&path)?)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                Some(Arc::new(m))
            }
            Some(ModelSource::Inline(v)) => Some(Arc::new(
                PredictModel::from_json_value(v).map_err(|e| Error::Config(format!("model: {e}")))?,
            )),
            None => joint.as_ref().map(|j| Arc::new(bayes_predictor(j)) as Arc<dyn Predictor>),
        };
        let schema = match &data.schema {
            Some(p) => {
                let path = resolve(base, p);
                serde_json::from_str::<DatasetSchema>(&read(&path)?)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => DatasetSchema::default(),
        };
        let load_csv = |p: &PathBuf| -> Result<Dataset> {
            let path = resolve(base, p);
            if !path.exists() {
                return Err(Error::Config(format!("dataset file {} does not exist", path.display())));
            }
            Dataset::from_csv(&path, &schema)
        };
        let dataset = match &data.dataset {
            Some(p) => Some(load_csv(p)?),
            None => joint.as_ref().map(DiscreteJoint::enumerate_dataset),
        };
        let background = match &data.background {
            Some(p) => Some(load_csv(p)?),
            None => match (&data.dataset, &joint) {
                (None, Some(j)) => Some(j.feature_dataset()),
                _ => dataset.clone(),
            },
        };
        let ctx = Self {
            model,
            dataset,
            background,
            joint,
        };
        ctx.check_dimensions()?;
        Ok(ctx)
    }

    /// All components must agree on the number of features.
    pub fn check_dimensions(&self) -> Result<()> {
        let dims = [
            ("model", self.model.as_ref().map(|m| m.n_features())),
            ("dataset", self.dataset.as_ref().map(Dataset::n_features)),
            ("background", self.background.as_ref().map(Dataset::n_features)),
            ("joint", self.joint.as_ref().map(DiscreteJoint::n_features)),
        ];
        let mut known: Option<(&str, usize)> = None;
        for (name, d) in dims {
            match (d, known) {
                (Some(d), Some((other, e))) if d != e => {
                    return Err(Error::Config(format!("{name} has {d} features but {other} has {e}")))
                }
                (Some(d), None) => known = Some((name, d)),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<Arc<dyn Predictor>> {
        self.model
            .clone()
            .ok_or_else(|| Error::Config("a model (or a joint for the Bayes model) is required".into()))
    }

    pub fn dataset(&self) -> Result<&Dataset> {
        self.dataset
            .as_ref()
            .ok_or_else(|| Error::Config("a dataset (or a joint) is required".into()))
    }

    pub fn background(&self) -> Result<&Dataset> {
        self.background
            .as_ref()
            .ok_or_else(|| Error::Config("a background dataset (or a joint) is required".into()))
    }

    pub fn joint(&self) -> Result<&DiscreteJoint> {
        self.joint
            .as_ref()
            .ok_or_else(|| Error::Config("a discrete joint is required".into()))
    }
}

fn default_sampling() -> Sampling {
    Sampling::default()
}

fn default_sampler() -> MaskSampler {
    MaskSampler::UniformCardinality
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RemovalConfig {
    Zeros {},
    Default {
        reference: Vec<f64>,
    },
    /// Default values set to the background mean.
    Mean {},
    Marginal {
        #[serde(default = "default_sampling")]
        sampling: Sampling,
    },
    Product {
        #[serde(default = "default_sampling")]
        sampling: Sampling,
    },
    Uniform {
        #[serde(default = "default_sampling")]
        sampling: Sampling,
    },
    Replacement {
        #[serde(default = "default_sampling")]
        sampling: Sampling,
    },
    ConditionalEmpirical {
        #[serde(default)]
        fallback: NoMatchFallback,
    },
    ConditionalExact {},
    /// `p(Y | X_S)` read directly from the joint.
    BayesConditional {},
    Surrogate {
        #[serde(default)]
        mlp: MlpConfig,
        #[serde(default = "default_sampler")]
        sampler: MaskSampler,
    },
    Missingness {
        #[serde(default)]
        mlp: MlpConfig,
        #[serde(default = "default_sampler")]
        sampler: MaskSampler,
    },
    SeparateModels {
        trainer: Trainer,
    },
}

impl RemovalConfig {
    pub fn name(&self) -> String {
        serde_json::to_value(self).expect("serializes")["kind"]
            .as_str()
            .expect("tagged")
            .to_string()
    }

    /// Builds the subset function, training any models it needs.
    pub fn build(&self, ctx: &Context, seed: u64) -> Result<Arc<dyn SubsetFunction>> {
        let strategy = match self {
            RemovalConfig::BayesConditional {} => return Ok(Arc::new(bayes_subset_predictor(ctx.joint()?))),
            RemovalConfig::Zeros {} => RemovalStrategy::Zeros,
            RemovalConfig::Default { reference } => RemovalStrategy::Default {
                reference: reference.clone(),
            },
            RemovalConfig::Mean {} => {
                let bg = ctx.background()?;
                if bg.is_empty() {
                    return Err(Error::EmptyBackground);
                }
                let reference = (0..bg.n_features())
                    .map(|j| (0..bg.n_rows()).map(|i| bg.weight(i) * bg.row(i)[j]).sum())
                    .collect();
                RemovalStrategy::Default { reference }
            }
            RemovalConfig::Marginal { sampling } => RemovalStrategy::MarginalJoint {
                background: ctx.background()?.clone(),
                sampling: *sampling,
            },
            RemovalConfig::Product { sampling } => RemovalStrategy::ProductOfMarginals {
                background: ctx.background()?.clone(),
                sampling: *sampling,
            },
            RemovalConfig::Uniform { sampling } => RemovalStrategy::Uniform {
                ranges: FeatureRange::from_background(ctx.background()?)?,
                sampling: *sampling,
            },
            RemovalConfig::Replacement { sampling } => RemovalStrategy::ReplacementCategorical {
                background: ctx.background()?.clone(),
                sampling: *sampling,
            },
            RemovalConfig::ConditionalEmpirical { fallback } => RemovalStrategy::ConditionalEmpirical {
                background: ctx.background()?.clone(),
                fallback: *fallback,
            },
            RemovalConfig::ConditionalExact {} => RemovalStrategy::ConditionalExact {
                joint: ctx.joint()?.clone(),
            },
            RemovalConfig::Surrogate { mlp, sampler } => {
                let teacher = ctx.model()?;
                RemovalStrategy::Surrogate {
                    predictor: train_masked_surrogate(teacher.as_ref(), ctx.background()?, *sampler, mlp)?,
                }
            }
            RemovalConfig::Missingness { mlp, sampler } => RemovalStrategy::Missingness {
                predictor: train_with_missingness(ctx.dataset()?, *sampler, mlp)?,
            },
            RemovalConfig::SeparateModels { trainer } => RemovalStrategy::SeparateModels {
                trainer: *trainer,
                data: ctx.dataset()?.clone(),
            },
        };
        let model = match &strategy {
            RemovalStrategy::Surrogate { predictor } | RemovalStrategy::Missingness { predictor } => {
                Arc::new(predictor.clone()) as Arc<dyn Predictor>
            }
            RemovalStrategy::SeparateModels { data, .. } => match &ctx.model {
                Some(m) => m.clone(),
                None => Arc::new(crate::data::LinearModel::new(vec![0.0; data.n_features()], 0.0)),
            },
            _ => ctx.model()?,
        };
        strategy.build(model, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BehaviorConfig {
    Prediction {
        x: Vec<f64>,
        #[serde(default)]
        class: Option<usize>,
        #[serde(default)]
        link: LinkFn,
    },
    PredictionLoss {
        x: Vec<f64>,
        y: Target,
        loss: LossFn,
    },
    PredictionMeanLoss {
        x: Vec<f64>,
        label_probs: Vec<f64>,
        loss: LossFn,
    },
    DatasetLoss {
        loss: LossFn,
    },
    OutputLoss {
        x: Vec<f64>,
        loss: LossFn,
    },
    DatasetOutputLoss {
        loss: LossFn,
    },
}

impl BehaviorConfig {
    pub fn name(&self) -> String {
        serde_json::to_value(self).expect("serializes")["kind"]
            .as_str()
            .expect("tagged")
            .to_string()
    }

    pub fn to_spec(&self, ctx: &Context) -> Result<BehaviorSpec> {
        Ok(match self.clone() {
            BehaviorConfig::Prediction { x, class, link } => BehaviorSpec::Prediction { x, class, link },
            BehaviorConfig::PredictionLoss { x, y, loss } => BehaviorSpec::PredictionLoss { x, y, loss },
            BehaviorConfig::PredictionMeanLoss { x, label_probs, loss } => {
                BehaviorSpec::PredictionMeanLoss { x, label_probs, loss }
            }
            BehaviorConfig::DatasetLoss { loss } => BehaviorSpec::DatasetLoss {
                data: ctx.dataset()?.clone(),
                loss,
            },
            BehaviorConfig::OutputLoss { x, loss } => BehaviorSpec::OutputLoss { x, loss },
            BehaviorConfig::DatasetOutputLoss { loss } => BehaviorSpec::DatasetOutputLoss {
                data: ctx.dataset()?.clone(),
                loss,
            },
        })
    }
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SummaryConfig {
    Shapley {},
    Banzhaf {},
    MeanWhenIncluded {
        #[serde(default = "half")]
        p: f64,
    },
    IncludeIndividual {},
    RemoveIndividual {},
    Wls {
        kernel: WeightingKernel,
        #[serde(default)]
        regularizer: Regularizer,
    },
    /// Another attribution summary, rescaled to sum to one.
    Normalized {
        inner: Box<SummaryConfig>,
    },
    ShapleySampled {
        #[serde(default)]
        estimator: EstimatorConfig,
    },
    BanzhafSampled {
        #[serde(default)]
        estimator: EstimatorConfig,
    },
    MeanWhenIncludedSampled {
        #[serde(default)]
        estimator: EstimatorConfig,
    },
    WlsSampled {
        kernel: WeightingKernel,
        #[serde(default)]
        estimator: EstimatorConfig,
    },
    SelectLowValue {
        lambda: f64,
    },
    SelectMinSize {
        t: f64,
    },
    SelectMinSizeGreedy {
        t: f64,
    },
    SelectFixedSize {
        k: usize,
    },
    SelectRegularized {
        lambda: f64,
    },
    SelectPartition {
        gamma: f64,
        lambda: f64,
    },
    SelectViaExcess {
        problem: ExcessProblem,
    },
}

/// The output of a summary technique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Explanation {
    Attribution(AttributionResult),
    Estimate(EstimateResult),
    Selection(SelectionResult),
}

impl Explanation {
    /// Per-feature scores; a selection maps to its 0/1 indicator.
    pub fn values(&self) -> Vec<f64> {
        match self {
            Explanation::Attribution(a) => a.values.clone(),
            Explanation::Estimate(e) => e.values.clone(),
            Explanation::Selection(s) => s.subset.to_indicator(),
        }
    }
}

/// Counts every evaluation of the wrapped game.
pub struct CountingGame<G> {
    inner: G,
    count: AtomicU64,
}

impl<G: CooperativeGame> CountingGame<G> {
    pub fn new(inner: G) -> Self {
        Self {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

impl<G: CooperativeGame> CooperativeGame for CountingGame<G> {
    fn players(&self) -> usize {
        self.inner.players()
    }

    fn value(&self, s: Mask) -> Result<f64> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.value(s)
    }
}

fn seeded(estimator: &EstimatorConfig, seed: u64) -> EstimatorConfig {
    EstimatorConfig {
        seed: hash_seed(seed, estimator.seed),
        ..*estimator
    }
}

fn hash_seed(master: u64, local: u64) -> u64 {
    crate::numeric::hash_words(master, [local])
}

impl SummaryConfig {
    pub fn name(&self) -> String {
        match self {
            SummaryConfig::Normalized { inner } => format!("{}_normalized", inner.name()),
            SummaryConfig::Wls { kernel, .. } => format!("wls_{}", kernel.name()),
            SummaryConfig::WlsSampled { kernel, .. } => format!("wls_sampled_{}", kernel.name()),
            other => serde_json::to_value(other).expect("serializes")["kind"]
                .as_str()
                .expect("tagged")
                .to_string(),
        }
    }

    /// Summarizes `game`; estimator seeds are mixed with `seed`.
    pub fn run(&self, game: &dyn CooperativeGame, seed: u64) -> Result<Explanation> {
        let counting = CountingGame::new(game);
        let g: &dyn CooperativeGame = &counting;
        let mut out = match self {
            SummaryConfig::Shapley {} => Explanation::Attribution(shapley_exact(g)?),
            SummaryConfig::Banzhaf {} => Explanation::Attribution(banzhaf_exact(g)?),
            SummaryConfig::MeanWhenIncluded { p } => Explanation::Attribution(mean_when_included_exact_p(g, *p)?),
            SummaryConfig::IncludeIndividual {} => Explanation::Attribution(include_individual(g)?),
            SummaryConfig::RemoveIndividual {} => Explanation::Attribution(remove_individual(g)?),
            SummaryConfig::Wls { kernel, regularizer } => Explanation::Attribution(wls_fit(g, kernel, *regularizer)?),
            SummaryConfig::Normalized { inner } => match inner.run(g, seed)? {
                Explanation::Attribution(a) => Explanation::Attribution(normalize_attributions(&a)?.result),
                _ => return Err(Error::Config("only exact attributions can be normalized".into())),
            },
            SummaryConfig::ShapleySampled { estimator } => {
                Explanation::Estimate(shapley_sampled(g, &seeded(estimator, seed))?)
            }
            SummaryConfig::BanzhafSampled { estimator } => {
                Explanation::Estimate(banzhaf_sampled(g, &seeded(estimator, seed))?)
            }
            SummaryConfig::MeanWhenIncludedSampled { estimator } => {
                Explanation::Estimate(mean_when_included_sampled(g, &seeded(estimator, seed))?)
            }
            SummaryConfig::WlsSampled { kernel, estimator } => {
                Explanation::Estimate(wls_sampled(g, kernel, &seeded(estimator, seed))?)
            }
            SummaryConfig::SelectLowValue { lambda } => Explanation::Selection(select_low_value(g, *lambda)?),
            SummaryConfig::SelectMinSize { t } => Explanation::Selection(select_min_size(g, *t)?),
            SummaryConfig::SelectMinSizeGreedy { t } => Explanation::Selection(select_min_size_greedy(g, *t)?),
            SummaryConfig::SelectFixedSize { k } => Explanation::Selection(select_fixed_size(g, *k)?),
            SummaryConfig::SelectRegularized { lambda } => Explanation::Selection(select_regularized(g, *lambda)?),
            SummaryConfig::SelectPartition { gamma, lambda } => {
                Explanation::Selection(select_partition(g, *gamma, *lambda)?)
            }
            SummaryConfig::SelectViaExcess { problem } => Explanation::Selection(selection_via_excess(g, *problem)?),
        };
        if let Explanation::Attribution(a) = &mut out {
            a.n_evaluations = counting.count();
        }
        Ok(out)
    }
}

/// A complete explanation method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub removal: RemovalConfig,
    pub behavior: BehaviorConfig,
    pub summary: SummaryConfig,
}

/// Result of [`explain`], with the number of game evaluations performed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplainOutput {
    pub explanation: Explanation,
    pub n_evaluations: u64,
}

impl MethodConfig {
    /// Checks feature counts against the context's model.
    pub fn check_dimensions(&self, ctx: &Context) -> Result<()> {
        let Some(model) = &ctx.model else { return Ok(()) };
        let d = model.n_features();
        let check = |what: &str, len: usize| {
            if len == d {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} has {len} entries but the model has {d} features")))
            }
        };
        if let RemovalConfig::Default { reference } = &self.removal {
            check("removal.reference", reference.len())?;
        }
        match &self.behavior {
            BehaviorConfig::Prediction { x, .. }
            | BehaviorConfig::PredictionLoss { x, .. }
            | BehaviorConfig::PredictionMeanLoss { x, .. }
            | BehaviorConfig::OutputLoss { x, .. } => check("behavior.x", x.len()),
            _ => Ok(()),
        }
    }
}

/// Runs removal → behavior → summary on the loaded context.
pub fn explain(ctx: &Context, method: &MethodConfig, seed: u64) -> Result<ExplainOutput> {
    method.check_dimensions(ctx)?;
    let f = method.removal.build(ctx, seed)?;
    let spec = method.behavior.to_spec(ctx)?;
    let game = CountingGame::new(make_game(f, &spec)?);
    let explanation = method.summary.run(&game, seed)?;
    Ok(ExplainOutput {
        explanation,
        n_evaluations: game.count(),
    })
}

/// Environment variable supplying the seed when neither the command line nor
/// the config sets one.
pub const SEED_ENV: &str = "REMOVAL_EXPLAIN_SEED";

/// A complete `explain` run: data, method, seed and output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub data: DataConfig,
    pub removal: RemovalConfig,
    pub behavior: BehaviorConfig,
    pub summary: SummaryConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    /// Parses and validates a config; errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if config.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported version {} (expected {CONFIG_VERSION})",
                config.version
            )));
        }
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&read(path)?).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn method(&self) -> MethodConfig {
        MethodConfig {
            removal: self.removal.clone(),
            behavior: self.behavior.clone(),
            summary: self.summary.clone(),
        }
    }

    /// Command-line seed, else the config seed, else [`SEED_ENV`], else 0.
    pub fn resolve_seed(&self, cli: Option<u64>) -> Result<u64> {
        if let Some(seed) = cli.or(self.seed) {
            return Ok(seed);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
            Err(_) => Ok(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub library: String,
    pub version: String,
    pub seed: u64,
    pub n_evaluations: u64,
    pub config: RunConfig,
    /// Seconds since the Unix epoch; the only field that varies between
    /// identical runs.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainReport {
    pub explanation: Explanation,
    pub provenance: Provenance,
}

impl ExplainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Loads the data for `config` (paths relative to `base`) and runs it.
pub fn run_config(config: &RunConfig, base: &Path, seed: u64) -> Result<ExplainReport> {
    let ctx = Context::load(&config.data, base)?;
    let out = explain(&ctx, &config.method(), seed)?;
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(ExplainReport {
        explanation: out.explanation,
        provenance: Provenance {
            library: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            n_evaluations: out.n_evaluations,
            config: config.clone(),
            timestamp,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> Context {
        let model = PredictModel::from_json(r#"{"kind":"linear","weights":[[1,2],[0]]}"#).unwrap();
        Context {
            model: Some(Arc::new(model)),
            ..Context::default()
        }
    }

    fn method(summary: &str) -> MethodConfig {
        serde_json::from_str(&format!(
            r#"{{"removal":{{"kind":"zeros"}},
                "behavior":{{"kind":"prediction","x":[1,1]}},
                "summary":{summary}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn additive_explanations() {
        for s in [r#"{"kind":"shapley"}"#, r#"{"kind":"remove_individual"}"#, r#"{"kind":"banzhaf"}"#] {
            let out = explain(&ctx(), &method(s), 0).unwrap();
            assert_eq!(out.explanation.values(), vec![1.0, 2.0]);
        }
    }

    #[test]
    fn evaluation_counts() {
        let out = explain(&ctx(), &method(r#"{"kind":"remove_individual"}"#), 0).unwrap();
        assert_eq!(out.n_evaluations, 3);
        match out.explanation {
            Explanation::Attribution(a) => assert_eq!(a.n_evaluations, 3),
            _ => panic!("attribution expected"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = r#"{"kind":"shapley","extra":1}"#;
        assert!(serde_json::from_str::<SummaryConfig>(bad).is_err());
    }

    #[test]
    fn names() {
        assert_eq!(RemovalConfig::ConditionalExact {}.name(), "conditional_exact");
        assert_eq!(SummaryConfig::Shapley {}.name(), "shapley");
        assert_eq!(
            SummaryConfig::Wls {
                kernel: WeightingKernel::Banzhaf,
                regularizer: Regularizer::None
            }
            .name(),
            "wls_banzhaf"
        );
    }

    #[test]
    fn missing_requirements_are_config_errors() {
        let c = Context::default();
        assert!(matches!(RemovalConfig::Zeros {}.build(&c, 0), Err(Error::Config(_))));
        assert!(matches!(RemovalConfig::ConditionalExact {}.build(&ctx(), 0), Err(Error::Config(_))));
    }
}
