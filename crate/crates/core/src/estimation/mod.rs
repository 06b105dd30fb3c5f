//! Sampling-based estimators for the summaries, with convergence detection.
//!
//! Every sample is drawn from its own generator seeded by hashing the master
//! seed with the sample index, and per-sample results are reduced in index
//! order, so serial and parallel runs are bit-identical.

mod sampler;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use sampler::{sample_mask_uniform_cardinality, MaskSampler};

use crate::error::{Error, Result};
use crate::game::{CooperativeGame, Mask};
use crate::numeric::{hash_words, ln_binomial, normal_quantile};
use crate::summaries::{wls_fit_observations, Regularizer, WeightingKernel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub seed: u64,
    pub batch_size: usize,
    /// Stop once `max_i (2 · half-width_i) / (max_i a_i − min_i a_i) ≤ threshold`.
    pub threshold: f64,
    pub max_evaluations: u64,
    pub confidence: f64,
    /// Inclusion probability for the mean-when-included estimator.
    pub inclusion_prob: f64,
    /// Bootstrap refits used for the weighted least squares intervals.
    pub bootstrap_resamples: usize,
    pub parallel: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: 64,
            threshold: 0.025,
            max_evaluations: 10_000_000,
            confidence: 0.95,
            inclusion_prob: 0.5,
            bootstrap_resamples: 20,
            parallel: false,
        }
    }
}

impl EstimatorConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(Error::invalid("convergence threshold must be positive"));
        }
        if !(self.inclusion_prob > 0.0 && self.inclusion_prob < 1.0) {
            return Err(Error::invalid("inclusion probability must lie in (0, 1)"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::invalid("confidence level must lie in (0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.bootstrap_resamples < 2 {
            return Err(Error::invalid("at least two bootstrap resamples are needed"));
        }
        Ok(())
    }
}

/// Absolute half-width below which an estimate counts as converged regardless of range.
pub const ABSOLUTE_FLOOR: f64 = 1e-9;

/// Factor by which the sample must grow between convergence checks of [`wls_sampled`].
pub const WLS_CHECK_GROWTH: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub method: String,
    pub values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub intercept: Option<f64>,
    pub std_errors: Vec<f64>,
    pub ci_half_widths: Vec<f64>,
    pub converged: bool,
    pub n_samples: u64,
    pub n_game_evaluations: u64,
    pub config: EstimatorConfig,
}

/// The convergence rule shared by every estimator.
pub fn is_converged(values: &[f64], half_widths: &[f64], threshold: f64) -> bool {
    if half_widths.iter().all(|&h| h <= ABSOLUTE_FLOOR) {
        return true;
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let range = (max - min).max(1e-12);
    let width = half_widths.iter().fold(0.0f64, |m, &h| m.max(2.0 * h));
    width / range <= threshold
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn add(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn std_error(&self) -> f64 {
        if self.n < 2 {
            f64::INFINITY
        } else {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        }
    }
}

const TAG_PERMUTATION: u64 = 0x5348_4150;
const TAG_BANZHAF: u64 = 0x4241_4e5a;
const TAG_RISE: u64 = 0x5249_5345;
const TAG_WLS: u64 = 0x574c_5353;
const TAG_BOOTSTRAP: u64 = 0x424f_4f54;

fn sample_rng(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(hash_words(seed, [tag, index]))
}

fn map_indices<T: Send>(
    range: std::ops::Range<u64>,
    parallel: bool,
    f: impl Fn(u64) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    if parallel {
        range.into_par_iter().map(f).collect()
    } else {
        range.map(f).collect()
    }
}

/// Runs batches of per-sample estimates until convergence or budget.
/// A `None` entry means the sample carries no information on that component.
fn run_mean_estimator<G, F>(
    game: &G,
    cfg: &EstimatorConfig,
    method: &str,
    evals_per_sample: u64,
    sample: F,
) -> Result<EstimateResult>
where
    G: CooperativeGame + ?Sized,
    F: Fn(u64) -> Result<Vec<Option<f64>>> + Sync + Send,
{
    cfg.validate()?;
    let d = game.players();
    let z = normal_quantile(cfg.confidence);
    let mut acc = vec![Welford::default(); d];
    let mut n_samples = 0u64;
    let mut evaluations = 0u64;
    loop {
        let batch = cfg.batch_size as u64;
        let results = map_indices(n_samples..n_samples + batch, cfg.parallel, &sample)?;
        for r in results {
            for (a, v) in acc.iter_mut().zip(r) {
                if let Some(v) = v {
                    a.add(v);
                }
            }
        }
        n_samples += batch;
        evaluations += batch * evals_per_sample;
        let values: Vec<f64> = acc.iter().map(|a| a.mean).collect();
        let std_errors: Vec<f64> = acc.iter().map(Welford::std_error).collect();
        let half: Vec<f64> = std_errors.iter().map(|s| z * s).collect();
        let converged = d == 0 || is_converged(&values, &half, cfg.threshold);
        if converged || evaluations + batch * evals_per_sample > cfg.max_evaluations {
            return Ok(EstimateResult {
                method: method.to_string(),
                values,
                intercept: None,
                std_errors,
                ci_half_widths: half,
                converged,
                n_samples,
                n_game_evaluations: evaluations,
                config: *cfg,
            });
        }
    }
}

/// One permutation's marginal contributions; they telescope to `u(D) − u(∅)`.
pub fn permutation_contributions<G: CooperativeGame + ?Sized>(game: &G, order: &[usize]) -> Result<Vec<f64>> {
    let d = game.players();
    let mut s = Mask::empty(d);
    let mut prev = game.value(s)?;
    let mut out = vec![0.0; d];
    for &i in order {
        s = s.with(i);
        let v = game.value(s)?;
        out[i] = v - prev;
        prev = v;
    }
    Ok(out)
}

/// Shapley values by permutation sampling: `d + 1` evaluations per permutation.
pub fn shapley_sampled<G: CooperativeGame + ?Sized>(game: &G, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    let d = game.players();
    run_mean_estimator(game, cfg, "shapley_sampled", d as u64 + 1, |k| {
        let mut rng = sample_rng(cfg.seed, TAG_PERMUTATION, k);
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(&mut rng);
        Ok(permutation_contributions(game, &order)?.into_iter().map(Some).collect())
    })
}

fn uniform_subset<R: Rng>(d: usize, rng: &mut R) -> Mask {
    MaskSampler::UniformSubsets.sample(d, rng)
}

/// Banzhaf values from uniform subsets: each draw `S` gives one marginal
/// contribution per player by comparing `S` with `S ⊕ {i}`.
pub fn banzhaf_sampled<G: CooperativeGame + ?Sized>(game: &G, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    let d = game.players();
    run_mean_estimator(game, cfg, "banzhaf_sampled", d as u64 + 1, |k| {
        let mut rng = sample_rng(cfg.seed, TAG_BANZHAF, k);
        let s = uniform_subset(d, &mut rng);
        let base = game.value(s)?;
        (0..d)
            .map(|i| {
                let flipped = game.value(s.toggled(i))?;
                Ok(Some(if s.contains(i) { base - flipped } else { flipped - base }))
            })
            .collect()
    })
}

/// Mean value of the coalitions containing each player, with players
/// included independently with probability `cfg.inclusion_prob`; the
/// per-player estimate is the ratio `Σ u(S)𝟙[i∈S] / Σ 𝟙[i∈S]`.
pub fn mean_when_included_sampled<G: CooperativeGame + ?Sized>(
    game: &G,
    cfg: &EstimatorConfig,
) -> Result<EstimateResult> {
    let d = game.players();
    let sampler = MaskSampler::Bernoulli { p: cfg.inclusion_prob };
    run_mean_estimator(game, cfg, "mean_when_included_sampled", 1, |k| {
        let mut rng = sample_rng(cfg.seed, TAG_RISE, k);
        let s = sampler.sample(d, &mut rng);
        let v = game.value(s)?;
        Ok((0..d).map(|i| s.contains(i).then_some(v)).collect())
    })
}

/// Sampling distribution over the finite-weight coalitions, proportional
/// to the kernel.
enum KernelSampler {
    /// Log-probability of each size; subsets are uniform within a size.
    BySize { size_weights: Vec<f64> },
    PerSubset { cumulative: Vec<f64> },
}

impl KernelSampler {
    fn new(kernel: &WeightingKernel, d: usize) -> Result<Self> {
        match kernel {
            WeightingKernel::PerSubset { .. } => {
                let mut total = 0.0;
                let cumulative: Vec<f64> = (0..1u64 << d)
                    .map(|bits| {
                        total += kernel_weight(kernel, Mask::from_bits(bits, d).expect("in range"));
                        total
                    })
                    .collect();
                if !(total > 0.0) {
                    return Err(Error::invalid("kernel has no finite positive weight"));
                }
                Ok(KernelSampler::PerSubset { cumulative })
            }
            _ => {
                let size_weights: Vec<f64> = (0..=d)
                    .map(|s| {
                        let w = kernel.size_weight(d, s).expect("size kernel");
                        if w > 0.0 {
                            (ln_binomial(d, s) + w.ln()).exp()
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if !(size_weights.iter().sum::<f64>() > 0.0) {
                    return Err(Error::invalid("kernel has no finite positive weight"));
                }
                Ok(KernelSampler::BySize { size_weights })
            }
        }
    }

    fn sample<R: Rng>(&self, d: usize, rng: &mut R) -> Mask {
        match self {
            KernelSampler::BySize { size_weights } => {
                let total: f64 = size_weights.iter().sum();
                let u = rng.gen::<f64>() * total;
                let mut acc = 0.0;
                let mut size = size_weights.iter().rposition(|&w| w > 0.0).expect("positive weight");
                for (s, w) in size_weights.iter().enumerate() {
                    acc += w;
                    if u < acc && *w > 0.0 {
                        size = s;
                        break;
                    }
                }
                let mut m = Mask::empty(d);
                for j in rand::seq::index::sample(rng, d, size).into_iter() {
                    m = m.with(j);
                }
                m
            }
            KernelSampler::PerSubset { cumulative } => {
                let total = *cumulative.last().expect("non-empty");
                let u = rng.gen::<f64>() * total;
                let bits = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
                Mask::from_bits(bits as u64, d).expect("in range")
            }
        }
    }

    /// Number of coalitions with positive finite weight.
    fn support_size(&self, d: usize) -> f64 {
        match self {
            KernelSampler::BySize { size_weights } => size_weights
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(s, _)| ln_binomial(d, s).exp().round())
                .sum(),
            KernelSampler::PerSubset { cumulative } => {
                let mut prev = 0.0;
                cumulative
                    .iter()
                    .filter(|&&c| {
                        let positive = c > prev;
                        prev = c;
                        positive
                    })
                    .count() as f64
            }
        }
    }
}

fn kernel_weight(kernel: &WeightingKernel, s: Mask) -> f64 {
    let (inf_empty, inf_full) = kernel.infinite_flags();
    if (s.is_empty() && inf_empty) || (s.is_full() && inf_full) {
        return 0.0;
    }
    match kernel {
        WeightingKernel::PerSubset { weights, .. } => weights[s.index()],
        _ => kernel.size_weight(s.dim(), s.len()).expect("size kernel"),
    }
}

/// Weighted least squares on sampled coalitions (KernelSHAP style).
///
/// Coalitions are drawn with probability proportional to the kernel, and
/// the model is refit after every batch on the distinct coalitions seen so
/// far, each with its exact kernel weight, so the estimate equals the exact
/// solution once every coalition has been observed. Intervals come from
/// bootstrap refits over the drawn sample; a degenerate sample keeps
/// sampling until the budget runs out. Refits happen once the sample has
/// grown by [`WLS_CHECK_GROWTH`] since the previous refit, and whenever the
/// last unseen coalition arrives.
pub fn wls_sampled<G: CooperativeGame + ?Sized>(
    game: &G,
    kernel: &WeightingKernel,
    cfg: &EstimatorConfig,
) -> Result<EstimateResult> {
    cfg.validate()?;
    let d = game.players();
    if let WeightingKernel::PerSubset { weights, .. } = kernel {
        if weights.len() != 1usize << d {
            return Err(Error::DimensionMismatch {
                expected: 1 << d,
                actual: weights.len(),
            });
        }
    }
    let sampler = KernelSampler::new(kernel, d)?;
    let support = sampler.support_size(d);
    let (inf_empty, inf_full) = kernel.infinite_flags();
    let mut evaluations = 0u64;
    let mut constraint = |flag: bool, s: Mask| -> Result<Option<f64>> {
        if flag {
            evaluations += 1;
            game.value(s).map(Some)
        } else {
            Ok(None)
        }
    };
    let u_empty = constraint(inf_empty, Mask::empty(d))?;
    let u_full = constraint(inf_full && !(inf_empty && d == 0), Mask::full(d))?;
    let z = normal_quantile(cfg.confidence);

    let mut draws: Vec<Mask> = Vec::new();
    let mut values: BTreeMap<u64, f64> = BTreeMap::new();
    let mut next_check = 0usize;
    let fit = |subsets: &mut dyn Iterator<Item = u64>, values: &BTreeMap<u64, f64>| -> Result<Vec<f64>> {
        let observations: Vec<(Mask, f64, f64)> = subsets
            .map(|bits| {
                let s = Mask::from_bits(bits, d).expect("in range");
                (s, values[&bits], kernel_weight(kernel, s))
            })
            .collect();
        wls_fit_observations(d, &observations, u_empty, u_full, Regularizer::None)
    };
    loop {
        let start = draws.len() as u64;
        let batch = map_indices(start..start + cfg.batch_size as u64, cfg.parallel, |k| {
            Ok(sampler.sample(d, &mut sample_rng(cfg.seed, TAG_WLS, k)))
        })?;
        let fresh: Vec<Mask> = {
            let mut seen = std::collections::BTreeSet::new();
            batch
                .iter()
                .filter(|s| !values.contains_key(&s.bits()) && seen.insert(s.bits()))
                .copied()
                .collect()
        };
        let fresh_values = map_indices(0..fresh.len() as u64, cfg.parallel, |k| game.value(fresh[k as usize]))?;
        evaluations += fresh.len() as u64;
        for (s, v) in fresh.iter().zip(fresh_values) {
            values.insert(s.bits(), v);
        }
        draws.extend(batch);
        let budget_left = evaluations + cfg.batch_size as u64 <= cfg.max_evaluations;
        let complete = values.len() as f64 >= support;
        if budget_left && !complete && draws.len() < next_check {
            continue;
        }
        next_check = ((draws.len() as f64 * WLS_CHECK_GROWTH) as usize).max(draws.len() + 1);

        let theta = match fit(&mut values.keys().copied(), &values) {
            Ok(theta) => theta,
            Err(Error::SingularSystem) if budget_left => continue,
            Err(e) => return Err(e),
        };
        let (std_errors, half) = if complete {
            (vec![0.0; d], vec![0.0; d])
        } else {
            let n = draws.len() as u64;
            let refits = map_indices(0..cfg.bootstrap_resamples as u64, cfg.parallel, |b| {
                let mut rng = ChaCha8Rng::seed_from_u64(hash_words(cfg.seed, [TAG_BOOTSTRAP, n, b]));
                let picked: std::collections::BTreeSet<u64> =
                    (0..n).map(|_| draws[rng.gen_range(0..draws.len())].bits()).collect();
                Ok(fit(&mut picked.into_iter(), &values).ok())
            })?;
            let refits: Vec<Vec<f64>> = refits.into_iter().flatten().collect();
            if refits.len() < 2 {
                if budget_left {
                    continue;
                }
                (vec![f64::INFINITY; d], vec![f64::INFINITY; d])
            } else {
                let se: Vec<f64> = (0..d)
                    .map(|i| {
                        let mut w = Welford::default();
                        for r in &refits {
                            w.add(r[i + 1]);
                        }
                        (w.m2 / (w.n - 1) as f64).sqrt()
                    })
                    .collect();
                let half = se.iter().map(|s| z * s).collect();
                (se, half)
            }
        };
        let coefficients = theta[1..].to_vec();
        let converged = complete || d == 0 || is_converged(&coefficients, &half, cfg.threshold);
        if converged || !budget_left {
            return Ok(EstimateResult {
                method: format!("wls_sampled_{}", kernel.name()),
                values: coefficients,
                intercept: Some(theta[0]),
                std_errors,
                ci_half_widths: half,
                converged,
                n_samples: draws.len() as u64,
                n_game_evaluations: evaluations,
                config: *cfg,
            });
        }
    }
}
