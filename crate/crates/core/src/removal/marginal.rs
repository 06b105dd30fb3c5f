use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_query, query_seed, SubsetFunction};
use crate::data::{Dataset, FeatureKind, OutputKind, Predictor};
use crate::error::{Error, Result};
use crate::game::Mask;
use crate::numeric::CompensatedSum;

/// `F(x, S) = f(x_S, r_{S̄})` for a fixed reference vector `r`.
pub struct DefaultExtension {
    model: Arc<dyn Predictor>,
    reference: Vec<f64>,
}

pub fn extend_default(model: Arc<dyn Predictor>, reference: Vec<f64>) -> Result<DefaultExtension> {
    if reference.len() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            actual: reference.len(),
        });
    }
    Ok(DefaultExtension { model, reference })
}

impl SubsetFunction for DefaultExtension {
    fn n_features(&self) -> usize {
        self.reference.len()
    }

    fn output_kind(&self) -> OutputKind {
        self.model.output_kind()
    }

    fn evaluate(&self, x: &[f64], s: Mask) -> Result<Vec<f64>> {
        check_query(x, s, self.reference.len())?;
        let z: Vec<f64> = (0..x.len())
            .map(|j| if s.contains(j) { x[j] } else { self.reference[j] })
            .collect();
        self.model.predict(&z)
    }
}

/// How expectations over the replacement distribution are computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sampling {
    /// Enumerate the (finite) support exactly, failing above `support_cap` points.
    Exact { support_cap: usize },
    MonteCarlo { n_samples: usize },
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::MonteCarlo { n_samples: 256 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRange {
    Continuous { min: f64, max: f64 },
    Categorical(usize),
}

impl FeatureRange {
    /// Per-feature `[min, max]` bounds, or cardinalities for categorical features.
    pub fn from_background(background: &Dataset) -> Result<Vec<FeatureRange>> {
        if background.is_empty() {
            return Err(Error::EmptyBackground);
        }
        Ok(background
            .kinds()
            .iter()
            .enumerate()
            .map(|(j, kind)| match kind {
                FeatureKind::Categorical(k) => FeatureRange::Categorical(*k),
                FeatureKind::Continuous => {
                    let col = background.column(j);
                    FeatureRange::Continuous {
                        min: col.iter().copied().fold(f64::INFINITY, f64::min),
                        max: col.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    }
                }
            })
            .collect())
    }
}

/// A discrete distribution over one feature's values.
#[derive(Debug, Clone)]
struct ValueTable {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl ValueTable {
    fn from_column(col: &[f64], weights: impl Fn(usize) -> f64) -> Self {
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in col.iter().enumerate() {
            match pairs.iter_mut().find(|(u, _)| u.to_bits() == v.to_bits()) {
                Some(p) => p.1 += weights(i),
                None => pairs.push((v, weights(i))),
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Self {
            values: pairs.iter().map(|p| p.0).collect(),
            probs: pairs.iter().map(|p| p.1 / total).collect(),
        }
    }

    /// The same distribution conditioned on `X_j ≠ exclude`; unchanged when
    /// no other value has mass.
    fn excluding(&self, exclude: f64) -> ValueTable {
        let keep: Vec<usize> = (0..self.values.len())
            .filter(|&k| self.values[k].to_bits() != exclude.to_bits() && self.probs[k] > 0.0)
            .collect();
        if keep.is_empty() {
            return ValueTable {
                values: vec![exclude],
                probs: vec![1.0],
            };
        }
        let total: f64 = keep.iter().map(|&k| self.probs[k]).sum();
        ValueTable {
            values: keep.iter().map(|&k| self.values[k]).collect(),
            probs: keep.iter().map(|&k| self.probs[k] / total).collect(),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (v, p) in self.values.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return *v;
            }
        }
        *self.values.last().expect("non-empty table")
    }
}

/// Distribution used to fill in the removed features.
#[derive(Debug, Clone)]
pub enum ReplacementDistribution {
    /// Rows of the background drawn jointly.
    MarginalJoint { rows: Vec<Vec<f64>>, weights: Vec<f64> },
    /// Each removed feature drawn independently from its own marginal.
    ProductOfMarginals { columns: Vec<ValueTableHandle> },
    /// Uniform over each feature's range.
    Uniform(Vec<FeatureRange>),
    /// Each removed categorical feature drawn from `p(X_j | X_j ≠ x_j)`.
    ReplacementCategorical { columns: Vec<ValueTableHandle> },
}

/// Opaque per-feature value distribution.
#[derive(Debug, Clone)]
pub struct ValueTableHandle(ValueTable);

impl ReplacementDistribution {
    pub fn marginal_joint(background: &Dataset) -> Result<Self> {
        if background.is_empty() {
            return Err(Error::EmptyBackground);
        }
        Ok(ReplacementDistribution::MarginalJoint {
            rows: background.rows().map(<[f64]>::to_vec).collect(),
            weights: (0..background.n_rows()).map(|i| background.weight(i)).collect(),
        })
    }

    pub fn product_of_marginals(background: &Dataset) -> Result<Self> {
        if background.is_empty() {
            return Err(Error::EmptyBackground);
        }
        Ok(ReplacementDistribution::ProductOfMarginals {
            columns: Self::columns(background),
        })
    }

    pub fn replacement_categorical(background: &Dataset) -> Result<Self> {
        if background.is_empty() {
            return Err(Error::EmptyBackground);
        }
        if let Some(j) = background
            .kinds()
            .iter()
            .position(|k| matches!(k, FeatureKind::Continuous))
        {
            return Err(Error::invalid(format!(
                "replacement distributions are only defined for categorical features; feature {} is continuous",
                j + 1
            )));
        }
        Ok(ReplacementDistribution::ReplacementCategorical {
            columns: Self::columns(background),
        })
    }

    fn columns(background: &Dataset) -> Vec<ValueTableHandle> {
        (0..background.n_features())
            .map(|j| ValueTableHandle(ValueTable::from_column(&background.column(j), |i| background.weight(i))))
            .collect()
    }

    fn n_features(&self) -> Option<usize> {
        match self {
            ReplacementDistribution::MarginalJoint { rows, .. } => rows.first().map(Vec::len),
            ReplacementDistribution::ProductOfMarginals { columns }
            | ReplacementDistribution::ReplacementCategorical { columns } => Some(columns.len()),
            ReplacementDistribution::Uniform(r) => Some(r.len()),
        }
    }

    /// Per-feature table for the product-form distributions.
    fn feature_table(&self, j: usize, x: &[f64]) -> Result<ValueTable> {
        match self {
            ReplacementDistribution::ProductOfMarginals { columns } => Ok(columns[j].0.clone()),
            ReplacementDistribution::ReplacementCategorical { columns } => Ok(columns[j].0.excluding(x[j])),
            ReplacementDistribution::Uniform(ranges) => match ranges[j] {
                FeatureRange::Categorical(k) => Ok(ValueTable {
                    values: (0..k).map(|v| v as f64).collect(),
                    probs: vec![1.0 / k as f64; k],
                }),
                FeatureRange::Continuous { .. } => Err(Error::SupportTooLarge {
                    size: f64::INFINITY,
                    cap: 0,
                }),
            },
            ReplacementDistribution::MarginalJoint { .. } => unreachable!("joint rows are not a product"),
        }
    }
}

/// Removed features are marginalized out under a replacement distribution,
/// either by exact enumeration or by seeded Monte Carlo averaging.
pub struct MonteCarloExtension {
    model: Arc<dyn Predictor>,
    distribution: ReplacementDistribution,
    sampling: Sampling,
    seed: u64,
    cumulative_rows: Vec<f64>,
}

pub fn extend_monte_carlo(
    model: Arc<dyn Predictor>,
    distribution: ReplacementDistribution,
    sampling: Sampling,
    seed: u64,
) -> Result<MonteCarloExtension> {
    if let Some(d) = distribution.n_features() {
        if d != model.n_features() {
            return Err(Error::DimensionMismatch {
                expected: model.n_features(),
                actual: d,
            });
        }
    }
    match sampling {
        Sampling::MonteCarlo { n_samples: 0 } => return Err(Error::invalid("n_samples must be at least 1")),
        Sampling::Exact { support_cap: 0 } => return Err(Error::invalid("support_cap must be at least 1")),
        _ => {}
    }
    if let ReplacementDistribution::Uniform(ranges) = &distribution {
        for (j, r) in ranges.iter().enumerate() {
            let ok = match r {
                FeatureRange::Continuous { min, max } => min.is_finite() && max.is_finite() && min <= max,
                FeatureRange::Categorical(k) => *k > 0,
            };
            if !ok {
                return Err(Error::invalid(format!("feature {}: invalid uniform range", j + 1)));
            }
        }
    }
    let cumulative_rows = match &distribution {
        ReplacementDistribution::MarginalJoint { weights, .. } => weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect(),
        _ => Vec::new(),
    };
    Ok(MonteCarloExtension {
        model,
        distribution,
        sampling,
        seed,
        cumulative_rows,
    })
}

struct Accumulator {
    sums: Vec<CompensatedSum>,
}

impl Accumulator {
    fn new() -> Self {
        Self { sums: Vec::new() }
    }

    fn add(&mut self, weight: f64, out: &[f64]) {
        if self.sums.is_empty() {
            self.sums = vec![CompensatedSum::new(); out.len()];
        }
        for (acc, v) in self.sums.iter_mut().zip(out) {
            acc.add(weight * v);
        }
    }

    fn finish(self) -> Vec<f64> {
        self.sums.iter().map(CompensatedSum::value).collect()
    }
}

impl MonteCarloExtension {
    fn exact(&self, x: &[f64], s: Mask, cap: usize) -> Result<Vec<f64>> {
        let removed = s.complement().indices();
        let mut acc = Accumulator::new();
        let mut z = x.to_vec();
        if let ReplacementDistribution::MarginalJoint { rows, weights } = &self.distribution {
            if rows.len() > cap {
                return Err(Error::SupportTooLarge {
                    size: rows.len() as f64,
                    cap,
                });
            }
            for (row, w) in rows.iter().zip(weights) {
                for &j in &removed {
                    z[j] = row[j];
                }
                acc.add(*w, &self.model.predict(&z)?);
            }
            return Ok(acc.finish());
        }
        let tables = removed
            .iter()
            .map(|&j| self.distribution.feature_table(j, x))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| match e {
                Error::SupportTooLarge { size, .. } => Error::SupportTooLarge { size, cap },
                other => other,
            })?;
        let size: f64 = tables.iter().map(|t| t.values.len() as f64).product();
        if size > cap as f64 {
            return Err(Error::SupportTooLarge { size, cap });
        }
        // odometer over the product support
        let mut digits = vec![0usize; tables.len()];
        loop {
            let mut p = 1.0;
            for (k, &j) in removed.iter().enumerate() {
                z[j] = tables[k].values[digits[k]];
                p *= tables[k].probs[digits[k]];
            }
            acc.add(p, &self.model.predict(&z)?);
            let mut k = 0;
            loop {
                if k == digits.len() {
                    return Ok(acc.finish());
                }
                digits[k] += 1;
                if digits[k] < tables[k].values.len() {
                    break;
                }
                digits[k] = 0;
                k += 1;
            }
        }
    }

    fn sampled(&self, x: &[f64], s: Mask, n: usize) -> Result<Vec<f64>> {
        let removed = s.complement().indices();
        let mut rng = ChaCha8Rng::seed_from_u64(query_seed(self.seed, x, s));
        let mut acc = Accumulator::new();
        let mut z = x.to_vec();
        let weight = 1.0 / n as f64;
        let tables = match &self.distribution {
            ReplacementDistribution::MarginalJoint { .. } | ReplacementDistribution::Uniform(_) => None,
            _ => Some(
                removed
                    .iter()
                    .map(|&j| self.distribution.feature_table(j, x))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        for _ in 0..n {
            match &self.distribution {
                ReplacementDistribution::MarginalJoint { rows, .. } => {
                    let total = *self.cumulative_rows.last().expect("non-empty background");
                    let u = rng.gen::<f64>() * total;
                    let i = self.cumulative_rows.partition_point(|&c| c <= u).min(rows.len() - 1);
                    for &j in &removed {
                        z[j] = rows[i][j];
                    }
                }
                ReplacementDistribution::Uniform(ranges) => {
                    for &j in &removed {
                        z[j] = match ranges[j] {
                            FeatureRange::Continuous { min, max } => {
                                if max > min {
                                    rng.gen_range(min..=max)
                                } else {
                                    min
                                }
                            }
                            FeatureRange::Categorical(k) => rng.gen_range(0..k) as f64,
                        };
                    }
                }
                _ => {
                    let tables = tables.as_ref().expect("product tables");
                    for (k, &j) in removed.iter().enumerate() {
                        z[j] = tables[k].draw(&mut rng);
                    }
                }
            }
            acc.add(weight, &self.model.predict(&z)?);
        }
        Ok(acc.finish())
    }
}

impl SubsetFunction for MonteCarloExtension {
    fn n_features(&self) -> usize {
        self.model.n_features()
    }

    fn output_kind(&self) -> OutputKind {
        self.model.output_kind()
    }

    fn evaluate(&self, x: &[f64], s: Mask) -> Result<Vec<f64>> {
        check_query(x, s, self.model.n_features())?;
        if s.is_full() {
            return self.model.predict(x);
        }
        match self.sampling {
            Sampling::Exact { support_cap } => self.exact(x, s, support_cap),
            Sampling::MonteCarlo { n_samples } => self.sampled(x, s, n_samples),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LinearModel;

    fn f12() -> Arc<dyn Predictor> {
        Arc::new(LinearModel::new(vec![1.0, 2.0], 0.0))
    }

    fn square_background() -> Dataset {
        Dataset::unlabeled(vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap()
    }

    fn m(idx: &[usize]) -> Mask {
        Mask::from_indices(idx, 2).unwrap()
    }

    const EXACT: Sampling = Sampling::Exact { support_cap: 1000 };

    #[test]
    fn default_values_table() {
        let f = extend_default(f12(), vec![0.0, 0.0]).unwrap();
        let x = [1.0, 1.0];
        let got: Vec<f64> = [m(&[]), m(&[0]), m(&[1]), m(&[0, 1])]
            .iter()
            .map(|&s| f.evaluate(&x, s).unwrap()[0])
            .collect();
        assert_eq!(got, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn default_reference_equal_to_x_is_noop() {
        let x = vec![0.3, -2.0];
        let f = extend_default(f12(), x.clone()).unwrap();
        for s in crate::game::enumerate_subsets(2).unwrap() {
            assert_eq!(f.evaluate(&x, s).unwrap(), vec![0.3 - 4.0]);
        }
    }

    #[test]
    fn default_dimension_mismatch() {
        assert!(matches!(
            extend_default(f12(), vec![0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn marginal_exact_example() {
        let bg = square_background();
        let f = extend_monte_carlo(f12(), ReplacementDistribution::marginal_joint(&bg).unwrap(), EXACT, 0).unwrap();
        assert!((f.evaluate(&[1.0, 1.0], m(&[0])).unwrap()[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn full_mask_returns_model() {
        let bg = square_background();
        for dist in [
            ReplacementDistribution::marginal_joint(&bg).unwrap(),
            ReplacementDistribution::product_of_marginals(&bg).unwrap(),
            ReplacementDistribution::Uniform(FeatureRange::from_background(&bg).unwrap()),
        ] {
            let f = extend_monte_carlo(f12(), dist, Sampling::MonteCarlo { n_samples: 7 }, 3).unwrap();
            assert_eq!(f.evaluate(&[0.25, 0.5], m(&[0, 1])).unwrap(), vec![1.25]);
        }
    }

    #[test]
    fn product_equals_joint_under_independence() {
        let bg = square_background();
        let joint = extend_monte_carlo(f12(), ReplacementDistribution::marginal_joint(&bg).unwrap(), EXACT, 0).unwrap();
        let product =
            extend_monte_carlo(f12(), ReplacementDistribution::product_of_marginals(&bg).unwrap(), EXACT, 0).unwrap();
        for x in [[0.0, 1.0], [1.0, 1.0], [0.3, -0.7]] {
            for s in crate::game::enumerate_subsets(2).unwrap() {
                let a = joint.evaluate(&x, s).unwrap()[0];
                let b = product.evaluate(&x, s).unwrap()[0];
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn empty_background() {
        let bg = Dataset::unlabeled(vec![]).unwrap();
        assert!(matches!(
            ReplacementDistribution::marginal_joint(&bg),
            Err(Error::EmptyBackground)
        ));
    }

    #[test]
    fn support_cap_enforced() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * 7 % 20) as f64]).collect();
        let bg = Dataset::unlabeled(rows).unwrap();
        let f = extend_monte_carlo(
            f12(),
            ReplacementDistribution::product_of_marginals(&bg).unwrap(),
            Sampling::Exact { support_cap: 100 },
            0,
        )
        .unwrap();
        assert!(f.evaluate(&[0.0, 0.0], m(&[0])).is_ok());
        assert!(matches!(
            f.evaluate(&[0.0, 0.0], m(&[])),
            Err(Error::SupportTooLarge { cap: 100, .. })
        ));
        let u = extend_monte_carlo(
            f12(),
            ReplacementDistribution::Uniform(FeatureRange::from_background(&bg).unwrap()),
            Sampling::Exact { support_cap: 100 },
            0,
        )
        .unwrap();
        assert!(matches!(u.evaluate(&[0.0, 0.0], m(&[0])), Err(Error::SupportTooLarge { .. })));
    }

    #[test]
    fn monte_carlo_is_invariant_and_reproducible() {
        let bg = square_background();
        let f = extend_monte_carlo(
            f12(),
            ReplacementDistribution::product_of_marginals(&bg).unwrap(),
            Sampling::MonteCarlo { n_samples: 16 },
            42,
        )
        .unwrap();
        let a = f.evaluate(&[1.0, 5.0], m(&[0])).unwrap();
        let b = f.evaluate(&[1.0, -3.0], m(&[0])).unwrap();
        assert_eq!(a, b);
        let other_seed = extend_monte_carlo(
            f12(),
            ReplacementDistribution::product_of_marginals(&bg).unwrap(),
            Sampling::MonteCarlo { n_samples: 16 },
            43,
        )
        .unwrap();
        // same distribution, plausibly different draws
        let c = other_seed.evaluate(&[1.0, 5.0], m(&[0])).unwrap();
        assert!((c[0] - 2.0).abs() <= 2.0);
    }

    #[test]
    fn monte_carlo_converges_to_exact() {
        let bg = square_background();
        let f = extend_monte_carlo(
            f12(),
            ReplacementDistribution::marginal_joint(&bg).unwrap(),
            Sampling::MonteCarlo { n_samples: 20_000 },
            1,
        )
        .unwrap();
        // exact value 1 + 2·0.5 = 2; std of 2·X2 is 1
        let v = f.evaluate(&[1.0, 1.0], m(&[0])).unwrap()[0];
        assert!((v - 2.0).abs() < 5.0 / (20_000f64).sqrt());
    }

    #[test]
    fn replacement_excludes_current_value() {
        let bg = Dataset::unlabeled(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 1.0]])
            .unwrap()
            .with_kinds(vec![FeatureKind::Categorical(3), FeatureKind::Categorical(2)])
            .unwrap();
        let dist = ReplacementDistribution::replacement_categorical(&bg).unwrap();
        let f = extend_monte_carlo(f12(), dist, EXACT, 0).unwrap();
        // x1 = 0 removed: replaced by 1 or 2 equally; x2 kept
        let v = f.evaluate(&[0.0, 1.0], m(&[1])).unwrap()[0];
        assert!((v - (1.5 + 2.0)).abs() < 1e-12);
        // x2 = 1 removed: only 0 remains
        let v = f.evaluate(&[0.0, 1.0], m(&[0])).unwrap()[0];
        assert!((v - 0.0).abs() < 1e-12);
    }

    #[test]
    fn replacement_rejects_continuous() {
        assert!(ReplacementDistribution::replacement_categorical(&square_background()).is_err());
    }

    #[test]
    fn uniform_uses_background_bounds() {
        let bg = Dataset::unlabeled(vec![vec![-1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let ranges = FeatureRange::from_background(&bg).unwrap();
        assert_eq!(ranges[0], FeatureRange::Continuous { min: -1.0, max: 3.0 });
        let f = extend_monte_carlo(
            f12(),
            ReplacementDistribution::Uniform(ranges),
            Sampling::MonteCarlo { n_samples: 50_000 },
            5,
        )
        .unwrap();
        // E[X1] = 1 under U(-1, 3); sd 1.155
        let v = f.evaluate(&[0.0, 0.0], m(&[1])).unwrap()[0];
        assert!((v - 1.0).abs() < 5.0 * 1.155 / (50_000f64).sqrt());
    }
}
