use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::dataset::{Dataset, FeatureKind, Labels};
use crate::error::{Error, Result};
use crate::game::Mask;
use crate::numeric::compensated_sum;

const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJoint {
    cards: Vec<usize>,
    classes: usize,
    probs: Vec<f64>,
}

/// An exact finite joint distribution `p(X, Y)` over categorical features
/// and a class label.
///
/// Cells are stored row-major in `(x_1, …, x_d, y)` order, so `y` varies
/// fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJoint", into = "RawJoint")]
pub struct DiscreteJoint {
    cards: Vec<usize>,
    classes: usize,
    probs: Vec<f64>,
    /// p(x) per feature cell
    feature_probs: Vec<f64>,
}

impl TryFrom<RawJoint> for DiscreteJoint {
    type Error = Error;

    fn try_from(raw: RawJoint) -> Result<Self> {
        DiscreteJoint::new(raw.cards, raw.classes, raw.probs)
    }
}

impl From<DiscreteJoint> for RawJoint {
    fn from(j: DiscreteJoint) -> Self {
        RawJoint {
            cards: j.cards,
            classes: j.classes,
            probs: j.probs,
        }
    }
}

impl DiscreteJoint {
    pub fn new(cards: Vec<usize>, classes: usize, probs: Vec<f64>) -> Result<Self> {
        if classes == 0 || cards.contains(&0) {
            return Err(Error::invalid("cardinalities and class count must be positive"));
        }
        let n_x: usize = cards.iter().product();
        if probs.len() != n_x * classes {
            return Err(Error::DimensionMismatch {
                expected: n_x * classes,
                actual: probs.len(),
            });
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        let total = compensated_sum(probs.iter().copied());
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        let feature_probs = probs
            .chunks(classes)
            .map(|c| compensated_sum(c.iter().copied()))
            .collect();
        Ok(Self {
            cards,
            classes,
            probs,
            feature_probs,
        })
    }

    /// Builds a joint from an unnormalized mass function.
    pub fn from_fn(cards: Vec<usize>, classes: usize, mass: impl Fn(&[usize], usize) -> f64) -> Result<Self> {
        let n_x: usize = cards.iter().product();
        let mut probs = Vec::with_capacity(n_x * classes);
        for xi in 0..n_x {
            let x = decode(&cards, xi);
            for y in 0..classes {
                probs.push(mass(&x, y));
            }
        }
        let total = compensated_sum(probs.iter().copied());
        if !(total > 0.0) {
            return Err(Error::invalid("mass function sums to zero"));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new(cards, classes, probs)
    }

    /// A random joint with every cell probability bounded away from zero.
    pub fn random<R: Rng + ?Sized>(cards: Vec<usize>, classes: usize, rng: &mut R) -> Self {
        let n: usize = cards.iter().product::<usize>() * classes;
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total = compensated_sum(raw.iter().copied());
        Self::new(cards, classes, raw.into_iter().map(|p| p / total).collect())
            .expect("random joint is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("joint serializes")
    }

    pub fn n_features(&self) -> usize {
        self.cards.len()
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_feature_cells(&self) -> usize {
        self.feature_probs.len()
    }

    /// Feature values of cell `index`.
    pub fn feature_cell(&self, index: usize) -> Vec<usize> {
        decode(&self.cards, index)
    }

    pub fn feature_cell_prob(&self, index: usize) -> f64 {
        self.feature_probs[index]
    }

    pub fn cell_prob(&self, x_index: usize, y: usize) -> f64 {
        self.probs[x_index * self.classes + y]
    }

    /// Validates a real-valued feature vector and converts it to cell values.
    pub fn cell_of(&self, x: &[f64]) -> Result<Vec<usize>> {
        if x.len() != self.cards.len() {
            return Err(Error::DimensionMismatch {
                expected: self.cards.len(),
                actual: x.len(),
            });
        }
        x.iter()
            .zip(&self.cards)
            .enumerate()
            .map(|(j, (&v, &k))| {
                if v.fract() == 0.0 && v >= 0.0 && (v as usize) < k {
                    Ok(v as usize)
                } else {
                    Err(Error::invalid(format!("feature {}: value {v} outside [0, {k})", j + 1)))
                }
            })
            .collect()
    }

    pub fn encode(&self, x: &[usize]) -> usize {
        x.iter().zip(&self.cards).fold(0, |acc, (&v, &k)| acc * k + v)
    }

    fn matches(&self, cell: usize, x: &[usize], s: Mask) -> bool {
        let other = decode(&self.cards, cell);
        s.iter().all(|j| other[j] == x[j])
    }

    /// `p(X_S = x_S)`.
    pub fn marginal_prob(&self, x: &[usize], s: Mask) -> f64 {
        compensated_sum(
            (0..self.n_feature_cells())
                .filter(|&c| self.matches(c, x, s))
                .map(|c| self.feature_probs[c]),
        )
    }

    /// `p(X_S = x_S, Y = y)` for every class.
    pub fn marginal_joint(&self, x: &[usize], s: Mask) -> Vec<f64> {
        (0..self.classes)
            .map(|y| {
                compensated_sum(
                    (0..self.n_feature_cells())
                        .filter(|&c| self.matches(c, x, s))
                        .map(|c| self.cell_prob(c, y)),
                )
            })
            .collect()
    }

    /// `p(Y | X_S = x_S)` by summing the table over the excluded features.
    pub fn class_posterior(&self, x: &[usize], s: Mask) -> Result<Vec<f64>> {
        let joint = self.marginal_joint(x, s);
        let total = compensated_sum(joint.iter().copied());
        if total <= 0.0 {
            return Err(Error::ZeroProbabilityInput);
        }
        Ok(joint.into_iter().map(|p| p / total).collect())
    }

    pub fn class_marginal(&self) -> Vec<f64> {
        (0..self.classes)
            .map(|y| compensated_sum((0..self.n_feature_cells()).map(|c| self.cell_prob(c, y))))
            .collect()
    }

    /// Full feature cells consistent with `x_S`, each with its conditional
    /// probability `p(x' | x_S)`; zero-mass cells are skipped.
    pub fn completions(&self, x: &[usize], s: Mask) -> Result<Vec<(Vec<usize>, f64)>> {
        let total = self.marginal_prob(x, s);
        if total <= 0.0 {
            return Err(Error::ZeroProbabilityInput);
        }
        Ok((0..self.n_feature_cells())
            .filter(|&c| self.feature_probs[c] > 0.0 && self.matches(c, x, s))
            .map(|c| (decode(&self.cards, c), self.feature_probs[c] / total))
            .collect())
    }

    /// `I(Y; X_S)` in nats.
    pub fn mutual_information(&self, s: Mask) -> f64 {
        let py = self.class_marginal();
        let mut acc = crate::numeric::CompensatedSum::new();
        let mut seen = std::collections::HashSet::new();
        for c in 0..self.n_feature_cells() {
            let x = decode(&self.cards, c);
            let key: Vec<usize> = s.iter().map(|j| x[j]).collect();
            if !seen.insert(key) {
                continue;
            }
            let pxs = self.marginal_prob(&x, s);
            if pxs <= 0.0 {
                continue;
            }
            for (y, pxy) in self.marginal_joint(&x, s).into_iter().enumerate() {
                if pxy > 0.0 {
                    acc.add(pxy * (pxy / (pxs * py[y])).ln());
                }
            }
        }
        acc.value()
    }

    /// The support enumerated as a weighted dataset of `(x, y)` cells.
    pub fn enumerate_dataset(&self) -> Dataset {
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        let mut weights = Vec::new();
        for c in 0..self.n_feature_cells() {
            for y in 0..self.classes {
                let p = self.cell_prob(c, y);
                if p > 0.0 {
                    rows.push(self.feature_row(c));
                    ys.push(y);
                    weights.push(p);
                }
            }
        }
        Dataset::new(
            rows,
            Labels::Classification {
                classes: ys,
                n_classes: self.classes,
            },
            self.feature_kinds(),
        )
        .and_then(|d| d.with_weights(weights))
        .expect("joint support forms a valid dataset")
    }

    /// The feature support as an unlabeled dataset weighted by `p(x)`.
    pub fn feature_dataset(&self) -> Dataset {
        let cells: Vec<usize> = (0..self.n_feature_cells())
            .filter(|&c| self.feature_probs[c] > 0.0)
            .collect();
        let rows = cells.iter().map(|&c| self.feature_row(c)).collect();
        let weights = cells.iter().map(|&c| self.feature_probs[c]).collect();
        Dataset::new(rows, Labels::Unlabeled, self.feature_kinds())
            .and_then(|d| d.with_weights(weights))
            .expect("joint support forms a valid dataset")
    }

    /// Draws `n` i.i.d. rows.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Dataset {
        let mut cumulative = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0;
        for p in &self.probs {
            acc += p;
            cumulative.push(acc);
        }
        let mut rows = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.gen::<f64>() * acc;
            let cell = cumulative.partition_point(|&c| c <= u).min(self.probs.len() - 1);
            rows.push(self.feature_row(cell / self.classes));
            ys.push(cell % self.classes);
        }
        Dataset::new(
            rows,
            Labels::Classification {
                classes: ys,
                n_classes: self.classes,
            },
            self.feature_kinds(),
        )
        .expect("sampled rows are valid")
    }

    fn feature_row(&self, cell: usize) -> Vec<f64> {
        decode(&self.cards, cell).into_iter().map(|v| v as f64).collect()
    }

    pub fn feature_kinds(&self) -> Vec<FeatureKind> {
        self.cards.iter().map(|&k| FeatureKind::Categorical(k)).collect()
    }
}

fn decode(cards: &[usize], mut index: usize) -> Vec<usize> {
    let mut x = vec![0; cards.len()];
    for j in (0..cards.len()).rev() {
        x[j] = index % cards[j];
        index /= cards[j];
    }
    x
}
