use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{check_query, SubsetFunction};
use crate::data::{Dataset, DiscreteJoint, OutputKind, Predictor};
use crate::error::{Error, Result};
use crate::game::Mask;
use crate::numeric::CompensatedSum;

/// What [`ConditionalEmpirical`] does when no background row matches `x_S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoMatchFallback {
    #[default]
    Error,
    /// Average over the whole background, keeping `x_S` fixed.
    Marginal,
}

/// `F(x, S) = E[f(X) | X_S = x_S]` under the empirical distribution of a
/// background dataset, matching rows exactly on `S`.
pub struct ConditionalEmpirical {
    model: Arc<dyn Predictor>,
    background: Dataset,
    fallback: NoMatchFallback,
}

pub fn extend_conditional_empirical(model: Arc<dyn Predictor>, background: Dataset) -> Result<ConditionalEmpirical> {
    if background.is_empty() {
        return Err(Error::EmptyBackground);
    }
    if background.n_features() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            actual: background.n_features(),
        });
    }
    Ok(ConditionalEmpirical {
        model,
        background,
        fallback: NoMatchFallback::Error,
    })
}

impl ConditionalEmpirical {
    pub fn with_fallback(mut self, fallback: NoMatchFallback) -> Self {
        self.fallback = fallback;
        self
    }

    fn average(&self, x: &[f64], s: Mask, rows: &[usize]) -> Result<Vec<f64>> {
        let total: f64 = rows.iter().map(|&i| self.background.weight(i)).sum();
        let mut sums: Vec<CompensatedSum> = Vec::new();
        let mut z = x.to_vec();
        for &i in rows {
            let row = self.background.row(i);
            for j in s.complement().iter() {
                z[j] = row[j];
            }
            let out = self.model.predict(&z)?;
            if sums.is_empty() {
                sums = vec![CompensatedSum::new(); out.len()];
            }
            let w = self.background.weight(i) / total;
            for (acc, v) in sums.iter_mut().zip(&out) {
                acc.add(w * v);
            }
        }
        Ok(sums.iter().map(CompensatedSum::value).collect())
    }
}

impl SubsetFunction for ConditionalEmpirical {
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
        let matching: Vec<usize> = (0..self.background.n_rows())
            .filter(|&i| {
                let row = self.background.row(i);
                s.iter().all(|j| row[j] == x[j])
            })
            .collect();
        if matching.is_empty() {
            return match self.fallback {
                NoMatchFallback::Error => Err(Error::NoMatchingRows),
                NoMatchFallback::Marginal => {
                    let all: Vec<usize> = (0..self.background.n_rows()).collect();
                    self.average(x, s, &all)
                }
            };
        }
        self.average(x, s, &matching)
    }
}

/// Encodes the `S` entries of `x` as joint cell indices; the others are left at 0.
fn partial_cell(joint: &DiscreteJoint, x: &[f64], s: Mask) -> Result<Vec<usize>> {
    let mut cell = vec![0usize; joint.n_features()];
    for j in s.iter() {
        let v = x[j];
        let k = joint.cards()[j];
        if v.fract() != 0.0 || v < 0.0 || v >= k as f64 {
            return Err(Error::invalid(format!(
                "feature {} value {v} is not a category in 0..{k}",
                j + 1
            )));
        }
        cell[j] = v as usize;
    }
    Ok(cell)
}

/// `F(x, S) = Σ_{x'} p(x' | x_S) f(x')` over an exactly known discrete joint.
pub struct ConditionalExact {
    model: Arc<dyn Predictor>,
    joint: DiscreteJoint,
}

pub fn extend_conditional_exact(model: Arc<dyn Predictor>, joint: DiscreteJoint) -> Result<ConditionalExact> {
    if joint.n_features() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            actual: joint.n_features(),
        });
    }
    Ok(ConditionalExact { model, joint })
}

impl SubsetFunction for ConditionalExact {
    fn n_features(&self) -> usize {
        self.model.n_features()
    }

    fn output_kind(&self) -> OutputKind {
        self.model.output_kind()
    }

    fn evaluate(&self, x: &[f64], s: Mask) -> Result<Vec<f64>> {
        check_query(x, s, self.model.n_features())?;
        let cell = partial_cell(&self.joint, x, s)?;
        let mut sums: Vec<CompensatedSum> = Vec::new();
        for (completion, p) in self.joint.completions(&cell, s)? {
            let z: Vec<f64> = completion.iter().map(|&v| v as f64).collect();
            let out = self.model.predict(&z)?;
            if sums.is_empty() {
                sums = vec![CompensatedSum::new(); out.len()];
            }
            for (acc, v) in sums.iter_mut().zip(&out) {
                acc.add(p * v);
            }
        }
        Ok(sums.iter().map(CompensatedSum::value).collect())
    }
}

/// The Bayes-optimal subset predictor `F(x, S) = p(Y | X_S = x_S)`.
#[derive(Debug, Clone)]
pub struct BayesSubsetPredictor {
    joint: DiscreteJoint,
}

pub fn bayes_subset_predictor(joint: &DiscreteJoint) -> BayesSubsetPredictor {
    BayesSubsetPredictor { joint: joint.clone() }
}

impl BayesSubsetPredictor {
    pub fn joint(&self) -> &DiscreteJoint {
        &self.joint
    }
}

impl SubsetFunction for BayesSubsetPredictor {
    fn n_features(&self) -> usize {
        self.joint.n_features()
    }

    fn output_kind(&self) -> OutputKind {
        OutputKind::Classification(self.joint.classes())
    }

    fn evaluate(&self, x: &[f64], s: Mask) -> Result<Vec<f64>> {
        check_query(x, s, self.joint.n_features())?;
        let cell = partial_cell(&self.joint, x, s)?;
        self.joint.class_posterior(&cell, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{bayes_predictor, LinearModel};
    use crate::game::enumerate_subsets;

    fn f12() -> Arc<dyn Predictor> {
        Arc::new(LinearModel::new(vec![1.0, 2.0], 0.0))
    }

    fn m(idx: &[usize], d: usize) -> Mask {
        Mask::from_indices(idx, d).unwrap()
    }

    #[test]
    fn empirical_matches_rows() {
        let bg = Dataset::unlabeled(vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 5.0]]).unwrap();
        let f = extend_conditional_empirical(f12(), bg).unwrap();
        // rows with x1 = 1 have x2 in {0, 1}
        let v = f.evaluate(&[1.0, 7.0], m(&[0], 2)).unwrap()[0];
        assert!((v - 2.0).abs() < 1e-15);
        assert!(matches!(
            f.evaluate(&[2.0, 7.0], m(&[0], 2)),
            Err(Error::NoMatchingRows)
        ));
    }

    #[test]
    fn empirical_marginal_fallback() {
        let bg = Dataset::unlabeled(vec![vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let f = extend_conditional_empirical(f12(), bg)
            .unwrap()
            .with_fallback(NoMatchFallback::Marginal);
        let v = f.evaluate(&[3.0, 0.0], m(&[0], 2)).unwrap()[0];
        assert!((v - (3.0 + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn exact_matches_bayes_posterior() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(9);
        let joint = DiscreteJoint::random(vec![2, 3, 2], 3, &mut rng);
        let bayes: Arc<dyn Predictor> = Arc::new(bayes_predictor(&joint));
        let cond = extend_conditional_exact(bayes, joint.clone()).unwrap();
        let direct = bayes_subset_predictor(&joint);
        for c in 0..joint.n_feature_cells() {
            let x: Vec<f64> = joint.feature_cell(c).iter().map(|&v| v as f64).collect();
            for s in enumerate_subsets(3).unwrap() {
                let a = cond.evaluate(&x, s).unwrap();
                let b = direct.evaluate(&x, s).unwrap();
                for (u, v) in a.iter().zip(&b) {
                    assert!((u - v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn exact_ignores_removed_entries() {
        let joint = DiscreteJoint::from_fn(vec![2, 2], 2, |x, y| if x[0] == y { 1.0 } else { 0.1 }).unwrap();
        let f = extend_conditional_exact(f12(), joint).unwrap();
        let a = f.evaluate(&[1.0, 0.0], m(&[0], 2)).unwrap();
        let b = f.evaluate(&[1.0, 99.5], m(&[0], 2)).unwrap();
        assert_eq!(a, b);
        assert!(f.evaluate(&[1.5, 0.0], m(&[0], 2)).is_err());
    }

    #[test]
    fn zero_probability_input() {
        let joint = DiscreteJoint::new(vec![2], 2, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let f = bayes_subset_predictor(&joint);
        assert!(matches!(f.evaluate(&[1.0], m(&[0], 1)), Err(Error::ZeroProbabilityInput)));
        assert_eq!(f.evaluate(&[1.0], m(&[], 1)).unwrap(), vec![0.5, 0.5]);
    }
}
