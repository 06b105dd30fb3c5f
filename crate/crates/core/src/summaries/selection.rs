use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{excess, tabulate, CooperativeGame, Mask, TabulatedGame};

/// Relative tolerance under which two objective values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub subset: Mask,
    pub objective: f64,
    /// Whether several coalitions attained the optimum.
    pub tie_broken: bool,
}

#[derive(Serialize, Deserialize)]
struct SelectionJson {
    subset: Vec<usize>,
    objective: f64,
    tie_broken: bool,
    d: usize,
}

impl Serialize for SelectionResult {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        SelectionJson {
            subset: self.subset.one_based(),
            objective: self.objective,
            tie_broken: self.tie_broken,
            d: self.subset.dim(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SelectionResult {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = SelectionJson::deserialize(deserializer)?;
        let zero_based: Vec<usize> = raw
            .subset
            .iter()
            .map(|&i| i.checked_sub(1).ok_or_else(|| serde::de::Error::custom("indices are 1-based")))
            .collect::<std::result::Result<_, _>>()?;
        let subset = Mask::from_indices(&zero_based, raw.d).map_err(serde::de::Error::custom)?;
        Ok(SelectionResult {
            subset,
            objective: raw.objective,
            tie_broken: raw.tie_broken,
        })
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Sense {
    Min,
    Max,
}

/// Exhaustive search: optimum up to [`TIE_TOLERANCE`], ties broken by the
/// smallest cardinality and then the smallest mask integer.
fn optimize(
    d: usize,
    sense: Sense,
    objective: impl Fn(Mask) -> Option<f64> + Sync,
) -> Result<SelectionResult> {
    let values: Vec<Option<f64>> = (0..1u64 << d)
        .into_par_iter()
        .map(|bits| objective(Mask::from_bits(bits, d).expect("in range")))
        .collect();
    let better = |a: f64, b: f64| match sense {
        Sense::Min => a < b,
        Sense::Max => a > b,
    };
    let best = values
        .iter()
        .flatten()
        .copied()
        .reduce(|acc, v| if better(v, acc) { v } else { acc })
        .ok_or(Error::Infeasible)?;
    let tol = TIE_TOLERANCE * best.abs().max(1.0);
    let mut ties = values
        .iter()
        .enumerate()
        .filter_map(|(bits, v)| v.filter(|v| (v - best).abs() <= tol).map(|v| (bits as u64, v)));
    let mut chosen = ties.next().expect("best is attained");
    let mut count = 1;
    for (bits, v) in ties {
        count += 1;
        if (bits.count_ones(), bits) < (chosen.0.count_ones(), chosen.0) {
            chosen = (bits, v);
        }
    }
    Ok(SelectionResult {
        subset: Mask::from_bits(chosen.0, d).expect("in range"),
        objective: chosen.1,
        tie_broken: count > 1,
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda must be finite and non-negative"));
    }
    Ok(())
}

/// `argmin_S u(D ∖ S) + λ|S|`.
pub fn select_low_value<G: CooperativeGame + ?Sized>(game: &G, lambda: f64) -> Result<SelectionResult> {
    check_lambda(lambda)?;
    let t = tabulate(game)?;
    optimize(t.players(), Sense::Min, |s| {
        Some(t.get(s.complement()) + lambda * s.len() as f64)
    })
}

/// `argmin_S |S|` subject to `u(S) ≥ t`; the objective reported is `|S|`.
pub fn select_min_size<G: CooperativeGame + ?Sized>(game: &G, t: f64) -> Result<SelectionResult> {
    let table = tabulate(game)?;
    optimize(table.players(), Sense::Min, |s| {
        (table.get(s) >= t).then(|| s.len() as f64)
    })
}

/// Greedy backward elimination for the minimum-size problem: starting from
/// `D`, repeatedly drop the feature whose removal keeps `u` highest while
/// `u(S) ≥ t` still holds. Always feasible, not always optimal.
pub fn select_min_size_greedy<G: CooperativeGame + ?Sized>(game: &G, t: f64) -> Result<SelectionResult> {
    let d = game.players();
    let mut s = Mask::full(d);
    if game.value(s)? < t {
        return Err(Error::Infeasible);
    }
    loop {
        let mut best: Option<(usize, f64)> = None;
        for i in s.iter() {
            let v = game.value(s.without(i))?;
            if v >= t && best.map_or(true, |(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        match best {
            Some((i, _)) => s = s.without(i),
            None => {
                return Ok(SelectionResult {
                    subset: s,
                    objective: s.len() as f64,
                    tie_broken: false,
                })
            }
        }
    }
}

/// `argmax_S u(S)` subject to `|S| = k`.
pub fn select_fixed_size<G: CooperativeGame + ?Sized>(game: &G, k: usize) -> Result<SelectionResult> {
    let d = game.players();
    if k > d {
        return Err(Error::invalid(format!("subset size {k} exceeds {d} features")));
    }
    let t = tabulate(game)?;
    optimize(d, Sense::Max, |s| (s.len() == k).then(|| t.get(s)))
}

/// `argmax_S u(S) − λ|S|`.
pub fn select_regularized<G: CooperativeGame + ?Sized>(game: &G, lambda: f64) -> Result<SelectionResult> {
    check_lambda(lambda)?;
    let t = tabulate(game)?;
    optimize(t.players(), Sense::Max, |s| Some(t.get(s) - lambda * s.len() as f64))
}

/// `argmax_S u(S) − γ u(D ∖ S) − λ|S|`.
pub fn select_partition<G: CooperativeGame + ?Sized>(game: &G, gamma: f64, lambda: f64) -> Result<SelectionResult> {
    check_lambda(lambda)?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma must be finite and non-negative"));
    }
    let t = tabulate(game)?;
    optimize(t.players(), Sense::Max, |s| {
        Some(t.get(s) - gamma * t.get(s.complement()) - lambda * s.len() as f64)
    })
}

/// A selection problem stated in terms of coalitional excess under equal
/// allocations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExcessProblem {
    /// `argmin_S e(S̄, 𝟙λ)`.
    LowValue { lambda: f64 },
    /// `argmin_S |S|` subject to `e(S, 0) ≥ t`.
    MinSize { t: f64 },
    /// `argmax_S e(S, 0)` subject to `|S| = k`.
    FixedSize { k: usize },
    /// `argmax_S e(S, 𝟙λ)`.
    Regularized { lambda: f64 },
    /// `argmax_S e(S, z) − γ e(S̄, z)` with `z = 𝟙λ/(1+γ)`.
    Partition { gamma: f64, lambda: f64 },
}

/// Solves a selection problem through [`excess`]; returns the same
/// coalition as the direct solver, with the excess-form objective.
pub fn selection_via_excess<G: CooperativeGame + ?Sized>(game: &G, problem: ExcessProblem) -> Result<SelectionResult> {
    let t: TabulatedGame = tabulate(game)?;
    let d = t.players();
    let e = |s: Mask, z: f64| excess(&t, s, &vec![z; d]).expect("dimensions match");
    match problem {
        ExcessProblem::LowValue { lambda } => {
            check_lambda(lambda)?;
            optimize(d, Sense::Min, |s| Some(e(s.complement(), lambda)))
        }
        ExcessProblem::MinSize { t: level } => {
            optimize(d, Sense::Min, |s| (e(s, 0.0) >= level).then(|| s.len() as f64))
        }
        ExcessProblem::FixedSize { k } => {
            if k > d {
                return Err(Error::invalid(format!("subset size {k} exceeds {d} features")));
            }
            optimize(d, Sense::Max, |s| (s.len() == k).then(|| e(s, 0.0)))
        }
        ExcessProblem::Regularized { lambda } => {
            check_lambda(lambda)?;
            optimize(d, Sense::Max, |s| Some(e(s, lambda)))
        }
        ExcessProblem::Partition { gamma, lambda } => {
            check_lambda(lambda)?;
            if !(gamma >= 0.0 && gamma.is_finite()) {
                return Err(Error::invalid("gamma must be finite and non-negative"));
            }
            let z = lambda / (1.0 + gamma);
            optimize(d, Sense::Max, |s| Some(e(s, z) - gamma * e(s.complement(), z)))
        }
    }
}
