//! Summaries of a cooperative game: probabilistic values, weighted
//! least squares additive models and subset selection.

mod selection;
mod wls;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use selection::{
    select_fixed_size, select_low_value, select_min_size, select_min_size_greedy, select_partition,
    select_regularized, selection_via_excess, ExcessProblem, SelectionResult, TIE_TOLERANCE,
};
pub(crate) use wls::wls_fit_observations;
pub use wls::{wls_fit, wls_fit_table, Regularizer, WeightingKernel, L1_MAX_SWEEPS, L1_TOLERANCE};

use crate::error::{Error, Result};
use crate::game::{tabulate, CooperativeGame, Mask, TabulatedGame};
use crate::numeric::{binomial, CompensatedSum};

/// Per-feature attribution scores, optionally with an additive-model intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub method: String,
    pub values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub intercept: Option<f64>,
    pub n_evaluations: u64,
}

impl AttributionResult {
    pub fn new(method: impl Into<String>, values: Vec<f64>, n_evaluations: u64) -> Self {
        Self {
            method: method.into(),
            values,
            intercept: None,
            n_evaluations,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("attribution serializes")
    }
}

/// `a_i = u(D) − u(D ∖ {i})`, using `d + 1` evaluations.
pub fn remove_individual<G: CooperativeGame + ?Sized>(game: &G) -> Result<AttributionResult> {
    let d = game.players();
    let full = Mask::full(d);
    let top = game.value(full)?;
    let values = (0..d)
        .map(|i| game.value(full.without(i)).map(|v| top - v))
        .collect::<Result<Vec<_>>>()?;
    Ok(AttributionResult::new("remove_individual", values, d as u64 + 1))
}

/// `a_i = u({i}) − u(∅)`, using `d + 1` evaluations.
pub fn include_individual<G: CooperativeGame + ?Sized>(game: &G) -> Result<AttributionResult> {
    let d = game.players();
    let empty = Mask::empty(d);
    let bottom = game.value(empty)?;
    let values = (0..d)
        .map(|i| game.value(empty.with(i)).map(|v| v - bottom))
        .collect::<Result<Vec<_>>>()?;
    Ok(AttributionResult::new("include_individual", values, d as u64 + 1))
}

/// Probabilistic value `Σ_{S ∌ i} p_i(S) (u(S ∪ {i}) − u(S))` with weights
/// depending only on `|S|`, computed from a full table.
fn semivalue(table: &TabulatedGame, weight: impl Fn(usize) -> f64 + Sync) -> Vec<f64> {
    let d = table.players();
    let u = table.values();
    let weights: Vec<f64> = (0..d).map(&weight).collect();
    (0..d)
        .into_par_iter()
        .map(|i| {
            let bit = 1usize << i;
            let mut acc = CompensatedSum::new();
            for s in 0..u.len() {
                if s & bit == 0 {
                    acc.add(weights[s.count_ones() as usize] * (u[s | bit] - u[s]));
                }
            }
            acc.value()
        })
        .collect()
}

/// Shapley values of a fully tabulated game.
pub fn shapley_table(table: &TabulatedGame) -> Vec<f64> {
    let d = table.players();
    semivalue(table, |s| 1.0 / (d as f64 * binomial(d - 1, s)))
}

/// Banzhaf values of a fully tabulated game.
pub fn banzhaf_table(table: &TabulatedGame) -> Vec<f64> {
    let d = table.players();
    let scale = 0.5f64.powi(d as i32 - 1);
    semivalue(table, |_| scale)
}

/// `φ_i = (1/d) Σ_{S ∌ i} C(d−1, |S|)⁻¹ (u(S ∪ {i}) − u(S))` by enumeration.
pub fn shapley_exact<G: CooperativeGame + ?Sized>(game: &G) -> Result<AttributionResult> {
    let table = tabulate(game)?;
    Ok(AttributionResult::new(
        "shapley",
        shapley_table(&table),
        table.values().len() as u64,
    ))
}

/// `ψ_i = 2^{1−d} Σ_{S ∌ i} (u(S ∪ {i}) − u(S))` by enumeration.
pub fn banzhaf_exact<G: CooperativeGame + ?Sized>(game: &G) -> Result<AttributionResult> {
    let table = tabulate(game)?;
    Ok(AttributionResult::new(
        "banzhaf",
        banzhaf_table(&table),
        table.values().len() as u64,
    ))
}

/// `a_i = E[u(S) | i ∈ S]` when every other player joins independently
/// with probability `p`.
pub fn mean_when_included_table(table: &TabulatedGame, p: f64) -> Result<Vec<f64>> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("inclusion probability {p} not in (0, 1)")));
    }
    let d = table.players();
    let u = table.values();
    let weights: Vec<f64> = (0..=d)
        .map(|k| if k == 0 { 0.0 } else { p.powi(k as i32 - 1) * (1.0 - p).powi((d - k) as i32) })
        .collect();
    Ok((0..d)
        .into_par_iter()
        .map(|i| {
            let bit = 1usize << i;
            let mut acc = CompensatedSum::new();
            for s in 0..u.len() {
                if s & bit != 0 {
                    acc.add(weights[s.count_ones() as usize] * u[s]);
                }
            }
            acc.value()
        })
        .collect())
}

/// Mean value of the coalitions containing each player, over uniform subsets.
pub fn mean_when_included_exact<G: CooperativeGame + ?Sized>(game: &G) -> Result<AttributionResult> {
    mean_when_included_exact_p(game, 0.5)
}

/// Mean value of the coalitions containing each player when the others are
/// included independently with probability `p`.
pub fn mean_when_included_exact_p<G: CooperativeGame + ?Sized>(game: &G, p: f64) -> Result<AttributionResult> {
    let table = tabulate(game)?;
    Ok(AttributionResult::new(
        "mean_when_included",
        mean_when_included_table(&table, p)?,
        table.values().len() as u64,
    ))
}

/// Result of [`normalize_attributions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedAttributions {
    pub result: AttributionResult,
    /// Set when any input score was negative, for which the normalized
    /// values are hard to read as shares.
    pub had_negative: bool,
}

/// `w_i = a_i / Σ_j a_j`.
pub fn normalize_attributions(a: &AttributionResult) -> Result<NormalizedAttributions> {
    let total: f64 = a.values.iter().copied().collect::<CompensatedSum>().value();
    let scale = a.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if total == 0.0 || total.abs() <= 1e-15 * scale {
        return Err(Error::ZeroSum);
    }
    let mut result = a.clone();
    result.values = a.values.iter().map(|v| v / total).collect();
    result.method = format!("{}_normalized", a.method);
    Ok(NormalizedAttributions {
        result,
        had_negative: a.values.iter().any(|&v| v < 0.0),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::game::FnGame;

    pub(crate) fn g1() -> TabulatedGame {
        TabulatedGame::new(2, vec![0.0, 1.0, 2.0, 4.0]).unwrap()
    }

    pub(crate) fn g2() -> TabulatedGame {
        let values = (0..8u32)
            .map(|s| if s & 1 == 1 && s.count_ones() >= 2 { 1.0 } else { 0.0 })
            .collect();
        TabulatedGame::new(3, values).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn individual_methods_on_g1() {
        assert_eq!(remove_individual(&g1()).unwrap().values, vec![2.0, 3.0]);
        assert_eq!(include_individual(&g1()).unwrap().values, vec![1.0, 2.0]);
        assert_eq!(remove_individual(&g1()).unwrap().n_evaluations, 3);
    }

    #[test]
    fn constant_and_additive_games() {
        let constant = FnGame::new(4, |_| 3.0);
        let c = [0.5, -1.0, 2.0, 0.25];
        let additive = FnGame::new(4, move |s: Mask| s.iter().map(|i| c[i]).sum());
        type Method = fn(&dyn CooperativeGame) -> Result<AttributionResult>;
        let methods: [Method; 4] = [
            |g| remove_individual(g),
            |g| include_individual(g),
            |g| shapley_exact(g),
            |g| banzhaf_exact(g),
        ];
        for f in methods {
            close(&f(&constant).unwrap().values, &[0.0; 4], 0.0);
            close(&f(&additive).unwrap().values, &c, 1e-12);
        }
        close(&mean_when_included_exact(&constant).unwrap().values, &[3.0; 4], 1e-12);
    }

    #[test]
    fn shapley_examples() {
        close(&shapley_exact(&g1()).unwrap().values, &[1.5, 2.5], 1e-15);
        close(&shapley_exact(&g2()).unwrap().values, &[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1e-15);
        let sym = FnGame::new(5, |s: Mask| s.len() as f64);
        close(&shapley_exact(&sym).unwrap().values, &[1.0; 5], 1e-12);
    }

    #[test]
    fn banzhaf_examples() {
        close(&banzhaf_exact(&g1()).unwrap().values, &[1.5, 2.5], 1e-15);
        close(&banzhaf_exact(&g2()).unwrap().values, &[0.75, 0.25, 0.25], 1e-15);
    }

    #[test]
    fn mean_when_included_examples() {
        close(&mean_when_included_exact(&g2()).unwrap().values, &[0.75, 0.5, 0.5], 1e-15);
        close(&mean_when_included_exact(&g1()).unwrap().values, &[2.5, 3.0], 1e-15);
    }

    #[test]
    fn shapley_cap() {
        let big = FnGame::new(25, |_| 0.0);
        assert!(matches!(shapley_exact(&big), Err(Error::DimensionTooLarge { .. })));
    }

    #[test]
    fn normalization() {
        let a = AttributionResult::new("x", vec![2.0, 3.0], 0);
        let n = normalize_attributions(&a).unwrap();
        close(&n.result.values, &[0.4, 0.6], 1e-15);
        assert!(!n.had_negative);
        assert_eq!(
            normalize_attributions(&AttributionResult::new("x", vec![1.0], 0)).unwrap().result.values,
            vec![1.0]
        );
        assert!(matches!(
            normalize_attributions(&AttributionResult::new("x", vec![1.0, -1.0], 0)),
            Err(Error::ZeroSum)
        ));
        assert!(normalize_attributions(&AttributionResult::new("x", vec![3.0, -1.0], 0)).unwrap().had_negative);
    }

    #[test]
    fn json_shape() {
        let a = AttributionResult::new("shapley", vec![1.5, 2.5], 4);
        let v: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(v["method"], "shapley");
        assert!(v.get("intercept").is_none());
        assert_eq!(v["n_evaluations"], 4);
    }
}
