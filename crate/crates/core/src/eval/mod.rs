//! Evaluation of explanations: insertion/deletion curves, distances between
//! explanations, the method grid and the aligned-metric comparison.

mod aligned;
mod grid;

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use aligned::{aligned_example_joint, aligned_metric_construction, aligned_metric_demo, AlignedEntry, AlignedMetricReport, RANK_TOLERANCE};
pub use grid::{run_grid, AxisComparison, GridCell, GridReport, GridSpec};

use crate::behaviors::{make_game, BehaviorSpec};
use crate::error::{Error, Result};
use crate::game::{CooperativeGame, Mask};
use crate::removal::SubsetFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveDirection {
    /// Most important features are removed first.
    Deletion,
    /// Least important features are removed first.
    Insertion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveOptions {
    /// Insertion only: start from the empty set and add the most important
    /// features first.
    pub start_from_empty: bool,
    /// Stop after this many steps instead of running to `d`.
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveResult {
    pub direction: CurveDirection,
    /// `points[j]` is the game value after `j` steps.
    pub points: Vec<f64>,
    /// Arithmetic mean of `points`.
    pub area: f64,
}

impl CurveResult {
    /// Writes `n_removed,value` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n_removed", "value"])?;
        for (j, v) in self.points.iter().enumerate() {
            w.write_record([j.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Checks that `ranking` (0-based, most important first) is a permutation of `0..d`.
pub fn validate_ranking(ranking: &[usize], d: usize) -> Result<()> {
    if ranking.len() != d {
        return Err(Error::InvalidRanking(format!(
            "ranking has {} entries, expected {d}",
            ranking.len()
        )));
    }
    let mut seen = vec![false; d];
    for &i in ranking {
        if i >= d || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidRanking(format!("{:?} is not a permutation", ranking)));
        }
    }
    Ok(())
}

/// Orders features by decreasing attribution, breaking ties by index.
pub fn ranking_from_attributions(values: &[f64]) -> Result<Vec<usize>> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidRanking(format!("non-finite attribution {v}")));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    Ok(order)
}

/// Traces a game along a ranking (0-based, most important first).
pub fn curve_from_game<G: CooperativeGame + ?Sized>(
    game: &G,
    ranking: &[usize],
    direction: CurveDirection,
    options: CurveOptions,
) -> Result<CurveResult> {
    let d = game.players();
    validate_ranking(ranking, d)?;
    let steps = options.max_steps.map_or(d, |m| m.min(d));
    let from_empty = options.start_from_empty && direction == CurveDirection::Insertion;
    let order: Vec<usize> = match direction {
        CurveDirection::Deletion => ranking.to_vec(),
        CurveDirection::Insertion if from_empty => ranking.to_vec(),
        CurveDirection::Insertion => ranking.iter().rev().copied().collect(),
    };
    let mut s = if from_empty { Mask::empty(d) } else { Mask::full(d) };
    let mut points = Vec::with_capacity(steps + 1);
    points.push(game.value(s)?);
    for &i in order.iter().take(steps) {
        s = s.toggled(i);
        points.push(game.value(s)?);
    }
    let area = points.iter().sum::<f64>() / points.len() as f64;
    Ok(CurveResult {
        direction,
        points,
        area,
    })
}

/// Deletion curve of the behavior under the evaluation subset function.
pub fn deletion_curve(
    eval_f: Arc<dyn SubsetFunction>,
    behavior: &BehaviorSpec,
    ranking: &[usize],
    options: CurveOptions,
) -> Result<CurveResult> {
    curve_from_game(&make_game(eval_f, behavior)?, ranking, CurveDirection::Deletion, options)
}

/// Insertion curve of the behavior under the evaluation subset function.
pub fn insertion_curve(
    eval_f: Arc<dyn SubsetFunction>,
    behavior: &BehaviorSpec,
    ranking: &[usize],
    options: CurveOptions,
) -> Result<CurveResult> {
    curve_from_game(&make_game(eval_f, behavior)?, ranking, CurveDirection::Insertion, options)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    Pearson,
    Spearman,
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ConstantVector);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, with tied values sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Euclidean distance, or Pearson/Spearman correlation, between two explanations.
pub fn explanation_distance(a: &[f64], b: &[f64], metric: DistanceMetric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::invalid("explanations are empty"));
    }
    match metric {
        DistanceMetric::Euclidean => Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()),
        DistanceMetric::Pearson => pearson(a, b),
        DistanceMetric::Spearman => pearson(&average_ranks(a), &average_ranks(b)),
    }
}
