use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{explanation_distance, DistanceMetric};
use crate::behaviors::{make_game, BehaviorSpec};
use crate::config::{BehaviorConfig, Context, CountingGame, DataConfig, RemovalConfig, SummaryConfig, CONFIG_VERSION};
use crate::error::{Error, Result};
use crate::removal::SubsetFunction;

/// Every combination of the listed removal, behavior and summary choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub data: DataConfig,
    pub removals: Vec<RemovalConfig>,
    pub behaviors: Vec<BehaviorConfig>,
    pub summaries: Vec<SummaryConfig>,
    #[serde(default)]
    pub seed: u64,
    /// Metric for the comparison matrices.
    #[serde(default)]
    pub metric: DistanceMetric,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!("unsupported version {}", self.version)));
        }
        if self.removals.is_empty() || self.behaviors.is_empty() || self.summaries.is_empty() {
            return Err(Error::Config("grid axes must be nonempty".into()));
        }
        Ok(())
    }

    pub fn removal_label(&self, i: usize) -> String {
        format!("r{i}_{}", self.removals[i].name())
    }

    pub fn behavior_label(&self, i: usize) -> String {
        format!("b{i}_{}", self.behaviors[i].name())
    }

    pub fn summary_label(&self, i: usize) -> String {
        format!("s{i}_{}", self.summaries[i].name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub key: String,
    pub removal: usize,
    pub behavior: usize,
    pub summary: usize,
    pub values: Option<Vec<f64>>,
    pub n_evaluations: u64,
    pub runtime_ms: f64,
    pub error: Option<String>,
}

/// Distances between cells that differ only along one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisComparison {
    /// `removal`, `behavior` or `summary`.
    pub axis: String,
    /// Labels of the two fixed axes.
    pub fixed: Vec<String>,
    /// Labels along the varying axis.
    pub labels: Vec<String>,
    /// `None` where either cell failed or the metric is undefined.
    pub matrix: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub metric: DistanceMetric,
    pub cells: Vec<GridCell>,
    pub comparisons: Vec<AxisComparison>,
}

impl GridReport {
    pub fn cell(&self, removal: usize, behavior: usize, summary: usize) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| (c.removal, c.behavior, c.summary) == (removal, behavior, summary))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid report serializes")
    }

    /// Writes one row per cell; attribution values are `;`-separated.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["key", "status", "n_evaluations", "runtime_ms", "values", "error"])?;
        for c in &self.cells {
            let values = c
                .values
                .as_ref()
                .map(|v| v.iter().map(f64::to_string).collect::<Vec<_>>().join(";"))
                .unwrap_or_default();
            w.write_record([
                c.key.clone(),
                if c.error.is_none() { "ok" } else { "error" }.to_string(),
                c.n_evaluations.to_string(),
                c.runtime_ms.to_string(),
                values,
                c.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn comparison(
    cells: &[GridCell],
    metric: DistanceMetric,
    axis: &str,
    fixed: Vec<String>,
    labels: Vec<String>,
    members: Vec<usize>,
) -> AxisComparison {
    let matrix = members
        .iter()
        .map(|&a| {
            members
                .iter()
                .map(|&b| match (&cells[a].values, &cells[b].values) {
                    (Some(x), Some(y)) => explanation_distance(x, y, metric).ok(),
                    _ => None,
                })
                .collect()
        })
        .collect();
    AxisComparison {
        axis: axis.to_string(),
        fixed,
        labels,
        matrix,
    }
}

/// Runs every cell of the grid in parallel; failures are recorded per cell.
pub fn run_grid(spec: &GridSpec, ctx: &Context) -> Result<GridReport> {
    spec.validate()?;
    let (nr, nb, ns) = (spec.removals.len(), spec.behaviors.len(), spec.summaries.len());
    let removals: Vec<std::result::Result<Arc<dyn SubsetFunction>, String>> = spec
        .removals
        .par_iter()
        .map(|r| r.build(ctx, spec.seed).map_err(|e| e.to_string()))
        .collect();
    let behaviors: Vec<std::result::Result<BehaviorSpec, String>> = spec
        .behaviors
        .iter()
        .map(|b| b.to_spec(ctx).map_err(|e| e.to_string()))
        .collect();
    let index = |r: usize, b: usize, s: usize| (r * nb + b) * ns + s;
    let cells: Vec<GridCell> = (0..nr * nb * ns)
        .into_par_iter()
        .map(|k| {
            let (r, b, s) = (k / (nb * ns), (k / ns) % nb, k % ns);
            let start = Instant::now();
            let outcome = (|| -> std::result::Result<(Vec<f64>, u64), String> {
                let f = removals[r].clone()?;
                let behavior = behaviors[b].clone()?;
                let game = CountingGame::new(make_game(f, &behavior).map_err(|e| e.to_string())?);
                let explanation = spec.summaries[s].run(&game, spec.seed).map_err(|e| e.to_string())?;
                Ok((explanation.values(), game.count()))
            })();
            let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
            let key = format!(
                "{}/{}/{}",
                spec.removal_label(r),
                spec.behavior_label(b),
                spec.summary_label(s)
            );
            let (values, n_evaluations, error) = match outcome {
                Ok((v, n)) => (Some(v), n, None),
                Err(e) => (None, 0, Some(e)),
            };
            GridCell {
                key,
                removal: r,
                behavior: b,
                summary: s,
                values,
                n_evaluations,
                runtime_ms,
                error,
            }
        })
        .collect();

    let mut comparisons = Vec::new();
    if nr > 1 {
        for b in 0..nb {
            for s in 0..ns {
                comparisons.push(comparison(
                    &cells,
                    spec.metric,
                    "removal",
                    vec![spec.behavior_label(b), spec.summary_label(s)],
                    (0..nr).map(|r| spec.removal_label(r)).collect(),
                    (0..nr).map(|r| index(r, b, s)).collect(),
                ));
            }
        }
    }
    if nb > 1 {
        for r in 0..nr {
            for s in 0..ns {
                comparisons.push(comparison(
                    &cells,
                    spec.metric,
                    "behavior",
                    vec![spec.removal_label(r), spec.summary_label(s)],
                    (0..nb).map(|b| spec.behavior_label(b)).collect(),
                    (0..nb).map(|b| index(r, b, s)).collect(),
                ));
            }
        }
    }
    if ns > 1 {
        for r in 0..nr {
            for b in 0..nb {
                comparisons.push(comparison(
                    &cells,
                    spec.metric,
                    "summary",
                    vec![spec.removal_label(r), spec.behavior_label(b)],
                    (0..ns).map(|s| spec.summary_label(s)).collect(),
                    (0..ns).map(|s| index(r, b, s)).collect(),
                ));
            }
        }
    }
    Ok(GridReport {
        metric: spec.metric,
        cells,
        comparisons,
    })
}
