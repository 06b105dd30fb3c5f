use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{curve_from_game, ranking_from_attributions, CurveDirection, CurveOptions};
use crate::behaviors::{make_game, BehaviorSpec, LinkFn};
use crate::data::{train_masked_surrogate, DiscreteJoint, LinearModel, MlpConfig, Predictor};
use crate::error::Result;
use crate::estimation::MaskSampler;
use crate::removal::{RemovalStrategy, SubsetFunction};
use crate::summaries::shapley_exact;

/// Areas within `RANK_TOLERANCE · max(1, |area|)` share a rank.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedEntry {
    pub explanation: String,
    pub masking: String,
    pub deletion_area: f64,
    pub insertion_area: f64,
    /// 1 is best: the lowest deletion area under this masking.
    pub deletion_rank: usize,
    /// 1 is best: the highest insertion area under this masking.
    pub insertion_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedMetricReport {
    pub entries: Vec<AlignedEntry>,
}

impl AlignedMetricReport {
    pub fn entry(&self, explanation: &str, masking: &str) -> Option<&AlignedEntry> {
        self.entries
            .iter()
            .find(|e| e.explanation == explanation && e.masking == masking)
    }

    /// Explanations ranked first by both curves under `masking`.
    pub fn winners(&self, masking: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.masking == masking && e.deletion_rank == 1 && e.insertion_rank == 1)
            .map(|e| e.explanation.as_str())
            .collect()
    }
}

fn better(a: f64, b: f64, lower_is_better: bool) -> bool {
    let tol = RANK_TOLERANCE * a.abs().max(b.abs()).max(1.0);
    if lower_is_better {
        a < b - tol
    } else {
        a > b + tol
    }
}

/// Scores every explanation with insertion and deletion curves under every
/// evaluation masking, and ranks the explanations per masking.
pub fn aligned_metric_demo(
    explanations: &[(String, Vec<f64>)],
    maskings: &[(String, Arc<dyn SubsetFunction>)],
    behavior: &BehaviorSpec,
    options: CurveOptions,
) -> Result<AlignedMetricReport> {
    let rankings = explanations
        .iter()
        .map(|(_, v)| ranking_from_attributions(v))
        .collect::<Result<Vec<_>>>()?;
    let mut entries = Vec::new();
    for (masking, f) in maskings {
        let game = make_game(f.clone(), behavior)?;
        let mut areas = Vec::with_capacity(explanations.len());
        for ranking in &rankings {
            let del = curve_from_game(&game, ranking, CurveDirection::Deletion, options)?;
            let ins = curve_from_game(&game, ranking, CurveDirection::Insertion, options)?;
            areas.push((del.area, ins.area));
        }
        for (k, (name, _)) in explanations.iter().enumerate() {
            let (del, ins) = areas[k];
            entries.push(AlignedEntry {
                explanation: name.clone(),
                masking: masking.clone(),
                deletion_area: del,
                insertion_area: ins,
                deletion_rank: 1 + areas.iter().filter(|(d, _)| better(*d, del, true)).count(),
                insertion_rank: 1 + areas.iter().filter(|(_, i)| better(*i, ins, false)).count(),
            });
        }
    }
    Ok(AlignedMetricReport { entries })
}

/// The joint behind [`aligned_metric_construction`]: `x₁ ∈ {0,1,2}`,
/// `x₂ ∈ {0,1}`, with mass `2/3` on `(0,0)` and `1/6` on each of `(1,1)` and `(2,1)`.
pub fn aligned_example_joint() -> DiscreteJoint {
    DiscreteJoint::from_fn(vec![3, 2], 1, |x, _| match (x[0], x[1]) {
        (0, 0) => 2.0 / 3.0,
        (1, 1) | (2, 1) => 1.0 / 6.0,
        _ => 0.0,
    })
    .expect("valid joint")
}

/// Explains `f(x) = x₁` at `x = (1, 1)` with Shapley values under zero
/// masking and under a trained surrogate, then evaluates both explanations
/// with both maskings. The explanation names and masking names are
/// `zeros` and `surrogate`.
pub fn aligned_metric_construction(mlp: &MlpConfig) -> Result<AlignedMetricReport> {
    let joint = aligned_example_joint();
    let model: Arc<dyn Predictor> = Arc::new(LinearModel::new(vec![1.0, 0.0], 0.0));
    let surrogate = train_masked_surrogate(
        model.as_ref(),
        &joint.feature_dataset(),
        MaskSampler::UniformCardinality,
        mlp,
    )?;
    let zeros = RemovalStrategy::Zeros.build(model.clone(), 0)?;
    let learned = RemovalStrategy::Surrogate { predictor: surrogate }.build(model, 0)?;
    let behavior = BehaviorSpec::Prediction {
        x: vec![1.0, 1.0],
        class: None,
        link: LinkFn::Identity,
    };
    let maskings = vec![("zeros".to_string(), zeros), ("surrogate".to_string(), learned)];
    let explanations = maskings
        .iter()
        .map(|(name, f)| Ok((name.clone(), shapley_exact(&make_game(f.clone(), &behavior)?)?.values)))
        .collect::<Result<Vec<_>>>()?;
    aligned_metric_demo(&explanations, &maskings, &behavior, CurveOptions::default())
}
