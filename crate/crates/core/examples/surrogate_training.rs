//! Trains a masked surrogate against a Bayes classifier and a model with
//! held-out features against the labels, then compares both with the exact
//! conditional class probabilities.

use removal_explain::data::{bayes_predictor, train_masked_surrogate, train_with_missingness, DiscreteJoint, MlpConfig};
use removal_explain::estimation::MaskSampler;
use removal_explain::removal::{bayes_subset_predictor, SubsetFunction};
use removal_explain::Mask;

fn main() -> removal_explain::Result<()> {
    let joint = DiscreteJoint::from_fn(vec![2, 2], 2, |x, y| match (x[0] ^ x[1], y) {
        (1, 1) | (0, 0) => 0.4,
        _ => 0.1,
    })?;
    let config = MlpConfig {
        epochs: 1500,
        ..MlpConfig::default()
    };
    let sampler = MaskSampler::UniformCardinality;
    let surrogate = train_masked_surrogate(&bayes_predictor(&joint), &joint.feature_dataset(), sampler, &config)?;
    let missing = train_with_missingness(&joint.enumerate_dataset(), sampler, &config)?;
    let exact = bayes_subset_predictor(&joint);

    let mut worst = (0.0f64, 0.0f64);
    for x in [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]] {
        for bits in 0..4u64 {
            let s = Mask::from_bits(bits, 2)?;
            let target = exact.evaluate(&x, s)?;
            let gap = |p: Vec<f64>| p.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst.0 = worst.0.max(gap(surrogate.predict_masked(&x, s)?));
            worst.1 = worst.1.max(gap(missing.predict_masked(&x, s)?));
        }
    }
    println!("sup-norm error: surrogate {:.4}, missingness {:.4}", worst.0, worst.1);
    Ok(())
}
