//! Compares removal strategies on a linear model over independent features.
//! Under independence every strategy below yields the same subset function.

use std::sync::Arc;

use removal_explain::data::{DiscreteJoint, LinearModel, Predictor};
use removal_explain::removal::{RemovalStrategy, Sampling};
use removal_explain::Mask;

fn main() -> removal_explain::Result<()> {
    let px = [[0.3, 0.7], [0.6, 0.4]];
    let joint = DiscreteJoint::from_fn(vec![2, 2], 1, |x, _| px[0][x[0]] * px[1][x[1]])?;
    let background = joint.feature_dataset();
    let model: Arc<dyn Predictor> = Arc::new(LinearModel::new(vec![2.0, -1.0], 0.5));
    let exact = Sampling::Exact { support_cap: 1000 };

    let strategies = [
        RemovalStrategy::Zeros,
        RemovalStrategy::Default { reference: vec![0.7, 0.4] },
        RemovalStrategy::MarginalJoint { background: background.clone(), sampling: exact },
        RemovalStrategy::ProductOfMarginals { background, sampling: exact },
        RemovalStrategy::ConditionalExact { joint },
    ];
    let x = [1.0, 1.0];
    for strategy in &strategies {
        let f = strategy.build(model.clone(), 0)?;
        let row = (0..4u64)
            .map(|bits| Ok(f.evaluate(&x, Mask::from_bits(bits, 2)?)?[0]))
            .collect::<removal_explain::Result<Vec<_>>>()?;
        println!("{:<18} F(x, ∅), F(x, {{1}}), F(x, {{2}}), F(x, D) = {row:?}", strategy.name());
    }
    Ok(())
}
