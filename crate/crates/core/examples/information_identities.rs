//! With a Bayes classifier, exact conditional removal and cross-entropy loss,
//! the dataset-loss game measures mutual information with the label.

use std::sync::Arc;

use removal_explain::behaviors::{make_game, BehaviorSpec, LossFn};
use removal_explain::data::{bayes_predictor, DiscreteJoint};
use removal_explain::removal::extend_conditional_exact;
use removal_explain::{CooperativeGame, Mask};

fn main() -> removal_explain::Result<()> {
    // X1 is a copy of Y flipped with probability 0.1, X2 is independent noise.
    let joint = DiscreteJoint::from_fn(vec![2, 2], 2, |x, y| if x[0] == y { 0.9 } else { 0.1 })?;
    let f = Arc::new(extend_conditional_exact(Arc::new(bayes_predictor(&joint)), joint.clone())?);
    let game = make_game(
        f,
        &BehaviorSpec::DatasetLoss {
            data: joint.enumerate_dataset(),
            loss: LossFn::CrossEntropy,
        },
    )?;
    let base = game.value(Mask::empty(2))?;
    for bits in 0..4u64 {
        let s = Mask::from_bits(bits, 2)?;
        println!(
            "S = {:?}: v(S) - v(∅) = {:.6}, I(Y; X_S) = {:.6}",
            s.one_based(),
            game.value(s)? - base,
            joint.mutual_information(s)
        );
    }
    Ok(())
}
