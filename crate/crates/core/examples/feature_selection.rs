//! Exhaustive feature selection, solved directly and through the excess
//! reformulation.

use removal_explain::game::FnGame;
use removal_explain::summaries::{
    select_fixed_size, select_low_value, select_min_size, select_partition, select_regularized, selection_via_excess,
    ExcessProblem,
};
use removal_explain::Mask;

fn main() -> removal_explain::Result<()> {
    let weights = [0.9, 0.05, 0.6, 0.1, 0.3];
    let game = FnGame::new(5, move |s: Mask| s.iter().map(|i| weights[i]).sum::<f64>().min(1.5));

    println!("fixed size 2:       {:?}", select_fixed_size(&game, 2)?.subset.one_based());
    println!("min size, t = 1.4:  {:?}", select_min_size(&game, 1.4)?.subset.one_based());
    println!("regularized 0.2:    {:?}", select_regularized(&game, 0.2)?.subset.one_based());
    println!("low value 0.2:      {:?}", select_low_value(&game, 0.2)?.subset.one_based());
    println!("partition 1, 0.2:   {:?}", select_partition(&game, 1.0, 0.2)?.subset.one_based());

    let via = selection_via_excess(&game, ExcessProblem::Regularized { lambda: 0.2 })?;
    println!("regularized via excess: {:?}", via.subset.one_based());
    Ok(())
}
