//! Exact attributions for a small cooperative game, plus the weighted least
//! squares view that reproduces each of them.

use removal_explain::game::TabulatedGame;
use removal_explain::summaries::{
    banzhaf_exact, include_individual, mean_when_included_exact, remove_individual, shapley_exact, wls_fit,
    Regularizer, WeightingKernel,
};

fn main() -> removal_explain::Result<()> {
    // u(∅) = 0, u({1}) = 1, u({2}) = 2, u({1,2}) = 4
    let game = TabulatedGame::new(2, vec![0.0, 1.0, 2.0, 4.0])?;

    for result in [
        shapley_exact(&game)?,
        banzhaf_exact(&game)?,
        mean_when_included_exact(&game)?,
        include_individual(&game)?,
        remove_individual(&game)?,
    ] {
        println!("{:<20} {:?}", result.method, result.values);
    }

    for kernel in [WeightingKernel::Shapley, WeightingKernel::Banzhaf] {
        let fit = wls_fit(&game, &kernel, Regularizer::None)?;
        println!("wls {:<16} {:?} (intercept {:?})", kernel.name(), fit.values, fit.intercept);
    }
    Ok(())
}
