//! Sampling estimators with confidence intervals and convergence detection,
//! compared with the exact values.

use removal_explain::estimation::{banzhaf_sampled, shapley_sampled, wls_sampled, EstimatorConfig};
use removal_explain::game::FnGame;
use removal_explain::summaries::{banzhaf_exact, shapley_exact, WeightingKernel};
use removal_explain::Mask;

fn main() -> removal_explain::Result<()> {
    let weights = [0.5, -1.0, 2.0, 0.25, 1.5, -0.5, 0.75, 1.0];
    let game = FnGame::new(8, move |s: Mask| {
        let linear: f64 = s.iter().map(|i| weights[i]).sum();
        linear + if s.contains(0) && s.contains(2) { 1.0 } else { 0.0 }
    });
    let cfg = EstimatorConfig::with_seed(42);

    let exact = shapley_exact(&game)?.values;
    let est = shapley_sampled(&game, &cfg)?;
    report("shapley", &est.values, &est.ci_half_widths, &exact, est.n_samples, est.converged);

    let exact = banzhaf_exact(&game)?.values;
    let est = banzhaf_sampled(&game, &cfg)?;
    report("banzhaf", &est.values, &est.ci_half_widths, &exact, est.n_samples, est.converged);

    let exact = shapley_exact(&game)?.values;
    let est = wls_sampled(&game, &WeightingKernel::Shapley, &cfg)?;
    report("wls shapley", &est.values, &est.ci_half_widths, &exact, est.n_samples, est.converged);
    Ok(())
}

fn report(name: &str, values: &[f64], half: &[f64], exact: &[f64], n: u64, converged: bool) {
    println!("{name}: {n} samples, converged {converged}");
    for (i, ((v, h), e)) in values.iter().zip(half).zip(exact).enumerate() {
        println!("  feature {}: {v:+.4} ± {h:.4} (exact {e:+.4})", i + 1);
    }
}
