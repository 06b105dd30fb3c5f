//! Built-in oracle suites: quick checks of the library's exact identities on
//! seeded random instances.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::behaviors::{make_game, BehaviorSpec, LossFn};
use crate::data::{bayes_predictor, DiscreteJoint, LinearModel, Predictor};
use crate::error::{Error, Result};
use crate::game::{tabulate, FnGame, Mask, TabulatedGame};
use crate::removal::{extend_conditional_exact, RemovalStrategy, Sampling, SubsetFunction};
use crate::summaries::{
    banzhaf_exact, include_individual, remove_individual, select_fixed_size, select_low_value, select_min_size,
    select_partition, select_regularized, selection_via_excess, shapley_exact, wls_fit, ExcessProblem, Regularizer,
    WeightingKernel,
};

/// Names of the available suites, in run order.
pub const SUITES: [&str; 6] = [
    "kernel",
    "axioms",
    "consistency",
    "information",
    "excess",
    "removal-equivalence",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub checks: usize,
    /// Largest deviation observed across all checks.
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SelftestOptions {
    /// Replace every tolerance with a negative one so that all suites fail.
    pub inject_tolerance_failure: bool,
}

struct Tracker {
    checks: usize,
    max_error: f64,
}

impl Tracker {
    fn new() -> Self {
        Self {
            checks: 0,
            max_error: 0.0,
        }
    }

    fn record(&mut self, error: f64) {
        self.checks += 1;
        self.max_error = if error.is_nan() { f64::INFINITY } else { self.max_error.max(error) };
    }

    fn vectors(&mut self, a: &[f64], b: &[f64]) {
        if a.len() != b.len() {
            self.record(f64::INFINITY);
            return;
        }
        let err = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        self.record(err);
    }
}

fn random_table(rng: &mut ChaCha8Rng, d: usize) -> TabulatedGame {
    TabulatedGame::new(d, (0..1usize << d).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("valid table")
}

fn kernel_suite(t: &mut Tracker) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..40 {
        let game = random_table(&mut rng, 2 + trial % 7);
        let pairs = [
            (WeightingKernel::Shapley, shapley_exact(&game)?),
            (WeightingKernel::Banzhaf, banzhaf_exact(&game)?),
            (WeightingKernel::IncludeIndividual, include_individual(&game)?),
            (WeightingKernel::RemoveIndividual, remove_individual(&game)?),
        ];
        for (kernel, exact) in pairs {
            t.vectors(&wls_fit(&game, &kernel, Regularizer::None)?.values, &exact.values);
        }
    }
    Ok(())
}

fn axioms_suite(t: &mut Tracker) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..30 {
        let d = 2 + trial % 5;
        let g = random_table(&mut rng, d);
        let h = random_table(&mut rng, d);
        let full = Mask::full(d);
        let phi = shapley_exact(&g)?.values;
        t.record((phi.iter().sum::<f64>() - (g.get(full) - g.get(Mask::empty(d)))).abs());

        let sum = FnGame::new(d, |s| g.get(s) + h.get(s));
        let (pg, ph, ps) = (phi.clone(), shapley_exact(&h)?.values, shapley_exact(&sum)?.values);
        t.vectors(&ps, &pg.iter().zip(&ph).map(|(a, b)| a + b).collect::<Vec<_>>());
        let (bg, bh, bs) = (banzhaf_exact(&g)?.values, banzhaf_exact(&h)?.values, banzhaf_exact(&sum)?.values);
        t.vectors(&bs, &bg.iter().zip(&bh).map(|(a, b)| a + b).collect::<Vec<_>>());

        let swap = |s: Mask| {
            let (a, b) = (s.contains(0), s.contains(1));
            let mut m = s.without(0).without(1);
            if a {
                m = m.with(1);
            }
            if b {
                m = m.with(0);
            }
            m
        };
        let symmetric = FnGame::new(d, |s| g.get(s) + g.get(swap(s)));
        for values in [shapley_exact(&symmetric)?.values, banzhaf_exact(&symmetric)?.values] {
            t.record((values[0] - values[1]).abs());
        }

        let c = rng.gen_range(-1.0..1.0);
        let dummy = FnGame::new(d, |s: Mask| g.get(s.without(0)) + if s.contains(0) { c } else { 0.0 });
        t.record((shapley_exact(&dummy)?.values[0] - c).abs());
        t.record((banzhaf_exact(&dummy)?.values[0] - c).abs());

        if d >= 3 {
            let merged = FnGame::new(d - 1, |s: Mask| {
                let mut m = Mask::empty(d);
                for i in s.iter() {
                    m = if i == 0 { m.with(0).with(1) } else { m.with(i + 1) };
                }
                g.get(m)
            });
            let b = banzhaf_exact(&g)?.values;
            t.record((banzhaf_exact(&merged)?.values[0] - (b[0] + b[1])).abs());
        }
    }
    Ok(())
}

fn random_joint(rng: &mut ChaCha8Rng) -> DiscreteJoint {
    let d = rng.gen_range(1..=3);
    let cards = (0..d).map(|_| rng.gen_range(2..=3)).collect();
    let classes = rng.gen_range(2..=3);
    DiscreteJoint::random(cards, classes, rng)
}

fn consistency_suite(t: &mut Tracker) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..8 {
        let joint = random_joint(&mut rng);
        let d = joint.n_features();
        let f = extend_conditional_exact(Arc::new(bayes_predictor(&joint)), joint.clone())?;
        let cells: Vec<(Vec<f64>, f64)> = (0..joint.n_feature_cells())
            .map(|c| {
                let x = joint.feature_cell(c).into_iter().map(|v| v as f64).collect();
                (x, joint.feature_cell_prob(c))
            })
            .collect();
        for s in 0..1u64 << d {
            let s = Mask::from_bits(s, d)?;
            for r in 0..1u64 << d {
                let r = Mask::from_bits(r, d)?;
                if !r.is_subset_of(&s) {
                    continue;
                }
                for (x, _) in &cells {
                    let agrees = |y: &[f64]| r.iter().all(|j| y[j] == x[j]);
                    let mass: f64 = cells.iter().filter(|(y, _)| agrees(y)).map(|(_, p)| p).sum();
                    let mut nested = vec![0.0; joint.classes()];
                    for (y, p) in cells.iter().filter(|(y, _)| agrees(y)) {
                        for (acc, v) in nested.iter_mut().zip(f.evaluate(y, s)?) {
                            *acc += p / mass * v;
                        }
                    }
                    t.vectors(&f.evaluate(x, r)?, &nested);
                }
            }
        }
    }
    Ok(())
}

fn information_suite(t: &mut Tracker) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let copy = DiscreteJoint::from_fn(vec![2], 2, |x, y| if x[0] == y { 0.5 } else { 0.0 })?;
    let noisy = DiscreteJoint::from_fn(vec![2], 2, |x, y| if x[0] == y { 0.45 } else { 0.05 })?;
    let full = Mask::full(1);
    t.record((copy.mutual_information(full) - std::f64::consts::LN_2).abs());
    t.record((noisy.mutual_information(full) - 0.368_064_207_168_497).abs());
    let mut joints = vec![copy, noisy];
    joints.extend((0..6).map(|_| random_joint(&mut rng)));
    for joint in joints {
        let d = joint.n_features();
        let f = extend_conditional_exact(Arc::new(bayes_predictor(&joint)), joint.clone())?;
        let game = make_game(
            Arc::new(f),
            &BehaviorSpec::DatasetLoss {
                data: joint.enumerate_dataset(),
                loss: LossFn::CrossEntropy,
            },
        )?;
        let table = tabulate(&game)?;
        let base = table.get(Mask::empty(d));
        for s in 0..1u64 << d {
            let s = Mask::from_bits(s, d)?;
            t.record((table.get(s) - base - joint.mutual_information(s)).abs());
        }
    }
    Ok(())
}

fn excess_suite(t: &mut Tracker) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..30 {
        let d = 1 + trial % 8;
        let g = random_table(&mut rng, d);
        let lambda = rng.gen_range(0.0..0.5);
        let gamma = rng.gen_range(0.0..2.0);
        let k = rng.gen_range(0..=d);
        let level = rng.gen_range(-1.0..1.0);
        let low = |s: Mask| g.get(s.complement()) + lambda * s.len() as f64;
        let reg = |s: Mask| g.get(s) - lambda * s.len() as f64;
        let part = |s: Mask| g.get(s) - gamma * g.get(s.complement()) - lambda * s.len() as f64;
        let size = |s: Mask| s.len() as f64;
        let fixed = |s: Mask| g.get(s);
        let cases: [(Result<_>, ExcessProblem, &dyn Fn(Mask) -> f64); 5] = [
            (select_low_value(&g, lambda), ExcessProblem::LowValue { lambda }, &low),
            (select_min_size(&g, level), ExcessProblem::MinSize { t: level }, &size),
            (select_fixed_size(&g, k), ExcessProblem::FixedSize { k }, &fixed),
            (select_regularized(&g, lambda), ExcessProblem::Regularized { lambda }, &reg),
            (select_partition(&g, gamma, lambda), ExcessProblem::Partition { gamma, lambda }, &part),
        ];
        for (direct, problem, objective) in cases {
            match (direct, selection_via_excess(&g, problem)) {
                (Ok(a), Ok(b)) => {
                    t.record((objective(a.subset) - objective(b.subset)).abs());
                    t.record(if a.subset == b.subset { 0.0 } else { f64::INFINITY });
                }
                (Err(Error::Infeasible), Err(Error::Infeasible)) => t.record(0.0),
                _ => t.record(f64::INFINITY),
            }
        }
    }
    Ok(())
}

fn removal_equivalence_suite(t: &mut Tracker) -> Result<()> {
    let px = [vec![0.2, 0.5, 0.3], vec![0.6, 0.4], vec![0.1, 0.3, 0.6]];
    let joint = DiscreteJoint::from_fn(vec![3, 2, 3], 1, |x, _| px[0][x[0]] * px[1][x[1]] * px[2][x[2]])?;
    let model: Arc<dyn Predictor> = Arc::new(LinearModel::new(vec![1.5, -2.0, 0.75], 0.25));
    let bg = joint.feature_dataset();
    let mean: Vec<f64> = px
        .iter()
        .map(|p| p.iter().enumerate().map(|(v, q)| v as f64 * q).sum())
        .collect();
    let exact = Sampling::Exact { support_cap: 1000 };
    let fs: Vec<Arc<dyn SubsetFunction>> = vec![
        RemovalStrategy::Default { reference: mean }.build(model.clone(), 0)?,
        RemovalStrategy::MarginalJoint {
            background: bg.clone(),
            sampling: exact,
        }
        .build(model.clone(), 0)?,
        RemovalStrategy::ProductOfMarginals {
            background: bg,
            sampling: exact,
        }
        .build(model.clone(), 0)?,
        RemovalStrategy::ConditionalExact { joint: joint.clone() }.build(model, 0)?,
    ];
    for c in 0..joint.n_feature_cells() {
        let x: Vec<f64> = joint.feature_cell(c).into_iter().map(|v| v as f64).collect();
        for s in 0..8 {
            let s = Mask::from_bits(s, 3)?;
            let reference = fs[0].evaluate(&x, s)?;
            for f in &fs[1..] {
                t.vectors(&f.evaluate(&x, s)?, &reference);
            }
        }
    }
    Ok(())
}

/// Runs one suite by name.
pub fn run_suite(name: &str, options: SelftestOptions) -> Result<SuiteOutcome> {
    let (run, tolerance): (fn(&mut Tracker) -> Result<()>, f64) = match name {
        "kernel" => (kernel_suite, 1e-8),
        "axioms" => (axioms_suite, 1e-10),
        "consistency" => (consistency_suite, 1e-10),
        "information" => (information_suite, 1e-6),
        "excess" => (excess_suite, 1e-9),
        "removal-equivalence" => (removal_equivalence_suite, 1e-10),
        other => return Err(Error::Config(format!("unknown suite {other:?}"))),
    };
    let tolerance = if options.inject_tolerance_failure { -1.0 } else { tolerance };
    let start = Instant::now();
    let mut tracker = Tracker::new();
    run(&mut tracker)?;
    Ok(SuiteOutcome {
        name: name.to_string(),
        checks: tracker.checks,
        max_error: tracker.max_error,
        tolerance,
        passed: tracker.max_error <= tolerance,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Runs the named suites, or every suite when `names` is `None`.
pub fn run_selftest(names: Option<&[String]>, options: SelftestOptions) -> Result<Vec<SuiteOutcome>> {
    let selected: Vec<String> = match names {
        Some(n) => n.to_vec(),
        None => SUITES.iter().map(|s| s.to_string()).collect(),
    };
    if selected.is_empty() {
        return Err(Error::Config("no suites selected".into()));
    }
    selected.iter().map(|n| run_suite(n, options)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for outcome in run_selftest(None, SelftestOptions::default()).unwrap() {
            assert!(outcome.passed, "{outcome:?}");
            assert!(outcome.checks > 0);
        }
    }

    #[test]
    fn injected_failure_and_selection_errors() {
        let opts = SelftestOptions {
            inject_tolerance_failure: true,
        };
        assert!(!run_suite("excess", opts).unwrap().passed);
        assert!(matches!(run_selftest(Some(&[]), opts), Err(Error::Config(_))));
        assert!(matches!(run_suite("nope", opts), Err(Error::Config(_))));
    }
}
