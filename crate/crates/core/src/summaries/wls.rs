use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AttributionResult;
use crate::error::{Error, Result};
use crate::game::{tabulate, CooperativeGame, Mask, TabulatedGame};
use crate::numeric::{binomial, ln_binomial, solve_dense, CompensatedSum};

/// Coordinate descent stops once no coefficient moves by more than this in a sweep.
pub const L1_TOLERANCE: f64 = 1e-10;
pub const L1_MAX_SWEEPS: usize = 100_000;

/// Weighting `π(S)` over coalitions for the additive-model fit. Infinite
/// weights on `∅` or `D` are enforced as equality constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightingKernel {
    /// `π(S) = (d−1) / (C(d,|S|) |S| (d−|S|))`, infinite at `∅` and `D`.
    Shapley,
    /// `π ≡ 1`.
    Banzhaf,
    /// `π(S) = 𝟙(|S| ≤ 1)`.
    IncludeIndividual,
    /// `π(S) = 𝟙(|S| ≥ d − 1)`.
    RemoveIndividual,
    /// One weight per coalition size `0..=d`.
    BySize {
        weights: Vec<f64>,
        #[serde(default)]
        infinite_at_empty: bool,
        #[serde(default)]
        infinite_at_full: bool,
    },
    /// One weight per coalition, indexed by mask integer.
    PerSubset {
        weights: Vec<f64>,
        #[serde(default)]
        infinite_at_empty: bool,
        #[serde(default)]
        infinite_at_full: bool,
    },
}

impl WeightingKernel {
    pub fn name(&self) -> &'static str {
        match self {
            WeightingKernel::Shapley => "shapley",
            WeightingKernel::Banzhaf => "banzhaf",
            WeightingKernel::IncludeIndividual => "include_individual",
            WeightingKernel::RemoveIndividual => "remove_individual",
            WeightingKernel::BySize { .. } => "by_size",
            WeightingKernel::PerSubset { .. } => "per_subset",
        }
    }

    /// `(infinite_at_empty, infinite_at_full)`.
    pub fn infinite_flags(&self) -> (bool, bool) {
        match self {
            WeightingKernel::Shapley => (true, true),
            WeightingKernel::BySize {
                infinite_at_empty,
                infinite_at_full,
                ..
            }
            | WeightingKernel::PerSubset {
                infinite_at_empty,
                infinite_at_full,
                ..
            } => (*infinite_at_empty, *infinite_at_full),
            _ => (false, false),
        }
    }

    /// Finite weight of a coalition of size `s`, for kernels that depend on
    /// size only; constrained endpoints get weight 0.
    pub fn size_weight(&self, d: usize, s: usize) -> Option<f64> {
        let (inf_empty, inf_full) = self.infinite_flags();
        if (s == 0 && inf_empty) || (s == d && inf_full) {
            return Some(0.0);
        }
        Some(match self {
            WeightingKernel::Shapley => {
                let ln = ((d - 1) as f64).ln() - ln_binomial(d, s) - (s as f64).ln() - ((d - s) as f64).ln();
                ln.exp()
            }
            WeightingKernel::Banzhaf => 1.0,
            WeightingKernel::IncludeIndividual => f64::from(u8::from(s <= 1)),
            WeightingKernel::RemoveIndividual => f64::from(u8::from(s + 1 >= d)),
            WeightingKernel::BySize { weights, .. } => weights[s],
            WeightingKernel::PerSubset { .. } => return None,
        })
    }

    fn validate(&self, d: usize) -> Result<()> {
        let weights = match self {
            WeightingKernel::BySize { weights, .. } => {
                if weights.len() != d + 1 {
                    return Err(Error::DimensionMismatch {
                        expected: d + 1,
                        actual: weights.len(),
                    });
                }
                weights
            }
            WeightingKernel::PerSubset { weights, .. } => {
                if weights.len() != 1usize << d {
                    return Err(Error::DimensionMismatch {
                        expected: 1 << d,
                        actual: weights.len(),
                    });
                }
                weights
            }
            _ => return Ok(()),
        };
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("kernel weights must be finite and non-negative"));
        }
        Ok(())
    }

    fn weight(&self, s: Mask) -> f64 {
        match self {
            WeightingKernel::PerSubset { weights, .. } => {
                let (inf_empty, inf_full) = self.infinite_flags();
                if (s.is_empty() && inf_empty) || (s.is_full() && inf_full) {
                    0.0
                } else {
                    weights[s.index()]
                }
            }
            _ => self.size_weight(s.dim(), s.len()).expect("size kernel"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Regularizer {
    #[default]
    None,
    L2 { lambda: f64 },
    L1 { lambda: f64 },
}

impl Regularizer {
    fn validate(&self) -> Result<()> {
        match self {
            Regularizer::L2 { lambda } | Regularizer::L1 { lambda } if !(*lambda >= 0.0 && lambda.is_finite()) => {
                Err(Error::invalid("regularization strength must be finite and non-negative"))
            }
            _ => Ok(()),
        }
    }
}

/// `argmin_b Σ_S π(S) (b₀ + Σ_{i∈S} b_i − u(S))² + Ω(b)` over every coalition.
pub fn wls_fit<G: CooperativeGame + ?Sized>(
    game: &G,
    kernel: &WeightingKernel,
    reg: Regularizer,
) -> Result<AttributionResult> {
    wls_fit_table(&tabulate(game)?, kernel, reg)
}

pub fn wls_fit_table(table: &TabulatedGame, kernel: &WeightingKernel, reg: Regularizer) -> Result<AttributionResult> {
    let d = table.players();
    kernel.validate(d)?;
    reg.validate()?;
    let p = d + 1;
    let u = table.values();
    let mut a = vec![0.0; p * p];
    if let Some(ws) = (0..=d).map(|s| kernel.size_weight(d, s)).collect::<Option<Vec<f64>>>() {
        // symmetric kernels: the moments depend on sizes only
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (s, w) in ws.iter().enumerate() {
            m0 += binomial(d, s) * w;
            if s >= 1 {
                m1 += binomial(d - 1, s - 1) * w;
            }
            if s >= 2 {
                m2 += binomial(d - 2, s - 2) * w;
            }
        }
        a[0] = m0;
        for i in 1..p {
            a[i] = m1;
            a[i * p] = m1;
            for j in 1..p {
                a[i * p + j] = if i == j { m1 } else { m2 };
            }
        }
    } else {
        for bits in 0..u.len() {
            let s = Mask::from_bits(bits as u64, d).expect("in range");
            let w = kernel.weight(s);
            if w == 0.0 {
                continue;
            }
            a[0] += w;
            for i in s.iter() {
                a[i + 1] += w;
                a[(i + 1) * p] += w;
                for j in s.iter() {
                    a[(i + 1) * p + j + 1] += w;
                }
            }
        }
    }
    let weights: Vec<f64> = (0..u.len())
        .map(|bits| kernel.weight(Mask::from_bits(bits as u64, d).expect("in range")))
        .collect();
    let c: Vec<f64> = (0..p)
        .into_par_iter()
        .map(|k| {
            let mut acc = CompensatedSum::new();
            for (bits, (&w, &v)) in weights.iter().zip(u).enumerate() {
                if w != 0.0 && (k == 0 || bits & (1 << (k - 1)) != 0) {
                    acc.add(w * v);
                }
            }
            acc.value()
        })
        .collect();
    let (inf_empty, inf_full) = kernel.infinite_flags();
    let problem = Problem {
        d,
        a,
        c,
        fixed_intercept: inf_empty.then(|| u[0]),
        total: inf_full.then(|| u[u.len() - 1]),
    };
    let theta = problem.solve(reg)?;
    Ok(AttributionResult {
        method: format!("wls_{}", kernel.name()),
        values: theta[1..].to_vec(),
        intercept: Some(theta[0]),
        n_evaluations: u.len() as u64,
    })
}

/// A WLS fit over an explicit list of `(coalition, value, weight)`
/// observations, with optional equality constraints `b₀ = u(∅)` and
/// `b₀ + Σ b_i = u(D)`.
pub(crate) fn wls_fit_observations(
    d: usize,
    observations: &[(Mask, f64, f64)],
    u_empty: Option<f64>,
    u_full: Option<f64>,
    reg: Regularizer,
) -> Result<Vec<f64>> {
    reg.validate()?;
    let p = d + 1;
    let mut a = vec![0.0; p * p];
    let mut c = vec![0.0; p];
    for (s, v, w) in observations {
        a[0] += w;
        c[0] += w * v;
        for i in s.iter() {
            a[i + 1] += w;
            a[(i + 1) * p] += w;
            c[i + 1] += w * v;
            for j in s.iter() {
                a[(i + 1) * p + j + 1] += w;
            }
        }
    }
    Problem {
        d,
        a,
        c,
        fixed_intercept: u_empty,
        total: u_full,
    }
    .solve(reg)
}

/// The quadratic `θᵀAθ − 2cᵀθ` over `θ = (b₀, b₁, …, b_d)` with optional
/// constraints.
struct Problem {
    d: usize,
    a: Vec<f64>,
    c: Vec<f64>,
    fixed_intercept: Option<f64>,
    total: Option<f64>,
}

impl Problem {
    fn solve(&self, reg: Regularizer) -> Result<Vec<f64>> {
        match reg {
            Regularizer::None => self.solve_ridge(0.0),
            Regularizer::L2 { lambda } => self.solve_ridge(lambda),
            Regularizer::L1 { lambda } => {
                let start = self.solve_ridge(0.0)?;
                if lambda == 0.0 {
                    Ok(start)
                } else {
                    self.coordinate_descent(start, lambda)
                }
            }
        }
    }

    /// Solves the KKT system of the equality-constrained ridge problem.
    fn solve_ridge(&self, lambda: f64) -> Result<Vec<f64>> {
        let p = self.d + 1;
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        if let Some(v) = self.fixed_intercept {
            let mut g = vec![0.0; p];
            g[0] = 1.0;
            rows.push((g, v));
        }
        if let Some(v) = self.total {
            rows.push((vec![1.0; p], v));
        }
        let n = p + rows.len();
        let mut m = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        for i in 0..p {
            for j in 0..p {
                m[i * n + j] = self.a[i * p + j];
            }
            if i > 0 {
                m[i * n + i] += lambda;
            }
            rhs[i] = self.c[i];
        }
        for (k, (g, v)) in rows.iter().enumerate() {
            for j in 0..p {
                m[(p + k) * n + j] = g[j];
                m[j * n + p + k] = g[j];
            }
            rhs[p + k] = *v;
        }
        let sol = solve_dense(&m, &rhs)?;
        Ok(sol[..p].to_vec())
    }

    /// Cyclic coordinate descent for `L + λ‖b‖₁`, moving pairs of
    /// coefficients in opposite directions when their sum is constrained.
    fn coordinate_descent(&self, mut theta: Vec<f64>, lambda: f64) -> Result<Vec<f64>> {
        let p = self.d + 1;
        let a = &self.a;
        let penalty = |k: usize| if k == 0 { 0.0 } else { lambda };
        let free: Vec<usize> = (0..p).filter(|&k| k > 0 || self.fixed_intercept.is_none()).collect();
        let mut r: Vec<f64> = (0..p).map(|i| (0..p).map(|j| a[i * p + j] * theta[j]).sum()).collect();
        for _ in 0..L1_MAX_SWEEPS {
            let mut max_step = 0.0f64;
            if self.total.is_none() {
                for &k in &free {
                    let akk = a[k * p + k];
                    if akk <= 0.0 {
                        return Err(Error::SingularSystem);
                    }
                    let b = self.c[k] - (r[k] - akk * theta[k]);
                    let target = soft_threshold(b, penalty(k) / 2.0) / akk;
                    let step = target - theta[k];
                    if step != 0.0 {
                        theta[k] = target;
                        for i in 0..p {
                            r[i] += step * a[i * p + k];
                        }
                        max_step = max_step.max(step.abs());
                    }
                }
            } else {
                for (x, &i) in free.iter().enumerate() {
                    for &j in &free[x + 1..] {
                        let curv = a[i * p + i] + a[j * p + j] - 2.0 * a[i * p + j];
                        if curv <= 0.0 {
                            return Err(Error::SingularSystem);
                        }
                        let g = (r[i] - self.c[i]) - (r[j] - self.c[j]);
                        let (li, lj) = (penalty(i), penalty(j));
                        let f = |t: f64| curv * t * t + 2.0 * g * t + li * (theta[i] + t).abs() + lj * (theta[j] - t).abs();
                        let mut best = (f(0.0), 0.0);
                        let mut candidates = vec![-theta[i], theta[j]];
                        for si in [-1.0, 1.0] {
                            for sj in [-1.0, 1.0] {
                                candidates.push(-(2.0 * g + li * si - lj * sj) / (2.0 * curv));
                            }
                        }
                        for t in candidates {
                            let v = f(t);
                            if v < best.0 {
                                best = (v, t);
                            }
                        }
                        let t = best.1;
                        if t != 0.0 {
                            theta[i] += t;
                            theta[j] -= t;
                            for k in 0..p {
                                r[k] += t * (a[k * p + i] - a[k * p + j]);
                            }
                            max_step = max_step.max(t.abs());
                        }
                    }
                }
            }
            if max_step <= L1_TOLERANCE {
                return Ok(theta);
            }
        }
        Err(Error::NonConvergence { sweeps: L1_MAX_SWEEPS })
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::summaries::tests::{g1, g2};
    use crate::summaries::{banzhaf_table, include_individual, remove_individual, shapley_table};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_game(d: usize, rng: &mut ChaCha8Rng) -> TabulatedGame {
        TabulatedGame::new(d, (0..1 << d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn banzhaf_kernel_on_g1() {
        let r = wls_fit(&g1(), &WeightingKernel::Banzhaf, Regularizer::None).unwrap();
        assert!((r.intercept.unwrap() + 0.25).abs() < 1e-12);
        assert!((r.values[0] - 1.5).abs() < 1e-12 && (r.values[1] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn shapley_kernel_on_g1_and_g2() {
        let r = wls_fit(&g1(), &WeightingKernel::Shapley, Regularizer::None).unwrap();
        assert!(r.intercept.unwrap().abs() < 1e-12);
        assert!((r.values[0] - 1.5).abs() < 1e-10 && (r.values[1] - 2.5).abs() < 1e-10);
        let r = wls_fit(&g2(), &WeightingKernel::Shapley, Regularizer::None).unwrap();
        for (a, b) in r.values.iter().zip(shapley_table(&g2())) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn include_kernel_on_g1() {
        let r = wls_fit(&g1(), &WeightingKernel::IncludeIndividual, Regularizer::None).unwrap();
        assert!(r.intercept.unwrap().abs() < 1e-12);
        assert!((r.values[0] - 1.0).abs() < 1e-12 && (r.values[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_theorems_on_random_games() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in 2..=7 {
            let t = random_game(d, &mut rng);
            let check = |kernel: WeightingKernel, expected: Vec<f64>| {
                let r = wls_fit_table(&t, &kernel, Regularizer::None).unwrap();
                for (a, b) in r.values.iter().zip(&expected) {
                    assert!((a - b).abs() < 1e-8, "{kernel:?} d={d}");
                }
            };
            check(WeightingKernel::Shapley, shapley_table(&t));
            check(WeightingKernel::Banzhaf, banzhaf_table(&t));
            check(WeightingKernel::IncludeIndividual, include_individual(&t).unwrap().values);
            check(WeightingKernel::RemoveIndividual, remove_individual(&t).unwrap().values);
        }
    }

    #[test]
    fn per_subset_matches_by_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_game(4, &mut rng);
        let sizes: Vec<f64> = (0..=4).map(|s| 1.0 + s as f64).collect();
        let per: Vec<f64> = (0..16u32).map(|b| sizes[b.count_ones() as usize]).collect();
        let a = wls_fit_table(
            &t,
            &WeightingKernel::BySize {
                weights: sizes,
                infinite_at_empty: true,
                infinite_at_full: false,
            },
            Regularizer::None,
        )
        .unwrap();
        let b = wls_fit_table(
            &t,
            &WeightingKernel::PerSubset {
                weights: per,
                infinite_at_empty: true,
                infinite_at_full: false,
            },
            Regularizer::None,
        )
        .unwrap();
        assert!((a.intercept.unwrap() - t.values()[0]).abs() < 1e-12);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn l2_shrinks_toward_zero() {
        let r0 = wls_fit(&g1(), &WeightingKernel::Banzhaf, Regularizer::None).unwrap();
        let r1 = wls_fit(&g1(), &WeightingKernel::Banzhaf, Regularizer::L2 { lambda: 1.0 }).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        assert!(norm(&r1.values) < norm(&r0.values));
    }

    #[test]
    fn l1_zero_lambda_matches_unregularized() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = random_game(5, &mut rng);
        for kernel in [WeightingKernel::Banzhaf, WeightingKernel::Shapley] {
            let a = wls_fit_table(&t, &kernel, Regularizer::None).unwrap();
            let b = wls_fit_table(&t, &kernel, Regularizer::L1 { lambda: 0.0 }).unwrap();
            assert_eq!(a, b);
        }
    }

    /// Subgradient optimality of the L1 solution, with multiplier `nu` on the
    /// sum constraint when present.
    fn l1_kkt(t: &TabulatedGame, kernel: &WeightingKernel, lambda: f64, r: &AttributionResult) -> f64 {
        let d = t.players();
        let mut theta = vec![r.intercept.unwrap()];
        theta.extend(&r.values);
        // gradient of the smooth part by direct enumeration
        let mut grad = vec![0.0; d + 1];
        for bits in 0..1u64 << d {
            let s = Mask::from_bits(bits, d).unwrap();
            let w = kernel.weight(s);
            let resid = theta[0] + s.iter().map(|i| theta[i + 1]).sum::<f64>() - t.get(s);
            grad[0] += 2.0 * w * resid;
            for i in s.iter() {
                grad[i + 1] += 2.0 * w * resid;
            }
        }
        let (inf_empty, inf_full) = kernel.infinite_flags();
        let free: Vec<usize> = (0..=d).filter(|&k| k > 0 || !inf_empty).collect();
        // violation of 0 ∈ grad_k + λ∂|θ_k| + ν for the best ν
        let violation = |nu: f64| {
            free.iter()
                .map(|&k| {
                    let g = grad[k] + nu;
                    let l = if k == 0 { 0.0 } else { lambda };
                    if k > 0 && theta[k].abs() < 1e-9 {
                        (g.abs() - l).max(0.0)
                    } else {
                        (g + l * theta[k].signum()).abs()
                    }
                })
                .fold(0.0, f64::max)
        };
        if !inf_full {
            return violation(0.0);
        }
        let mut best = f64::INFINITY;
        for &k in &free {
            let l = if k == 0 { 0.0 } else { lambda };
            for cand in [-grad[k] - l, -grad[k] + l, -grad[k]] {
                best = best.min(violation(cand));
            }
        }
        best
    }

    #[test]
    fn l1_solutions_satisfy_optimality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [3, 5] {
            let t = random_game(d, &mut rng);
            for kernel in [WeightingKernel::Banzhaf, WeightingKernel::Shapley] {
                for lambda in [0.01, 0.1, 1.0] {
                    let r = wls_fit_table(&t, &kernel, Regularizer::L1 { lambda }).unwrap();
                    let v = l1_kkt(&t, &kernel, lambda, &r);
                    assert!(v < 1e-6, "{kernel:?} λ={lambda}: {v}");
                }
            }
        }
    }

    #[test]
    fn l1_large_lambda_zeroes_everything() {
        let r = wls_fit(&g2(), &WeightingKernel::Banzhaf, Regularizer::L1 { lambda: 100.0 }).unwrap();
        assert!(r.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singular_design() {
        let kernel = WeightingKernel::BySize {
            weights: vec![1.0, 0.0, 0.0],
            infinite_at_empty: false,
            infinite_at_full: false,
        };
        assert!(matches!(
            wls_fit(&g1(), &kernel, Regularizer::None),
            Err(Error::SingularSystem)
        ));
    }

    #[test]
    fn shapley_kernel_weights_are_finite_near_cap() {
        for s in 1..24 {
            let w = WeightingKernel::Shapley.size_weight(24, s).unwrap();
            assert!(w.is_finite() && w > 0.0);
        }
    }
}
