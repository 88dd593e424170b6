//! Value iteration over the DP update, with residual-based stopping,
//! policy extraction, an independent expectimax oracle, and seeded
//! Monte-Carlo policy rollouts.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dpupdate::{dp_update_with, UpdateOptions, UpdateStats, UpdateVariant};
use crate::error::{Error, Result};
use crate::model::{belief_update, Belief, PomdpModel};
use crate::pwlc::{evaluate, AlphaVector, VectorSet};

/// Seed used by [`residual_estimate`] for its sampled beliefs when the
/// state space is too large for a grid.
pub const RESIDUAL_SAMPLE_SEED: u64 = 0;

const RESIDUAL_SAMPLE_COUNT: usize = 1000;

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub variant: UpdateVariant,
    pub max_stages: usize,
    /// Stop once the estimated residual drops to this value. Requires a
    /// discount strictly below 1.
    pub residual_target: Option<f64>,
    /// Seed for any sampling (residual beliefs on large state spaces).
    pub seed: u64,
    /// Resolution of the uniform simplex grid used for residual
    /// estimation when the state space has at most 3 states.
    pub grid_resolution: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            variant: UpdateVariant::ip(),
            max_stages: 100,
            residual_target: None,
            seed: 0,
            grid_resolution: 100,
        }
    }
}

/// A solved value function with its per-stage instrumentation.
#[derive(Debug, Clone)]
pub struct Solution {
    /// Minimal set; every vector carries the action that generated it.
    pub value_function: VectorSet,
    pub stages_run: usize,
    pub stage_stats: Vec<UpdateStats>,
    /// Estimated sup-norm change per stage (a lower bound on the true
    /// distance; see [`residual_estimate`]).
    pub residuals: Vec<f64>,
}

/// Runs value iteration from the zero vector, so the stage-`t` set is the
/// exact `t`-step value function.
pub fn value_iterate(model: &PomdpModel, config: &SolveConfig) -> Result<Solution> {
    value_iterate_with(model, config, &UpdateOptions::default())
}

/// As [`value_iterate`], with execution options for the per-stage updates.
pub fn value_iterate_with(
    model: &PomdpModel,
    config: &SolveConfig,
    options: &UpdateOptions,
) -> Result<Solution> {
    assert!(config.max_stages >= 1, "max_stages must be at least 1");
    if config.residual_target.is_some() && model.discount() >= 1.0 {
        return Err(Error::NonConvergent {
            discount: model.discount(),
        });
    }
    let ns = model.num_states();
    let base_points = residual_points(ns, config.grid_resolution, config.seed);

    let mut current = VectorSet::new(vec![AlphaVector::zero(ns)]);
    let mut stage_stats = Vec::new();
    let mut residuals = Vec::new();
    let mut stages_run = 0;

    for _ in 0..config.max_stages {
        let (next, stats) = dp_update_with(model, &current, &config.variant, options)?;
        // Witnesses from this update join the fixed evaluation points;
        // they sit exactly where the function changed shape.
        let mut points = base_points.clone();
        points.extend(stats.witnesses.iter().cloned());
        let residual = residual_over(&points, &current, &next);
        residuals.push(residual);
        stage_stats.push(stats);
        current = next;
        stages_run += 1;
        if let Some(target) = config.residual_target {
            if residual <= target {
                break;
            }
        }
    }

    Ok(Solution {
        value_function: current,
        stages_run,
        stage_stats,
        residuals,
    })
}

/// All beliefs `(k_1/r, ..., k_n/r)` with non-negative integers summing to
/// `r`. Point counts grow combinatorially with dimension; intended for
/// `dim <= 3`.
pub fn simplex_grid(dim: usize, resolution: usize) -> Vec<Belief> {
    fn rec(dim: usize, remaining: usize, resolution: usize, prefix: &mut Vec<f64>, out: &mut Vec<Belief>) {
        if dim == 1 {
            prefix.push(remaining as f64 / resolution as f64);
            out.push(Belief::new(prefix.clone()).expect("grid point is on the simplex"));
            prefix.pop();
            return;
        }
        for k in 0..=remaining {
            prefix.push(k as f64 / resolution as f64);
            rec(dim - 1, remaining - k, resolution, prefix, out);
            prefix.pop();
        }
    }
    assert!(dim >= 1 && resolution >= 1);
    let mut out = Vec::new();
    rec(dim, resolution, resolution, &mut Vec::with_capacity(dim), &mut out);
    out
}

/// Draws beliefs uniformly from the simplex (normalized exponentials).
pub fn random_beliefs(dim: usize, count: usize, seed: u64) -> Vec<Belief> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut v: Vec<f64> = (0..dim)
                .map(|_| -(rng.gen_range(f64::MIN_POSITIVE..1.0)).ln())
                .collect();
            let sum: f64 = v.iter().sum();
            v.iter_mut().for_each(|p| *p /= sum);
            Belief::new(v).expect("normalized draw is on the simplex")
        })
        .collect()
}

fn residual_points(dim: usize, grid_resolution: usize, seed: u64) -> Vec<Belief> {
    let mut points: Vec<Belief> = (0..dim).map(|s| Belief::corner(s, dim)).collect();
    if dim <= 3 {
        points.extend(simplex_grid(dim, grid_resolution));
    } else {
        points.extend(random_beliefs(dim, RESIDUAL_SAMPLE_COUNT, seed));
    }
    points
}

/// Maximum absolute value change over the given evaluation points.
pub fn residual_over(points: &[Belief], v_old: &VectorSet, v_new: &VectorSet) -> f64 {
    let mut worst: f64 = 0.0;
    for x in points {
        let (old, _) = evaluate(v_old, x).expect("residual inputs are non-empty");
        let (new, _) = evaluate(v_new, x).expect("residual inputs are non-empty");
        worst = worst.max((new - old).abs());
    }
    worst
}

/// Estimates the sup-norm distance between two value functions over all
/// simplex corners plus a uniform grid of the given resolution (state
/// spaces of at most 3 states) or 1000 beliefs drawn with
/// [`RESIDUAL_SAMPLE_SEED`] (larger spaces).
///
/// This is a lower bound on the true sup-norm distance; stage caps remain
/// the primary stopping rule.
pub fn residual_estimate(v_old: &VectorSet, v_new: &VectorSet, grid_resolution: usize) -> f64 {
    assert!(!v_old.is_empty() && !v_new.is_empty());
    let dim = v_old.dim().unwrap();
    let points = residual_points(dim, grid_resolution, RESIDUAL_SAMPLE_SEED);
    residual_over(&points, v_old, v_new)
}

/// The greedy action at `x`: the tag of the winning vector.
pub fn policy_action(solution: &Solution, x: &Belief) -> usize {
    let (_, winner) =
        evaluate(&solution.value_function, x).expect("policy over an empty value function");
    winner
        .action
        .expect("value function vectors carry action tags")
}

/// Exact `t`-stage optimal value at `x` by direct expectimax recursion over
/// the belief dynamics, starting from the zero value function.
///
/// This shares no code with the vector pipeline and costs
/// `O((|A| |Z|)^t)`; keep `t` small.
pub fn oracle_value(model: &PomdpModel, x: &Belief, horizon: usize) -> f64 {
    if horizon == 0 {
        return 0.0;
    }
    let ns = model.num_states();
    let nz = model.num_observations();
    let gamma = model.discount();
    let mut best = f64::NEG_INFINITY;
    for a in 0..model.num_actions() {
        let mut value: f64 = (0..ns).map(|s| model.reward(a, s) * x.probs()[s]).sum();
        if gamma > 0.0 && horizon > 1 {
            for z in 0..nz {
                let mut posterior = vec![0.0; ns];
                let mut pz = 0.0;
                for s2 in 0..ns {
                    let mut reach = 0.0;
                    for s in 0..ns {
                        reach += model.transition(a, s, s2) * x.probs()[s];
                    }
                    let w = model.observation(a, s2, z) * reach;
                    posterior[s2] = w;
                    pz += w;
                }
                if pz <= 0.0 {
                    continue;
                }
                posterior.iter_mut().for_each(|p| *p /= pz);
                let next = Belief::new(posterior).expect("posterior is on the simplex");
                value += gamma * pz * oracle_value(model, &next, horizon - 1);
            }
        }
        best = best.max(value);
    }
    best
}

fn sample_index(weights: impl Iterator<Item = f64>, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        cum += w;
        last = i;
        if u < cum {
            return i;
        }
    }
    last
}

/// Seeded Monte-Carlo rollouts of the greedy policy: sample a start state
/// from `x0`, track the exact belief alongside the hidden state, accrue
/// discounted rewards. Returns the sample mean and standard error.
///
/// Randomness comes from one ChaCha8 generator per trial (stream = trial
/// index), so results are deterministic for a fixed seed and independent
/// of any execution interleaving.
pub fn simulate(
    model: &PomdpModel,
    solution: &Solution,
    x0: &Belief,
    trials: usize,
    horizon: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    assert!(trials > 0, "at least one trial required");
    let gamma = model.discount();
    let mut returns = Vec::with_capacity(trials);
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let mut state = sample_index(x0.probs().iter().copied(), &mut rng);
        let mut belief = x0.clone();
        let mut discount = 1.0;
        let mut total = 0.0;
        for _ in 0..horizon {
            let a = policy_action(solution, &belief);
            total += discount * model.reward(a, state);
            discount *= gamma;
            let ns = model.num_states();
            let next_state =
                sample_index((0..ns).map(|s2| model.transition(a, state, s2)), &mut rng);
            let z = sample_index(
                (0..model.num_observations()).map(|z| model.observation(a, next_state, z)),
                &mut rng,
            );
            belief = belief_update(model, &belief, a, z)?;
            state = next_state;
        }
        returns.push(total);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let stderr = if returns.len() > 1 {
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok((mean, stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_pomdp, random_pomdp};
    use crate::pwlc::write_alpha_file;

    const TINY: &str = include_str!("../problems/tiny.pomdp");

    fn tiny() -> PomdpModel {
        parse_pomdp(TINY).unwrap()
    }

    fn solve_tiny(stages: usize) -> Solution {
        let config = SolveConfig {
            max_stages: stages,
            ..Default::default()
        };
        value_iterate(&tiny(), &config).unwrap()
    }

    #[test]
    fn one_stage_on_tiny() {
        let solution = solve_tiny(1);
        assert_eq!(solution.stages_run, 1);
        assert_eq!(solution.value_function.len(), 1);
        assert_eq!(solution.value_function.vectors()[0].coeffs, vec![1.0, 0.0]);
    }

    #[test]
    fn zero_discount_reaches_a_fixed_point_after_one_stage() {
        let m = random_pomdp(3, 2, 2, 0.0, 42);
        let config = SolveConfig {
            max_stages: 4,
            ..Default::default()
        };
        let solution = value_iterate(&m, &config).unwrap();
        assert!((solution.residuals[1]).abs() < 1e-12);
        assert!((solution.residuals[3]).abs() < 1e-12);
    }

    #[test]
    fn residuals_contract_geometrically_on_tiny() {
        let solution = solve_tiny(20);
        for t in 1..solution.residuals.len() {
            assert!(
                solution.residuals[t] <= 0.9 * solution.residuals[t - 1] + 1e-9,
                "stage {t}: {} vs {}",
                solution.residuals[t],
                solution.residuals[t - 1]
            );
        }
    }

    #[test]
    fn residual_target_stops_early() {
        let config = SolveConfig {
            max_stages: 500,
            residual_target: Some(1e-3),
            ..Default::default()
        };
        let solution = value_iterate(&tiny(), &config).unwrap();
        assert!(solution.stages_run < 500);
        assert!(*solution.residuals.last().unwrap() <= 1e-3);
    }

    #[test]
    fn residual_target_requires_discounting() {
        let m = random_pomdp(2, 2, 2, 1.0, 1);
        let config = SolveConfig {
            residual_target: Some(1e-6),
            ..Default::default()
        };
        assert!(matches!(
            value_iterate(&m, &config),
            Err(Error::NonConvergent { .. })
        ));
    }

    #[test]
    fn residual_estimate_examples() {
        let v = VectorSet::new(vec![AlphaVector::new(vec![0.3, 0.7])]);
        assert_eq!(residual_estimate(&v, &v, 100), 0.0);

        let zero = VectorSet::new(vec![AlphaVector::zero(2)]);
        let one = VectorSet::new(vec![AlphaVector::new(vec![1.0, 0.0])]);
        assert_eq!(residual_estimate(&zero, &one, 10), 1.0);
    }

    #[test]
    fn residual_estimate_matches_a_dense_grid_at_equal_resolution() {
        let a = VectorSet::new(vec![
            AlphaVector::new(vec![1.0, 0.0]),
            AlphaVector::new(vec![0.0, 1.0]),
        ]);
        let b = VectorSet::new(vec![
            AlphaVector::new(vec![0.8, 0.3]),
            AlphaVector::new(vec![0.1, 1.2]),
        ]);
        let dense: f64 = simplex_grid(2, 10_000)
            .iter()
            .map(|x| {
                let (va, _) = evaluate(&a, x).unwrap();
                let (vb, _) = evaluate(&b, x).unwrap();
                (va - vb).abs()
            })
            .fold(0.0, f64::max);
        let est = residual_estimate(&a, &b, 10_000);
        assert!(est <= dense + 1e-12);
        assert!((est - dense).abs() < 1e-9);
    }

    #[test]
    fn policy_on_tiny_prefers_the_paying_action() {
        let solution = solve_tiny(1);
        let a = policy_action(&solution, &Belief::new(vec![0.5, 0.5]).unwrap());
        assert_eq!(a, 0);
    }

    #[test]
    fn policy_at_corners_follows_the_lexicographic_winner() {
        let solution = solve_tiny(3);
        for s in 0..2 {
            let x = Belief::corner(s, 2);
            let (_, winner) = evaluate(&solution.value_function, &x).unwrap();
            assert_eq!(policy_action(&solution, &x), winner.action.unwrap());
        }
    }

    #[test]
    fn policy_is_invariant_to_constant_shifts() {
        let solution = solve_tiny(4);
        let shift = 2.5;
        let shifted = Solution {
            value_function: VectorSet::new(
                solution
                    .value_function
                    .iter()
                    .map(|v| AlphaVector {
                        coeffs: v.coeffs.iter().map(|c| c + shift).collect(),
                        action: v.action,
                        parents: v.parents.clone(),
                    })
                    .collect(),
            ),
            ..solution.clone()
        };
        for x in simplex_grid(2, 20) {
            let (orig, _) = evaluate(&solution.value_function, &x).unwrap();
            let (moved, _) = evaluate(&shifted.value_function, &x).unwrap();
            assert!((moved - orig - shift).abs() < 1e-9);
            assert_eq!(policy_action(&solution, &x), policy_action(&shifted, &x));
        }
    }

    #[test]
    fn oracle_value_examples() {
        let m = tiny();
        let x = Belief::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(oracle_value(&m, &x, 0), 0.0);
        assert!((oracle_value(&m, &x, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stage_values_match_the_oracle() {
        for seed in 0..5 {
            let m = random_pomdp(3, 2, 2, 0.9, 800 + seed);
            let mut current = VectorSet::new(vec![AlphaVector::zero(3)]);
            let beliefs = random_beliefs(3, 20, seed);
            for t in 1..=3 {
                let (next, _) =
                    crate::dpupdate::dp_update(&m, &current, &UpdateVariant::ip()).unwrap();
                for x in &beliefs {
                    let (v, _) = evaluate(&next, x).unwrap();
                    let oracle = oracle_value(&m, x, t);
                    assert!(
                        (v - oracle).abs() <= 1e-8,
                        "seed {seed} stage {t}: {v} vs {oracle}"
                    );
                }
                current = next;
            }
        }
    }

    #[test]
    fn simulate_on_a_deterministic_chain_is_exact() {
        let m = PomdpModel::new(
            vec!["s0".into()],
            vec!["a0".into()],
            vec!["z0".into()],
            vec![1.0],
            vec![1.0],
            vec![1.0],
            0.9,
        )
        .unwrap();
        let solution = Solution {
            value_function: VectorSet::new(vec![AlphaVector::with_action(vec![10.0], 0)]),
            stages_run: 1,
            stage_stats: vec![],
            residuals: vec![],
        };
        let horizon = 12;
        let (mean, stderr) =
            simulate(&m, &solution, &Belief::corner(0, 1), 5, horizon, 9).unwrap();
        let expected: f64 = (0..horizon).map(|t| 0.9f64.powi(t as i32)).sum();
        assert!((mean - expected).abs() < 1e-12);
        assert_eq!(stderr, 0.0);
    }

    #[test]
    fn simulate_is_deterministic_per_seed() {
        let solution = solve_tiny(5);
        let m = tiny();
        let x0 = Belief::new(vec![0.5, 0.5]).unwrap();
        let (m1, _) = simulate(&m, &solution, &x0, 1, 30, 77).unwrap();
        let (m2, _) = simulate(&m, &solution, &x0, 1, 30, 77).unwrap();
        assert_eq!(m1.to_bits(), m2.to_bits());
    }

    #[test]
    fn value_iteration_is_deterministic_end_to_end() {
        let m = random_pomdp(3, 2, 3, 0.9, 900);
        let config = SolveConfig {
            max_stages: 4,
            ..Default::default()
        };
        let s1 = value_iterate(&m, &config).unwrap();
        let s2 = value_iterate(&m, &config).unwrap();
        let names: Vec<String> = m.action_names().to_vec();
        assert_eq!(
            write_alpha_file(&s1.value_function, &names),
            write_alpha_file(&s2.value_function, &names)
        );
        assert_eq!(s1.residuals, s2.residuals);
    }
}
