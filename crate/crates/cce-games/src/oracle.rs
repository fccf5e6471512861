//! Exact backward-induction evaluation of mixture policies and best
//! responses, and the CCE-gap (exploitability) measure built from them.
//!
//! Everything here is exact dynamic programming on the game tensors; the
//! cost is `O(H · S² · Π_i A_i · K)`, which is fine for desk-scale games.
//! These routines are the ground truth against which the sample-based
//! learners are judged, so they deliberately share no code with them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::game::{MarkovGame, Trajectory, TrajectoryStep};
use crate::policy::{AgentPolicy, StepMixturePolicy};
use crate::{Error, Result};

/// Exact per-`(h, i, s)` values of a policy; the terminal level `V_{H}` is
/// identically zero and not stored.
#[derive(Debug, Clone)]
pub struct ValueTable {
    horizon: usize,
    num_agents: usize,
    num_states: usize,
    /// `[(h * m + i) * S + s]`.
    values: Vec<f64>,
}

impl ValueTable {
    fn zeros(horizon: usize, num_agents: usize, num_states: usize) -> Self {
        ValueTable {
            horizon,
            num_agents,
            num_states,
            values: vec![0.0; horizon * num_agents * num_states],
        }
    }

    /// Value at step `h` (0-based). `h = H` returns 0 for convenience.
    pub fn get(&self, h: usize, i: usize, s: usize) -> f64 {
        if h == self.horizon {
            0.0
        } else {
            self.values[(h * self.num_agents + i) * self.num_states + s]
        }
    }

    fn set(&mut self, h: usize, i: usize, s: usize, v: f64) {
        self.values[(h * self.num_agents + i) * self.num_states + s] = v;
    }
}

/// Exploitability report: per-agent policy value, best-response value and
/// their difference at the initial state.
///
/// A `gap` can be negative: the correlation device may outperform every
/// independent deviation (e.g. in coordination games), and the equilibrium
/// condition only requires `max_gap <= epsilon`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapReport {
    pub per_agent: Vec<AgentGap>,
    pub max_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentGap {
    pub policy_value: f64,
    pub best_response_value: f64,
    pub gap: f64,
}

fn check_dims(game: &MarkovGame, mix: &StepMixturePolicy) -> Result<()> {
    if mix.horizon() != game.horizon()
        || mix.num_states() != game.num_states()
        || mix.num_agents() != game.num_agents()
        || mix.action_counts() != game.action_counts()
    {
        return Err(Error::Shape(
            "policy dimensions do not match the game".into(),
        ));
    }
    Ok(())
}

/// Evaluate the mixture policy exactly:
/// `V_{h,i}(s) = Σ_a μ_h(a|s) [ r_{h,i}(s,a) + Σ_{s'} P_h(s'|s,a) V_{h+1,i}(s') ]`
/// where `μ_h` is the per-step correlated joint action distribution.
pub fn evaluate_values(game: &MarkovGame, mix: &StepMixturePolicy) -> Result<ValueTable> {
    check_dims(game, mix)?;
    let (horizon, m, states) = (game.horizon(), game.num_agents(), game.num_states());
    let mut table = ValueTable::zeros(horizon, m, states);
    for h in (0..horizon).rev() {
        for s in 0..states {
            let joint = mix.joint_action_distribution(h, s)?;
            for i in 0..m {
                let mut v = 0.0;
                for (a, &mu) in joint.iter().enumerate() {
                    if mu == 0.0 {
                        continue;
                    }
                    let mut q = game.reward(h, i, s, a);
                    if h + 1 < horizon {
                        let row = game.transition_row(h, s, a);
                        for (sp, &p) in row.iter().enumerate() {
                            q += p * table.get(h + 1, i, sp);
                        }
                    }
                    v += mu * q;
                }
                table.set(h, i, s, v);
            }
        }
    }
    Ok(table)
}

/// Exact best response of agent `i` against the opponents' per-step
/// correlated marginal. Ties in the argmax break toward the lowest action
/// index so results are reproducible.
pub fn best_response(
    game: &MarkovGame,
    mix: &StepMixturePolicy,
    i: usize,
) -> Result<(AgentPolicy, ValueTable)> {
    check_dims(game, mix)?;
    if i >= game.num_agents() {
        return Err(Error::Shape(format!("agent {i} out of range")));
    }
    let (horizon, states) = (game.horizon(), game.num_states());
    let a_i = game.action_counts()[i];
    let rest_dims: Vec<usize> = game
        .action_counts()
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, &a)| a)
        .collect();
    let rest_total: usize = rest_dims.iter().product::<usize>().max(1);

    let mut table = ValueTable::zeros(horizon, 1, states);
    let mut argmax = vec![vec![0usize; states]; horizon];
    let mut rest_idx = vec![0usize; rest_dims.len()];
    let mut joint_idx = vec![0usize; game.num_agents()];

    for h in (0..horizon).rev() {
        for s in 0..states {
            let opp = mix.opponent_marginal(h, s, i)?;
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..a_i {
                let mut q = 0.0;
                for rest in 0..rest_total {
                    let w = opp[rest];
                    if w == 0.0 {
                        continue;
                    }
                    crate::game::decode_index(&rest_dims, rest, &mut rest_idx);
                    let mut pos = 0;
                    for j in 0..game.num_agents() {
                        if j == i {
                            joint_idx[j] = a;
                        } else {
                            joint_idx[j] = rest_idx[pos];
                            pos += 1;
                        }
                    }
                    let ja = game.encode_joint(&joint_idx);
                    let mut q_ja = game.reward(h, i, s, ja);
                    if h + 1 < horizon {
                        let row = game.transition_row(h, s, ja);
                        for (sp, &p) in row.iter().enumerate() {
                            q_ja += p * table.get(h + 1, 0, sp);
                        }
                    }
                    q += w * q_ja;
                }
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            table.set(h, 0, s, best);
            argmax[h][s] = best_a;
        }
    }
    let policy = AgentPolicy::deterministic(horizon, states, a_i, &argmax);
    Ok((policy, table))
}

/// The CCE-gap report at the game's initial state.
pub fn cce_gap(game: &MarkovGame, mix: &StepMixturePolicy) -> Result<GapReport> {
    let values = evaluate_values(game, mix)?;
    let s1 = game.initial_state();
    let mut per_agent = Vec::with_capacity(game.num_agents());
    let mut max_gap = f64::NEG_INFINITY;
    for i in 0..game.num_agents() {
        let (_, br) = best_response(game, mix, i)?;
        let policy_value = values.get(0, i, s1);
        let best_response_value = br.get(0, 0, s1);
        let gap = best_response_value - policy_value;
        max_gap = max_gap.max(gap);
        per_agent.push(AgentGap {
            policy_value,
            best_response_value,
            gap,
        });
    }
    Ok(GapReport { per_agent, max_gap })
}

/// Monte-Carlo estimate of per-agent returns with standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McEstimate {
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub trajectories: usize,
}

/// Sample one play-through of the correlation device.
pub fn sample_trajectory(
    game: &MarkovGame,
    mix: &StepMixturePolicy,
    rng: &mut impl rand::Rng,
) -> Result<Trajectory> {
    let mut trajectory = Trajectory::new();
    let mut s = game.initial_state();
    let mut joint = vec![0usize; game.num_agents()];
    for h in 0..game.horizon() {
        mix.sample_joint(h, s, rng, &mut joint);
        let ja = game.encode_joint(&joint);
        let rewards: Vec<f64> = (0..game.num_agents())
            .map(|i| game.reward(h, i, s, ja))
            .collect();
        let row = game.transition_row(h, s, ja);
        let next = crate::policy::sample_categorical(rng, row);
        trajectory.push(
            TrajectoryStep {
                step: h,
                state: s,
                joint_action: joint.clone(),
                rewards,
                next_state: next,
            },
            game.horizon(),
        )?;
        s = next;
    }
    Ok(trajectory)
}

/// Seeded sample mean of `Σ_h r_{h,i}` under the per-step correlation
/// device. Unbiased for [`evaluate_values`] at the initial state; tests pin
/// agreement within four standard errors.
pub fn monte_carlo_value(
    game: &MarkovGame,
    mix: &StepMixturePolicy,
    trajectories: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_dims(game, mix)?;
    if trajectories == 0 {
        return Err(Error::NonPositive("trajectories"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = game.num_agents();
    let mut returns = vec![Vec::with_capacity(trajectories); m];
    for _ in 0..trajectories {
        let t = sample_trajectory(game, mix, &mut rng)?;
        for (i, per_agent) in returns.iter_mut().enumerate() {
            per_agent.push(t.return_for(i));
        }
    }
    let n = trajectories as f64;
    let means: Vec<f64> = returns.iter().map(|r| r.iter().sum::<f64>() / n).collect();
    // Two-pass variance; the naive sum-of-squares form loses all precision
    // on (near-)constant returns.
    let std_errors = returns
        .iter()
        .zip(&means)
        .map(|(r, &mean)| {
            let ss: f64 = r.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (n - 1.0).max(1.0) / n).sqrt()
        })
        .collect();
    Ok(McEstimate {
        means,
        std_errors,
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate_random_tabular, matching_pennies, matrix_game, prisoners_dilemma};
    use crate::policy::{MixtureComponent, MixtureStep, ProductPolicy};

    fn uniform_mixture(game: &MarkovGame) -> StepMixturePolicy {
        StepMixturePolicy::from_product(&ProductPolicy::uniform(game))
    }

    /// Independent direct evaluation of a product policy by recursion over
    /// explicit per-agent action loops; used as an oracle for the oracle.
    fn direct_product_value(game: &MarkovGame, p: &ProductPolicy, h: usize, i: usize, s: usize) -> f64 {
        if h == game.horizon() {
            return 0.0;
        }
        let m = game.num_agents();
        let mut idx = vec![0usize; m];
        let total = game.num_joint_actions();
        let mut v = 0.0;
        for ja in 0..total {
            game.decode_joint(ja, &mut idx);
            let mut w = 1.0;
            for (j, &a) in idx.iter().enumerate() {
                w *= p.probs(h, j, s)[a];
            }
            if w == 0.0 {
                continue;
            }
            let mut q = game.reward(h, i, s, ja);
            for (sp, &pp) in game.transition_row(h, s, ja).iter().enumerate() {
                if pp > 0.0 {
                    q += pp * direct_product_value(game, p, h + 1, i, sp);
                }
            }
            v += w * q;
        }
        v
    }

    #[test]
    fn constant_rewards_ignore_the_policy() {
        let payoffs = vec![
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        ];
        let g = matrix_game(&payoffs, 3).unwrap();
        let v = evaluate_values(&g, &uniform_mixture(&g)).unwrap();
        for i in 0..2 {
            assert!((v.get(0, i, 0) - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn matching_pennies_uniform_value_is_half() {
        let g = matching_pennies(1);
        let v = evaluate_values(&g, &uniform_mixture(&g)).unwrap();
        assert!((v.get(0, 0, 0) - 0.5).abs() < 1e-12);
        assert!((v.get(0, 1, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn forced_trajectory_accumulates_horizon() {
        let payoffs = vec![vec![vec![1.0]], vec![vec![1.0]]];
        let g = matrix_game(&payoffs, 4).unwrap();
        let v = evaluate_values(&g, &uniform_mixture(&g)).unwrap();
        assert_eq!(v.get(0, 0, 0), 4.0);
    }

    #[test]
    fn prisoners_dilemma_best_response_defects() {
        let g = prisoners_dilemma(1);
        let (policy, v) = best_response(&g, &uniform_mixture(&g), 0).unwrap();
        assert!((v.get(0, 0, 0) - 0.6).abs() < 1e-12);
        assert_eq!(policy.probs(0, 0), &[0.0, 1.0]);
    }

    #[test]
    fn matching_pennies_tie_breaks_to_lowest_action() {
        let g = matching_pennies(1);
        let (policy, v) = best_response(&g, &uniform_mixture(&g), 0).unwrap();
        assert!((v.get(0, 0, 0) - 0.5).abs() < 1e-12);
        assert_eq!(policy.probs(0, 0), &[1.0, 0.0]);
    }

    #[test]
    fn indifferent_best_response_equals_policy_value() {
        let payoffs = vec![
            vec![vec![0.3, 0.3], vec![0.3, 0.3]],
            vec![vec![0.3, 0.3], vec![0.3, 0.3]],
        ];
        let g = matrix_game(&payoffs, 2).unwrap();
        let mix = uniform_mixture(&g);
        let v = evaluate_values(&g, &mix).unwrap();
        let (_, br) = best_response(&g, &mix, 0).unwrap();
        assert!((v.get(0, 0, 0) - br.get(0, 0, 0)).abs() < 1e-12);
    }

    #[test]
    fn gap_report_matches_hand_computations() {
        let g = matching_pennies(1);
        let report = cce_gap(&g, &uniform_mixture(&g)).unwrap();
        assert!(report.max_gap.abs() < 1e-12);

        let pd = prisoners_dilemma(1);
        let report = cce_gap(&pd, &uniform_mixture(&pd)).unwrap();
        assert!((report.per_agent[0].gap - 0.15).abs() < 1e-12);
        assert!((report.per_agent[1].gap - 0.15).abs() < 1e-12);
        assert!((report.max_gap - 0.15).abs() < 1e-12);
    }

    #[test]
    fn dominant_equilibrium_has_zero_gap() {
        // All weight on (defect, defect), the dominant-strategy equilibrium.
        let pd = prisoners_dilemma(1);
        let defect = MixtureComponent(vec![
            vec![vec![0.0, 1.0]],
            vec![vec![0.0, 1.0]],
        ]);
        let mix = StepMixturePolicy::new(
            1,
            2,
            1,
            vec![2, 2],
            vec![MixtureStep::new(vec![1.0], vec![defect])],
        )
        .unwrap();
        let report = cce_gap(&pd, &mix).unwrap();
        assert!(report.max_gap.abs() < 1e-12);
    }

    #[test]
    fn product_dominance_and_direct_evaluator_agree() {
        // For one-component mixtures the deviator can replicate their own
        // slice, so the best response dominates at every (h, s); and the
        // backward induction must match an independent direct evaluation.
        for seed in 0..4 {
            let g = generate_random_tabular(3, 2, &[2, 2], 3, seed);
            let product = ProductPolicy::uniform(&g);
            let mix = StepMixturePolicy::from_product(&product);
            let v = evaluate_values(&g, &mix).unwrap();
            for i in 0..2 {
                let (_, br) = best_response(&g, &mix, i).unwrap();
                for h in 0..g.horizon() {
                    for s in 0..g.num_states() {
                        assert!(br.get(h, 0, s) >= v.get(h, i, s) - 1e-9);
                        let direct = direct_product_value(&g, &product, h, i, s);
                        assert!((direct - v.get(h, i, s)).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn permuting_dominated_action_labels_keeps_the_value() {
        // Action 0 strictly dominates; swapping the labels of the dominated
        // actions 1 and 2 must not change the best-response value.
        let base = vec![
            vec![vec![0.9, 0.9], vec![0.2, 0.3], vec![0.3, 0.2]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5]],
        ];
        let swapped = vec![
            vec![base[0][0].clone(), base[0][2].clone(), base[0][1].clone()],
            vec![base[1][0].clone(), base[1][2].clone(), base[1][1].clone()],
        ];
        let g1 = matrix_game(&base, 1).unwrap();
        let g2 = matrix_game(&swapped, 1).unwrap();
        let (_, v1) = best_response(&g1, &uniform_mixture(&g1), 0).unwrap();
        let (_, v2) = best_response(&g2, &uniform_mixture(&g2), 0).unwrap();
        assert!((v1.get(0, 0, 0) - v2.get(0, 0, 0)).abs() < 1e-12);
    }

    #[test]
    fn deterministic_game_monte_carlo_is_exact() {
        let payoffs = vec![vec![vec![0.7]], vec![vec![0.4]]];
        let g = matrix_game(&payoffs, 3).unwrap();
        let mix = uniform_mixture(&g);
        let mc = monte_carlo_value(&g, &mix, 100, 3).unwrap();
        assert!((mc.means[0] - 2.1).abs() < 1e-12);
        assert!(mc.std_errors[0] < 1e-12);
    }

    #[test]
    fn monte_carlo_matches_exact_within_four_standard_errors() {
        let g = matching_pennies(1);
        let mix = uniform_mixture(&g);
        let mc = monte_carlo_value(&g, &mix, 100_000, 5).unwrap();
        // Binomial standard error sqrt(0.25 / 1e5).
        let se = (0.25f64 / 1e5).sqrt();
        assert!((mc.std_errors[0] - se).abs() < se * 0.05);
        assert!((mc.means[0] - 0.5).abs() <= 4.0 * mc.std_errors[0]);

        for seed in 0..2 {
            let g = generate_random_tabular(4, 2, &[3, 3], 3, 100 + seed);
            let mix = uniform_mixture(&g);
            let exact = evaluate_values(&g, &mix).unwrap();
            let mc = monte_carlo_value(&g, &mix, 20_000, seed).unwrap();
            for i in 0..2 {
                let tol = 4.0 * mc.std_errors[i].max(1e-12);
                assert!(
                    (mc.means[i] - exact.get(0, i, g.initial_state())).abs() <= tol,
                    "agent {i}: {} vs {}",
                    mc.means[i],
                    exact.get(0, i, g.initial_state())
                );
            }
        }
    }
}
