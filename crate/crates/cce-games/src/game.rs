//! Finite-horizon general-sum tabular Markov games.
//!
//! A game is `(S, H, {A_i}, {P_h}, {r_{h,i}})` with a fixed initial state:
//! at step `h` in state `s` the agents play a joint action `a`, each agent
//! `i` collects the deterministic reward `r_{h,i}(s, a) ∈ [0, 1]`, and the
//! state transitions according to `P_h(· | s, a)`.
//!
//! Transitions and rewards are dense tensors indexed by
//! `(h, s, flattened joint action)`; joint actions are flattened row-major
//! over `(a_1, …, a_m)` (the last agent's action varies fastest). Steps and
//! states are 0-based throughout the crate.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Flatten a multi-index into a row-major linear index.
pub fn encode_index(dims: &[usize], idx: &[usize]) -> usize {
    debug_assert_eq!(dims.len(), idx.len());
    let mut out = 0;
    for (d, i) in dims.iter().zip(idx) {
        debug_assert!(i < d);
        out = out * d + i;
    }
    out
}

/// Inverse of [`encode_index`].
pub fn decode_index(dims: &[usize], mut linear: usize, out: &mut [usize]) {
    for pos in (0..dims.len()).rev() {
        out[pos] = linear % dims[pos];
        linear /= dims[pos];
    }
}

/// A fully specified tabular Markov game. Immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GameFile", into = "GameFile")]
pub struct MarkovGame {
    num_states: usize,
    num_agents: usize,
    horizon: usize,
    action_counts: Vec<usize>,
    initial_state: usize,
    num_joint_actions: usize,
    /// `[h][s][joint_a][s']`, flattened.
    transition: Vec<f64>,
    /// `[h][i][s][joint_a]`, flattened.
    reward: Vec<f64>,
}

/// One structural defect found by [`MarkovGame::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Transition row does not sum to one (or has negative mass).
    TransitionRow {
        step: usize,
        state: usize,
        joint_action: usize,
        sum: f64,
    },
    NegativeTransition {
        step: usize,
        state: usize,
        joint_action: usize,
        next_state: usize,
        value: f64,
    },
    /// Reward outside `[0, 1]`.
    RewardRange {
        step: usize,
        agent: usize,
        state: usize,
        joint_action: usize,
        value: f64,
    },
    Structure(String),
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::TransitionRow {
                step,
                state,
                joint_action,
                sum,
            } => write!(
                f,
                "transition row (h={step}, s={state}, a={joint_action}) sums to {sum}"
            ),
            Violation::NegativeTransition {
                step,
                state,
                joint_action,
                next_state,
                value,
            } => write!(
                f,
                "P(h={step}, s={state}, a={joint_action} -> {next_state}) = {value} < 0"
            ),
            Violation::RewardRange {
                step,
                agent,
                state,
                joint_action,
                value,
            } => write!(
                f,
                "reward (h={step}, i={agent}, s={state}, a={joint_action}) = {value} outside [0, 1]"
            ),
            Violation::Structure(msg) => write!(f, "{msg}"),
        }
    }
}

const ROW_SUM_TOL: f64 = 1e-12;

impl MarkovGame {
    /// Build a game from dense tensors, rejecting structurally invalid input.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        num_agents: usize,
        horizon: usize,
        action_counts: Vec<usize>,
        initial_state: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        let num_joint_actions = action_counts.iter().product::<usize>().max(1);
        let game = MarkovGame {
            num_states,
            num_agents,
            horizon,
            action_counts,
            initial_state,
            num_joint_actions,
            transition,
            reward,
        };
        let report = game.validate();
        if report.is_empty() {
            Ok(game)
        } else {
            let joined = report
                .iter()
                .take(8)
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::InvalidGame(joined))
        }
    }

    /// Check every structural invariant and report all offenders. An empty
    /// report means the game is well-formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.horizon < 1 || self.num_agents < 1 || self.num_states < 1 {
            out.push(Violation::Structure(
                "S, m and H must all be at least 1".into(),
            ));
            return out;
        }
        if self.action_counts.len() != self.num_agents
            || self.action_counts.iter().any(|&a| a < 1)
        {
            out.push(Violation::Structure(
                "need one action count >= 1 per agent".into(),
            ));
            return out;
        }
        if self.initial_state >= self.num_states {
            out.push(Violation::Structure(format!(
                "initial state {} out of range (S = {})",
                self.initial_state, self.num_states
            )));
        }
        let ja = self.num_joint_actions;
        if self.transition.len() != self.horizon * self.num_states * ja * self.num_states {
            out.push(Violation::Structure(format!(
                "transition tensor has {} entries, expected H*S*A*S = {}",
                self.transition.len(),
                self.horizon * self.num_states * ja * self.num_states
            )));
            return out;
        }
        if self.reward.len() != self.horizon * self.num_agents * self.num_states * ja {
            out.push(Violation::Structure(format!(
                "reward tensor has {} entries, expected H*m*S*A = {}",
                self.reward.len(),
                self.horizon * self.num_agents * self.num_states * ja
            )));
            return out;
        }
        for h in 0..self.horizon {
            for s in 0..self.num_states {
                for a in 0..ja {
                    let row = self.transition_row(h, s, a);
                    let mut sum = 0.0;
                    for (sp, &p) in row.iter().enumerate() {
                        if p < 0.0 {
                            out.push(Violation::NegativeTransition {
                                step: h,
                                state: s,
                                joint_action: a,
                                next_state: sp,
                                value: p,
                            });
                        }
                        sum += p;
                    }
                    if (sum - 1.0).abs() > ROW_SUM_TOL {
                        out.push(Violation::TransitionRow {
                            step: h,
                            state: s,
                            joint_action: a,
                            sum,
                        });
                    }
                }
            }
        }
        for h in 0..self.horizon {
            for i in 0..self.num_agents {
                for s in 0..self.num_states {
                    for a in 0..ja {
                        let r = self.reward(h, i, s, a);
                        if !(0.0..=1.0).contains(&r) {
                            out.push(Violation::RewardRange {
                                step: h,
                                agent: i,
                                state: s,
                                joint_action: a,
                                value: r,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn num_joint_actions(&self) -> usize {
        self.num_joint_actions
    }

    /// Row-major flattening of a joint action; the last agent varies fastest.
    pub fn encode_joint(&self, actions: &[usize]) -> usize {
        encode_index(&self.action_counts, actions)
    }

    pub fn decode_joint(&self, joint: usize, out: &mut [usize]) {
        decode_index(&self.action_counts, joint, out)
    }

    pub fn transition_row(&self, h: usize, s: usize, joint_action: usize) -> &[f64] {
        let base =
            ((h * self.num_states + s) * self.num_joint_actions + joint_action) * self.num_states;
        &self.transition[base..base + self.num_states]
    }

    pub fn reward(&self, h: usize, i: usize, s: usize, joint_action: usize) -> f64 {
        self.reward
            [((h * self.num_agents + i) * self.num_states + s) * self.num_joint_actions
                + joint_action]
    }
}

/// On-disk JSON schema: `{S, m, H, A, s1, P, r}` with
/// `P[h][s][joint_a][s']` and `r[h][i][s][joint_a]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameFile {
    #[serde(rename = "S")]
    pub num_states: usize,
    pub m: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "A")]
    pub action_counts: Vec<usize>,
    pub s1: usize,
    #[serde(rename = "P")]
    pub transition: Vec<Vec<Vec<Vec<f64>>>>,
    pub r: Vec<Vec<Vec<Vec<f64>>>>,
}

impl TryFrom<GameFile> for MarkovGame {
    type Error = Error;

    fn try_from(f: GameFile) -> Result<Self> {
        let ja: usize = f.action_counts.iter().product::<usize>().max(1);
        let mut transition = Vec::with_capacity(f.horizon * f.num_states * ja * f.num_states);
        for h in &f.transition {
            for s in h {
                for a in s {
                    transition.extend_from_slice(a);
                }
            }
        }
        let mut reward = Vec::with_capacity(f.horizon * f.m * f.num_states * ja);
        for h in &f.r {
            for i in h {
                for s in i {
                    reward.extend_from_slice(s);
                }
            }
        }
        MarkovGame::new(
            f.num_states,
            f.m,
            f.horizon,
            f.action_counts,
            f.s1,
            transition,
            reward,
        )
    }
}

impl From<MarkovGame> for GameFile {
    fn from(g: MarkovGame) -> Self {
        let ja = g.num_joint_actions;
        let transition = (0..g.horizon)
            .map(|h| {
                (0..g.num_states)
                    .map(|s| {
                        (0..ja)
                            .map(|a| g.transition_row(h, s, a).to_vec())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let reward = (0..g.horizon)
            .map(|h| {
                (0..g.num_agents)
                    .map(|i| {
                        (0..g.num_states)
                            .map(|s| (0..ja).map(|a| g.reward(h, i, s, a)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        GameFile {
            num_states: g.num_states,
            m: g.num_agents,
            horizon: g.horizon,
            action_counts: g.action_counts,
            s1: g.initial_state,
            transition,
            r: reward,
        }
    }
}

/// One step of a sampled play-through.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub step: usize,
    pub state: usize,
    pub joint_action: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_state: usize,
}

/// An ordered record of at most `H` steps with strictly increasing step
/// indices starting at 0.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn new() -> Self {
        Trajectory { steps: Vec::new() }
    }

    pub fn push(&mut self, step: TrajectoryStep, horizon: usize) -> Result<()> {
        if self.steps.len() >= horizon {
            return Err(Error::Shape(format!(
                "trajectory already has {} steps (H = {horizon})",
                self.steps.len()
            )));
        }
        let expected = self.steps.last().map_or(0, |prev| prev.step + 1);
        if step.step != expected {
            return Err(Error::Shape(format!(
                "trajectory step index {} out of order (expected {expected})",
                step.step
            )));
        }
        self.steps.push(step);
        Ok(())
    }

    pub fn steps(&self) -> &[TrajectoryStep] {
        &self.steps
    }

    /// Sum of rewards collected by agent `i`.
    pub fn return_for(&self, i: usize) -> f64 {
        self.steps.iter().map(|s| s.rewards[i]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{matching_pennies, matrix_game};

    #[test]
    fn matching_pennies_is_valid() {
        let g = matching_pennies(1);
        assert!(g.validate().is_empty());
        assert_eq!(g.num_joint_actions(), 4);
    }

    #[test]
    fn short_transition_row_is_reported_with_indices() {
        let g = matching_pennies(1);
        let mut f = GameFile::from(g);
        f.transition[0][0][2][0] = 0.9; // row now sums to 0.9
        let bad = MarkovGame::try_from(f);
        match bad {
            Err(Error::InvalidGame(msg)) => {
                assert!(msg.contains("h=0"), "{msg}");
                assert!(msg.contains("a=2"), "{msg}");
                assert!(msg.contains("0.9"), "{msg}");
            }
            other => panic!("expected InvalidGame, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_reward_is_reported() {
        let g = matching_pennies(1);
        let mut f = GameFile::from(g);
        f.r[0][1][0][3] = 1.5;
        let bad = MarkovGame::try_from(f);
        match bad {
            Err(Error::InvalidGame(msg)) => {
                assert!(msg.contains("1.5"), "{msg}");
                assert!(msg.contains("i=1"), "{msg}");
            }
            other => panic!("expected InvalidGame, got {other:?}"),
        }
    }

    #[test]
    fn joint_encoding_is_row_major_with_last_agent_fastest() {
        let payoffs = vec![
            vec![vec![0.0, 0.1, 0.2], vec![0.3, 0.4, 0.5]],
            vec![vec![0.5, 0.4, 0.3], vec![0.2, 0.1, 0.0]],
        ];
        let g = matrix_game(&payoffs, 1).unwrap();
        assert_eq!(g.encode_joint(&[0, 2]), 2);
        assert_eq!(g.encode_joint(&[1, 0]), 3);
        let mut back = [0usize; 2];
        g.decode_joint(5, &mut back);
        assert_eq!(back, [1, 2]);
        // Reward lookups see the same flattening.
        assert!((g.reward(0, 0, 0, g.encode_joint(&[1, 2])) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn game_json_round_trip_is_lossless() {
        let g = crate::harness::generate_random_tabular(3, 2, &[2, 2], 2, 11);
        let text = serde_json::to_string(&g).unwrap();
        let back: MarkovGame = serde_json::from_str(&text).unwrap();
        assert_eq!(g.transition, back.transition);
        assert_eq!(g.reward, back.reward);
        assert_eq!(g.action_counts, back.action_counts);
    }

    #[test]
    fn trajectory_rejects_gaps_and_overflow() {
        let mut t = Trajectory::new();
        let step = |h: usize| TrajectoryStep {
            step: h,
            state: 0,
            joint_action: vec![0],
            rewards: vec![0.5],
            next_state: 0,
        };
        t.push(step(0), 2).unwrap();
        assert!(t.push(step(2), 2).is_err());
        t.push(step(1), 2).unwrap();
        assert!(t.push(step(2), 2).is_err()); // over horizon
        assert!((t.return_for(0) - 1.0).abs() < 1e-15);
    }
}
