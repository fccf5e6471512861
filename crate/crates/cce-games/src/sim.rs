//! The sampling interface between learners and a game.
//!
//! A [`Simulator`] owns the only handle to the transition tensors a learner
//! is allowed to touch. Every query is checked against the active
//! [`AccessProtocol`], logged in a [`SampleLedger`], and answered with a
//! transition draw derived from `(seed, query_index)` so that identical
//! query sequences replay identically.
//!
//! Queries mutate the ledger, so they require `&mut self`; callers that want
//! concurrency must route queries through a single owner assigning indices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::game::MarkovGame;
use crate::policy::{index_from_uniform, sample_categorical, MixtureStep};
use crate::{Error, Result};

/// Which state-action pairs may be queried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccessProtocol {
    /// Any `(h, s, a)` — the generative-model setting.
    RandomAccess,
    /// Only previously visited states (at any step index).
    LocalAccess,
    /// Only the simulator's current cursor state; the cursor advances with
    /// each query and can be reset to the initial state.
    OnlineAccess,
}

/// Which phase of a learner run issued a query; used for sample accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Init,
    Learn,
    Rollout,
    SingleAgent,
    FinalRollout,
}

pub const PHASES: [Phase; 5] = [
    Phase::Init,
    Phase::Learn,
    Phase::Rollout,
    Phase::SingleAgent,
    Phase::FinalRollout,
];

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Learn => "learn",
            Phase::Rollout => "rollout",
            Phase::SingleAgent => "single_agent",
            Phase::FinalRollout => "final_rollout",
        }
    }

    fn index(self) -> usize {
        match self {
            Phase::Init => 0,
            Phase::Learn => 1,
            Phase::Rollout => 2,
            Phase::SingleAgent => 3,
            Phase::FinalRollout => 4,
        }
    }
}

/// Query log: totals, per-phase counts, visited states and refused queries.
#[derive(Debug, Clone)]
pub struct SampleLedger {
    total_queries: u64,
    per_phase: [u64; 5],
    visited: Vec<bool>,
    visited_count: usize,
    violation_count: u64,
}

impl SampleLedger {
    fn new(num_states: usize, initial_state: usize) -> Self {
        let mut visited = vec![false; num_states];
        visited[initial_state] = true;
        SampleLedger {
            total_queries: 0,
            per_phase: [0; 5],
            visited,
            visited_count: 1,
            violation_count: 0,
        }
    }

    pub fn total_queries(&self) -> u64 {
        self.total_queries
    }

    pub fn phase_count(&self, phase: Phase) -> u64 {
        self.per_phase[phase.index()]
    }

    pub fn visited(&self, s: usize) -> bool {
        self.visited[s]
    }

    pub fn visited_count(&self) -> usize {
        self.visited_count
    }

    pub fn violation_count(&self) -> u64 {
        self.violation_count
    }

    fn mark_visited(&mut self, s: usize) {
        if !self.visited[s] {
            self.visited[s] = true;
            self.visited_count += 1;
        }
    }
}

/// One row of the optional query log.
#[derive(Debug, Clone)]
pub struct LogRow {
    pub query_index: u64,
    pub phase: Phase,
    pub step: usize,
    pub state: usize,
    pub joint_action: usize,
    pub next_state: usize,
    pub protocol_ok: bool,
}

// splitmix64; used to turn (seed, counter) into an independent draw.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn mix_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

fn unit_uniform(seed: u64, index: u64) -> f64 {
    let bits = splitmix64(seed ^ splitmix64(index.wrapping_add(0x517C_C1B7_2722_0A95)));
    // 53 high bits -> [0, 1).
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

/// How a deviating agent's opponents act inside [`Simulator::local_sampling`].
pub enum OpponentSpec<'a> {
    /// Opponents play independently; one distribution per opponent, in
    /// increasing agent order with the deviator skipped.
    Product(&'a [Vec<f64>]),
    /// Opponents act as one step of a correlation device: a component `k` is
    /// drawn from the step weights, then each opponent plays its slice at
    /// `state`.
    Mixture {
        step: &'a MixtureStep,
        deviator: usize,
        state: usize,
    },
}

/// Simulator for a fixed game under a fixed access protocol.
pub struct Simulator<'g> {
    game: &'g MarkovGame,
    protocol: AccessProtocol,
    seed: u64,
    phase: Phase,
    cursor: usize,
    ledger: SampleLedger,
    log: Option<Vec<LogRow>>,
}

impl<'g> Simulator<'g> {
    pub fn new(game: &'g MarkovGame, protocol: AccessProtocol, seed: u64) -> Self {
        Simulator {
            game,
            protocol,
            seed,
            phase: Phase::Learn,
            cursor: game.initial_state(),
            ledger: SampleLedger::new(game.num_states(), game.initial_state()),
            log: None,
        }
    }

    pub fn game_dims(&self) -> (usize, usize, usize, &[usize]) {
        (
            self.game.num_states(),
            self.game.num_agents(),
            self.game.horizon(),
            self.game.action_counts(),
        )
    }

    pub fn initial_state(&self) -> usize {
        self.game.initial_state()
    }

    pub fn protocol(&self) -> AccessProtocol {
        self.protocol
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn ledger(&self) -> &SampleLedger {
        &self.ledger
    }

    /// Start recording one [`LogRow`] per query attempt.
    pub fn enable_log(&mut self) {
        if self.log.is_none() {
            self.log = Some(Vec::new());
        }
    }

    pub fn log(&self) -> Option<&[LogRow]> {
        self.log.as_deref()
    }

    /// Write the query log as CSV.
    pub fn dump_log_csv(&self, w: &mut impl std::io::Write) -> Result<()> {
        writeln!(w, "query_index,phase,h,s,joint_a,s_next,protocol_ok")?;
        for row in self.log.as_deref().unwrap_or(&[]) {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                row.query_index,
                row.phase.name(),
                row.step,
                row.state,
                row.joint_action,
                row.next_state,
                row.protocol_ok
            )?;
        }
        Ok(())
    }

    fn check_legal(&mut self, h: usize, s: usize) -> Result<()> {
        let legal = match self.protocol {
            AccessProtocol::RandomAccess => true,
            AccessProtocol::LocalAccess => self.ledger.visited(s),
            AccessProtocol::OnlineAccess => s == self.cursor,
        };
        if legal {
            Ok(())
        } else {
            self.ledger.violation_count += 1;
            if let Some(log) = &mut self.log {
                log.push(LogRow {
                    query_index: self.ledger.total_queries,
                    phase: self.phase,
                    step: h,
                    state: s,
                    joint_action: usize::MAX,
                    next_state: s,
                    protocol_ok: false,
                });
            }
            Err(Error::Protocol {
                protocol: self.protocol,
                step: h,
                state: s,
            })
        }
    }

    /// Sample `s' ~ P_h(·|s, a)` for an already-encoded joint action and
    /// update the ledger. The draw depends only on `(seed, query_index)`.
    fn raw_query(&mut self, h: usize, s: usize, joint_action: usize) -> Result<usize> {
        debug_assert!(h < self.game.horizon() && s < self.game.num_states());
        self.check_legal(h, s)?;
        let u = unit_uniform(self.seed, self.ledger.total_queries);
        let next = index_from_uniform(u, self.game.transition_row(h, s, joint_action));
        if let Some(log) = &mut self.log {
            log.push(LogRow {
                query_index: self.ledger.total_queries,
                phase: self.phase,
                step: h,
                state: s,
                joint_action,
                next_state: next,
                protocol_ok: true,
            });
        }
        self.ledger.total_queries += 1;
        self.ledger.per_phase[self.phase.index()] += 1;
        self.ledger.mark_visited(next);
        self.cursor = next;
        Ok(next)
    }

    /// Query the simulator with a joint action; returns per-agent rewards and
    /// the sampled next state.
    pub fn query(&mut self, h: usize, s: usize, actions: &[usize]) -> Result<(Vec<f64>, usize)> {
        let ja = self.game.encode_joint(actions);
        let next = self.raw_query(h, s, ja)?;
        let rewards = (0..self.game.num_agents())
            .map(|i| self.game.reward(h, i, s, ja))
            .collect();
        Ok((rewards, next))
    }

    /// Like [`Simulator::query`] but discards rewards.
    pub fn query_next(&mut self, h: usize, s: usize, actions: &[usize]) -> Result<usize> {
        let ja = self.game.encode_joint(actions);
        self.raw_query(h, s, ja)
    }

    /// Draw the opponents' joint action from `opponents`, then query with
    /// the assembled joint action. Returns agent `i`'s reward and the next
    /// state; consumes exactly one simulator query.
    pub fn local_sampling(
        &mut self,
        h: usize,
        i: usize,
        s: usize,
        action: usize,
        opponents: &OpponentSpec,
        rng: &mut impl Rng,
    ) -> Result<(f64, usize)> {
        let m = self.game.num_agents();
        let mut joint = vec![0usize; m];
        joint[i] = action;
        match opponents {
            OpponentSpec::Product(dists) => {
                debug_assert_eq!(dists.len(), m - 1);
                let mut pos = 0;
                for j in 0..m {
                    if j == i {
                        continue;
                    }
                    joint[j] = sample_categorical(rng, &dists[pos]);
                    pos += 1;
                }
            }
            OpponentSpec::Mixture {
                step,
                deviator,
                state,
            } => {
                debug_assert_eq!(*deviator, i);
                let k = step.sample_component(rng);
                for j in 0..m {
                    if j == i {
                        continue;
                    }
                    joint[j] = sample_categorical(rng, step.component_probs(k, j, *state));
                }
            }
        }
        let ja = self.game.encode_joint(&joint);
        let next = self.raw_query(h, s, ja)?;
        Ok((self.game.reward(h, i, s, ja), next))
    }

    /// Reset the online-access cursor to the initial state. Not a sample.
    pub fn reset_cursor(&mut self) -> Result<usize> {
        if self.protocol != AccessProtocol::OnlineAccess {
            return Err(Error::Config(format!(
                "reset_cursor requires OnlineAccess, simulator uses {:?}",
                self.protocol
            )));
        }
        self.cursor = self.game.initial_state();
        Ok(self.cursor)
    }
}
