//! The local-access equilibrium learner.
//!
//! The learner keeps, per step `h` and agent `i`, a core set of state-action
//! pairs (see [`crate::coreset`]) and runs `K` rounds of
//! follow-the-regularized-leader per step, backward from `h = H-1` to `0`:
//! in round `k` each agent samples every pair of its core set once against
//! the opponents' current policies `π^k`, fits ridge coefficients `θ^k` to
//! the targets `r + V̂_{h+1}(s')`, and plays the softmax of the running
//! average of the `θ`-estimates next round. Policies are kept as coefficient
//! vectors and materialized per state on demand, so they are well defined on
//! the whole state space, not only on core states.
//!
//! Whenever any sampled next state falls outside the joint confident set,
//! the state is explored (expanding the core sets) and the whole policy
//! learning phase restarts with fresh learner state but persistent core
//! sets. The core-set size bound caps how often that can happen; exceeding
//! `m·H·C_max` restarts is reported as an error because it indicates broken
//! bookkeeping rather than bad luck.
//!
//! A learned mixture is accepted only after rollout checks: `N` trajectories
//! of the mixture itself, then, per agent, a least-squares-value-iteration
//! best-response estimate (single-agent learning) whose deviation policy is
//! also rolled out. Each check restarts learning when it escapes the
//! confident set.
//!
//! The FTRL step size follows the standard anytime softmax scheme
//! `π^{k+1} ∝ exp(η_k Q̄^k)` with `η_k = k·sqrt(2 ln A_i / K) / (c_η H γ̂)`
//! (see e.g. Lattimore & Szepesvári, *Bandit Algorithms*, for the underlying
//! regret bound); `γ̂` scales with the Q-estimate range and uses the declared
//! feature misspecification when available.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coreset::{c_max, CoreSet};
use crate::features::FeatureMap;
use crate::linalg::dot;
use crate::policy::{AgentPolicy, MixtureComponent, MixtureStep, StepMixturePolicy};
use crate::sim::{AccessProtocol, OpponentSpec, Phase, Simulator};
use crate::{Error, Result};

/// Learner hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerParams {
    /// FTRL iterations per step.
    pub k: usize,
    /// Rollout trajectories per check.
    pub n_rollout: usize,
    /// Coverage threshold.
    pub tau: f64,
    /// Ridge regularizer.
    pub lambda: f64,
    /// Confidence level.
    pub delta: f64,
    /// Target accuracy (drives the default parameter regimes).
    pub epsilon: f64,
    /// Step-size constant `c_η`.
    pub c_eta: f64,
    /// Step-size scale override; defaults to the computed `γ̂`.
    pub gamma_hat: Option<f64>,
    /// Hard cap on restarts, default `ceil(m·H·C_max)`.
    pub restart_budget: usize,
}

impl LearnerParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::NonPositive("k"));
        }
        if self.n_rollout == 0 {
            return Err(Error::NonPositive("n_rollout"));
        }
        if self.tau <= 0.0 {
            return Err(Error::NonPositive("tau"));
        }
        if self.lambda <= 0.0 {
            return Err(Error::NonPositive("lambda"));
        }
        if self.delta <= 0.0 {
            return Err(Error::NonPositive("delta"));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::NonPositive("epsilon"));
        }
        if self.c_eta <= 0.0 {
            return Err(Error::NonPositive("c_eta"));
        }
        if self.restart_budget == 0 {
            return Err(Error::NonPositive("restart_budget"));
        }
        Ok(())
    }

    /// Defaults for the two accuracy regimes.
    ///
    /// With `ratio = min{ceil(ln S / d), A}`: when `min{ln S / d, A} <= ε^-2`
    /// the threshold is `τ = 1` and `K = c_K H^4 d ε^-2 ratio`; otherwise
    /// `K = c_K H^4 d ε^-2` and `τ = c_τ ε² / (H^4 d)`. In both regimes
    /// `λ = 1/(K d H²)` and `N = ceil(H²/ε²)`.
    #[allow(clippy::too_many_arguments)]
    pub fn regime_defaults(
        num_states: usize,
        horizon: usize,
        num_agents: usize,
        dim: usize,
        max_actions: usize,
        epsilon: f64,
        delta: f64,
        c_k: f64,
        c_tau: f64,
    ) -> Result<LearnerParams> {
        if epsilon <= 0.0 {
            return Err(Error::NonPositive("epsilon"));
        }
        let h4 = (horizon as f64).powi(4);
        let d = dim as f64;
        let inv_eps_sq = epsilon.powi(-2);
        let ratio = (num_states as f64).ln() / d;
        let (k, tau) = if ratio.min(max_actions as f64) <= inv_eps_sq {
            let factor = (ratio.ceil().max(1.0)).min(max_actions as f64);
            let k = (c_k * h4 * d * inv_eps_sq * factor).ceil() as usize;
            (k.max(1), 1.0)
        } else {
            let k = (c_k * h4 * d * inv_eps_sq).ceil() as usize;
            (k.max(1), c_tau * epsilon.powi(2) / (h4 * d))
        };
        let lambda = 1.0 / (k as f64 * d * (horizon as f64).powi(2));
        let n_rollout = ((horizon as f64).powi(2) / epsilon.powi(2)).ceil() as usize;
        let budget =
            (num_agents as f64 * horizon as f64 * c_max(dim, tau, lambda)?).ceil() as usize;
        let params = LearnerParams {
            k,
            n_rollout: n_rollout.max(1),
            tau,
            lambda,
            delta,
            epsilon,
            c_eta: 2.0,
            gamma_hat: None,
            restart_budget: budget.max(1),
        };
        params.validate()?;
        Ok(params)
    }
}

/// Step-size scale `γ̂`: `min{1 + sqrt(τ ln(S·A_i/δ)) + ν sqrt(d), sqrt(d)}`
/// when a misspecification bound is declared, else `sqrt(d)`.
pub fn gamma_hat_for(params: &LearnerParams, fmap: &FeatureMap, num_states: usize) -> f64 {
    if let Some(g) = params.gamma_hat {
        return g;
    }
    let d_sqrt = (fmap.dim() as f64).sqrt();
    match fmap.nu() {
        Some(nu) => {
            let a = fmap.num_actions() as f64;
            let log_term = ((num_states as f64 * a) / params.delta).ln().max(0.0);
            (1.0 + (params.tau * log_term).sqrt() + nu * d_sqrt).min(d_sqrt)
        }
        None => d_sqrt,
    }
}

/// `η_k = k · sqrt(2 ln A / K) / (c_η · H · γ̂)`; zero when `A = 1`.
pub fn ftrl_step_size(
    k: usize,
    iterations: usize,
    num_actions: usize,
    horizon: usize,
    gamma_hat: f64,
    c_eta: f64,
) -> f64 {
    if num_actions <= 1 {
        return 0.0;
    }
    let base = (2.0 * (num_actions as f64).ln() / iterations as f64).sqrt();
    k as f64 * base / (c_eta * horizon as f64 * gamma_hat)
}

/// Softmax of `η · scores` with max-subtraction for overflow safety.
pub fn softmax_policy(scores: &[f64], eta: f64) -> Vec<f64> {
    let scaled: Vec<f64> = scores.iter().map(|&q| eta * q).collect();
    let peak = scaled.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut out: Vec<f64> = scaled.iter().map(|&x| (x - peak).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Materialize the FTRL policy `softmax(η · φ(s,·)^T θ̄)` at one state.
pub fn ftrl_policy(theta_bar: &[f64], eta: f64, fmap: &FeatureMap, s: usize) -> Vec<f64> {
    let scores: Vec<f64> = (0..fmap.num_actions())
        .map(|a| dot(fmap.phi(s, a), theta_bar))
        .collect();
    softmax_policy(&scores, eta)
}

/// Outcome of one learning/rollout phase: either it completed, or a new
/// state was discovered (and explored) and the caller must restart the
/// policy learning loop. A restart is a normal return value, not an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseOutcome {
    Success,
    Restart { at_step: usize },
}

/// All agents' core sets for every step, with a per-`(level, state)`
/// confidence cache (confidence only changes when a level is explored, and
/// the check sits on the per-sample hot path).
pub struct CoreSets {
    steps: Vec<Vec<CoreSet>>,
    confidence: Vec<Vec<Option<bool>>>,
}

impl CoreSets {
    pub fn new(fmaps: &[FeatureMap], horizon: usize, tau: f64, lambda: f64) -> Result<Self> {
        let num_states = fmaps.first().map_or(0, |f| f.num_states());
        let mut steps = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let row = fmaps
                .iter()
                .map(|f| CoreSet::new(f.dim(), tau, lambda))
                .collect::<Result<Vec<_>>>()?;
            steps.push(row);
        }
        Ok(CoreSets {
            steps,
            confidence: vec![vec![None; num_states]; horizon],
        })
    }

    pub fn core(&self, h: usize, i: usize) -> &CoreSet {
        &self.steps[h][i]
    }

    /// Is `s` in the joint confident set at `level`? `level == H` is the
    /// terminal level where every state counts as confident.
    pub fn confident(&mut self, level: usize, fmaps: &[FeatureMap], s: usize) -> bool {
        if level >= self.steps.len() {
            return true;
        }
        if let Some(known) = self.confidence[level][s] {
            return known;
        }
        let result = crate::coreset::confident_for_all(&self.steps[level], fmaps, s);
        self.confidence[level][s] = Some(result);
        result
    }

    /// Explore `s` at `level` (no-op at the terminal level).
    pub fn explore(&mut self, level: usize, fmaps: &[FeatureMap], s: usize) -> usize {
        if level >= self.steps.len() {
            return 0;
        }
        let added = crate::coreset::explore(&mut self.steps[level], fmaps, s);
        if added > 0 {
            self.confidence[level].fill(None);
        }
        self.confidence[level][s] = Some(true);
        added
    }

    pub fn sizes(&self) -> Vec<Vec<usize>> {
        self.steps
            .iter()
            .map(|row| row.iter().map(CoreSet::len).collect())
            .collect()
    }

    pub fn total_pairs(&self) -> usize {
        self.steps
            .iter()
            .map(|row| row.iter().map(CoreSet::len).sum::<usize>())
            .sum()
    }
}

struct AgentStepHistory {
    thetas: Vec<Vec<f64>>,
    theta_bars: Vec<Vec<f64>>,
}

impl AgentStepHistory {
    fn new() -> Self {
        AgentStepHistory {
            thetas: Vec::new(),
            theta_bars: Vec::new(),
        }
    }

    /// Append `θ^k` and update the running average
    /// `Q̄^k = ((k-1) Q̄^{k-1} + Q^k)/k` at the coefficient level.
    fn push(&mut self, theta: Vec<f64>) {
        let k = self.thetas.len() + 1;
        let bar = if k == 1 {
            theta.clone()
        } else {
            let prev = &self.theta_bars[k - 2];
            let kf = k as f64;
            prev.iter()
                .zip(&theta)
                .map(|(b, t)| (kf - 1.0) / kf * b + t / kf)
                .collect()
        };
        self.thetas.push(theta);
        self.theta_bars.push(bar);
    }
}

/// Per-epoch learner state: coefficient histories defining `Q^k`, `Q̄^k`,
/// the policies `π^k`, the value estimates `V̂`, and the best-response side
/// (`Q̂†`, `V̂†`, `π̂†`). Reset on every restart; core sets persist outside.
pub struct EpochState {
    horizon: usize,
    num_states: usize,
    k_iterations: usize,
    /// `[h][i]`.
    hist: Vec<Vec<AgentStepHistory>>,
    /// Step sizes `η_k` per agent (they depend on `A_i`), `k = 1..=K`.
    etas: Vec<Vec<f64>>,
    /// `[h][i]` best-response coefficients from single-agent learning.
    br_theta: Vec<Vec<Option<Vec<f64>>>>,
    value_cache: Vec<Vec<HashMap<usize, f64>>>,
    br_value_cache: Vec<Vec<HashMap<usize, f64>>>,
}

impl EpochState {
    pub fn new(
        params: &LearnerParams,
        fmaps: &[FeatureMap],
        num_states: usize,
        horizon: usize,
    ) -> Self {
        let m = fmaps.len();
        let etas = fmaps
            .iter()
            .map(|f| {
                let gamma = gamma_hat_for(params, f, num_states);
                (1..=params.k)
                    .map(|k| {
                        ftrl_step_size(k, params.k, f.num_actions(), horizon, gamma, params.c_eta)
                    })
                    .collect()
            })
            .collect();
        EpochState {
            horizon,
            num_states,
            k_iterations: params.k,
            hist: (0..horizon)
                .map(|_| (0..m).map(|_| AgentStepHistory::new()).collect())
                .collect(),
            etas,
            br_theta: vec![vec![None; m]; horizon],
            value_cache: vec![vec![HashMap::new(); m]; horizon],
            br_value_cache: vec![vec![HashMap::new(); m]; horizon],
        }
    }

    pub fn iterations_done(&self, h: usize, i: usize) -> usize {
        self.hist[h][i].thetas.len()
    }

    pub fn theta(&self, h: usize, i: usize, k: usize) -> &[f64] {
        &self.hist[h][i].thetas[k - 1]
    }

    pub fn theta_bar(&self, h: usize, i: usize, k: usize) -> &[f64] {
        &self.hist[h][i].theta_bars[k - 1]
    }

    fn push_iteration(&mut self, h: usize, i: usize, theta: Vec<f64>) {
        self.hist[h][i].push(theta);
        // New coefficients invalidate any lazily materialized values at h.
        self.value_cache[h][i].clear();
    }

    /// `π^k_{h,i}(·|s)`: uniform for `k = 1`, else the softmax of
    /// `η_{k-1} Q̄^{k-1}(s, ·)`.
    pub fn policy(&self, h: usize, i: usize, k: usize, fmaps: &[FeatureMap], s: usize) -> Vec<f64> {
        let actions = fmaps[i].num_actions();
        if k == 1 || self.hist[h][i].theta_bars.is_empty() {
            return vec![1.0 / actions as f64; actions];
        }
        let bar = &self.hist[h][i].theta_bars[k - 2];
        let eta = self.etas[i][k - 2];
        ftrl_policy(bar, eta, &fmaps[i], s)
    }

    /// `V̂_{level,i}(s) = min{ (1/K) Σ_k <π^k(·|s), Q^k(s,·)>, H - level }`,
    /// zero at the terminal level and the optimistic `H - level` before any
    /// iteration has completed. Clipped above only; cached per state.
    pub fn value_estimate(&mut self, level: usize, i: usize, fmaps: &[FeatureMap], s: usize) -> f64 {
        if level >= self.horizon {
            return 0.0;
        }
        if let Some(&v) = self.value_cache[level][i].get(&s) {
            return v;
        }
        let cap = (self.horizon - level) as f64;
        let done = self.hist[level][i].thetas.len();
        let v = if done == 0 {
            cap
        } else {
            let fmap = &fmaps[i];
            let mut acc = 0.0;
            for k in 1..=done {
                let pi = self.policy(level, i, k, fmaps, s);
                let theta = &self.hist[level][i].thetas[k - 1];
                let q: f64 = (0..fmap.num_actions())
                    .map(|a| pi[a] * dot(fmap.phi(s, a), theta))
                    .sum();
                acc += q;
            }
            (acc / done as f64).min(cap)
        };
        self.value_cache[level][i].insert(s, v);
        v
    }

    fn set_br(&mut self, h: usize, i: usize, theta: Vec<f64>) {
        self.br_theta[h][i] = Some(theta);
        self.br_value_cache[h][i].clear();
    }

    /// Best-response coefficients learned for `(h, i)`, once single-agent
    /// learning has run there.
    pub fn br_theta(&self, h: usize, i: usize) -> Option<&[f64]> {
        self.br_theta[h][i].as_deref()
    }

    /// `V̂†_{level,i}(s) = max_a Q̂†(s,a)`; unclipped, `H - level` before the
    /// level has been learned, zero at the terminal level.
    pub fn br_value(&mut self, level: usize, i: usize, fmaps: &[FeatureMap], s: usize) -> f64 {
        if level >= self.horizon {
            return 0.0;
        }
        if let Some(&v) = self.br_value_cache[level][i].get(&s) {
            return v;
        }
        let v = match &self.br_theta[level][i] {
            None => (self.horizon - level) as f64,
            Some(theta) => {
                let fmap = &fmaps[i];
                (0..fmap.num_actions())
                    .map(|a| dot(fmap.phi(s, a), theta))
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        };
        self.br_value_cache[level][i].insert(s, v);
        v
    }

    /// The output correlation device: per step, the uniform mixture over the
    /// `K` product policies `π^k`.
    pub fn build_mixture(&self, fmaps: &[FeatureMap], action_counts: &[usize]) -> StepMixturePolicy {
        let m = fmaps.len();
        let k_total = self.k_iterations;
        let weights = vec![1.0 / k_total as f64; k_total];
        let steps = (0..self.horizon)
            .map(|h| {
                let components = (1..=k_total)
                    .map(|k| {
                        MixtureComponent(
                            (0..m)
                                .map(|i| {
                                    (0..self.num_states)
                                        .map(|s| self.policy(h, i, k, fmaps, s))
                                        .collect()
                                })
                                .collect(),
                        )
                    })
                    .collect();
                MixtureStep::new(weights.clone(), components)
            })
            .collect();
        StepMixturePolicy::new(
            self.horizon,
            m,
            self.num_states,
            action_counts.to_vec(),
            steps,
        )
        .expect("learner mixtures are valid by construction")
    }

    /// The deterministic argmax policy `π̂†_i` from the best-response
    /// coefficients (lowest action index on ties).
    pub fn best_response_policy(&self, i: usize, fmaps: &[FeatureMap]) -> AgentPolicy {
        let fmap = &fmaps[i];
        let mut actions = vec![vec![0usize; self.num_states]; self.horizon];
        for h in 0..self.horizon {
            let theta = self.br_theta[h][i]
                .as_deref()
                .expect("single-agent learning must complete before extracting its policy");
            for s in 0..self.num_states {
                let mut best = f64::NEG_INFINITY;
                let mut best_a = 0;
                for a in 0..fmap.num_actions() {
                    let q = dot(fmap.phi(s, a), theta);
                    if q > best {
                        best = q;
                        best_a = a;
                    }
                }
                actions[h][s] = best_a;
            }
        }
        AgentPolicy::deterministic(self.horizon, self.num_states, fmap.num_actions(), &actions)
    }
}

/// One FTRL sweep over every agent's core set at step `h` (`K` iterations),
/// ending with the value estimates for `h` implicitly defined by the
/// recorded coefficient history.
///
/// Returns `Restart` as soon as any sampled next state leaves the joint
/// confident set at `h+1`; the state is explored before returning, so the
/// restart strictly grows the core sets.
#[allow(clippy::too_many_arguments)]
pub fn multi_agent_learning(
    h: usize,
    sim: &mut Simulator,
    cores: &mut CoreSets,
    epoch: &mut EpochState,
    fmaps: &[FeatureMap],
    params: &LearnerParams,
    sample_counter: &mut u64,
    rng: &mut impl Rng,
) -> Result<PhaseOutcome> {
    let m = fmaps.len();
    for k in 1..=params.k {
        for i in 0..m {
            let pairs = cores.core(h, i).pairs().to_vec();
            // Opponents' π^k at each distinct core state, materialized once.
            let mut opp_dists: HashMap<usize, Vec<Vec<f64>>> = HashMap::new();
            for &(s, _) in &pairs {
                opp_dists.entry(s).or_insert_with(|| {
                    (0..m)
                        .filter(|j| *j != i)
                        .map(|j| epoch.policy(h, j, k, fmaps, s))
                        .collect()
                });
            }
            let mut targets = Vec::with_capacity(pairs.len());
            for &(s_bar, a_bar) in &pairs {
                let opp = &opp_dists[&s_bar];
                let (r, s_next) =
                    sim.local_sampling(h, i, s_bar, a_bar, &OpponentSpec::Product(opp), rng)?;
                *sample_counter += 1;
                if !cores.confident(h + 1, fmaps, s_next) {
                    cores.explore(h + 1, fmaps, s_next);
                    return Ok(PhaseOutcome::Restart { at_step: h });
                }
                targets.push(r + epoch.value_estimate(h + 1, i, fmaps, s_next));
            }
            let theta = cores.core(h, i).ridge_coefficients(&fmaps[i], &targets)?;
            epoch.push_iteration(h, i, theta);
        }
    }
    Ok(PhaseOutcome::Success)
}

/// Least-squares value iteration for agent `i`'s best response at step `h`
/// against the fixed opponent mixture: `K` samples per core pair, pooled
/// into one ridge solve (equivalently, averaged targets).
#[allow(clippy::too_many_arguments)]
pub fn single_agent_learning(
    h: usize,
    i: usize,
    mix: &StepMixturePolicy,
    sim: &mut Simulator,
    cores: &mut CoreSets,
    epoch: &mut EpochState,
    fmaps: &[FeatureMap],
    params: &LearnerParams,
    sample_counter: &mut u64,
    rng: &mut impl Rng,
) -> Result<PhaseOutcome> {
    let pairs = cores.core(h, i).pairs().to_vec();
    let mut sums = vec![0.0; pairs.len()];
    for (idx, &(s_bar, a_bar)) in pairs.iter().enumerate() {
        let spec = OpponentSpec::Mixture {
            step: mix.step(h),
            deviator: i,
            state: s_bar,
        };
        for _k in 0..params.k {
            let (r, s_next) = sim.local_sampling(h, i, s_bar, a_bar, &spec, rng)?;
            *sample_counter += 1;
            if !cores.confident(h + 1, fmaps, s_next) {
                cores.explore(h + 1, fmaps, s_next);
                return Ok(PhaseOutcome::Restart { at_step: h });
            }
            sums[idx] += r + epoch.br_value(h + 1, i, fmaps, s_next);
        }
    }
    let targets: Vec<f64> = sums.iter().map(|q| q / params.k as f64).collect();
    let theta = cores.core(h, i).ridge_coefficients(&fmaps[i], &targets)?;
    epoch.set_br(h, i, theta);
    Ok(PhaseOutcome::Success)
}

/// Roll out `N` trajectories of `mix` from the initial state, restarting on
/// the first transition that leaves the joint confident set.
pub fn policy_rollout(
    mix: &StepMixturePolicy,
    sim: &mut Simulator,
    cores: &mut CoreSets,
    fmaps: &[FeatureMap],
    n: usize,
    sample_counter: &mut u64,
    rng: &mut impl Rng,
) -> Result<PhaseOutcome> {
    let mut joint = vec![0usize; mix.num_agents()];
    for _ in 0..n {
        let mut s = sim.initial_state();
        for h in 0..mix.horizon() {
            mix.sample_joint(h, s, rng, &mut joint);
            let s_next = sim.query_next(h, s, &joint)?;
            *sample_counter += 1;
            if !cores.confident(h + 1, fmaps, s_next) {
                cores.explore(h + 1, fmaps, s_next);
                return Ok(PhaseOutcome::Restart { at_step: h });
            }
            s = s_next;
        }
    }
    Ok(PhaseOutcome::Success)
}

/// Progress record emitted once per restart.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RestartRecord {
    pub restart_index: usize,
    pub phase: Phase,
    pub at_step: usize,
    pub samples_so_far: u64,
}

/// Summary of a completed learner run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub total_samples: u64,
    pub init_samples: u64,
    pub learn_samples: u64,
    pub rollout_samples: u64,
    pub single_agent_samples: u64,
    pub final_rollout_samples: u64,
    /// The learner's own query count; must equal `total_samples`.
    pub learner_counted_samples: u64,
    pub restarts: usize,
    pub restart_budget: usize,
    pub core_sizes: Vec<Vec<usize>>,
    pub progress: Vec<RestartRecord>,
    pub protocol_violations: u64,
    /// Core-set pairs per agent, populated by the random-access learner.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub core_pairs: Option<Vec<Vec<(usize, usize)>>>,
}

impl RunReport {
    pub(crate) fn from_ledger(
        sim: &Simulator,
        learner_counted_samples: u64,
        restarts: usize,
        restart_budget: usize,
        core_sizes: Vec<Vec<usize>>,
        progress: Vec<RestartRecord>,
    ) -> Self {
        let ledger = sim.ledger();
        RunReport {
            total_samples: ledger.total_queries(),
            init_samples: ledger.phase_count(Phase::Init),
            learn_samples: ledger.phase_count(Phase::Learn),
            rollout_samples: ledger.phase_count(Phase::Rollout),
            single_agent_samples: ledger.phase_count(Phase::SingleAgent),
            final_rollout_samples: ledger.phase_count(Phase::FinalRollout),
            learner_counted_samples,
            restarts,
            restart_budget,
            core_sizes,
            progress,
            protocol_violations: ledger.violation_count(),
            core_pairs: None,
        }
    }
}

fn check_feature_maps(fmaps: &[FeatureMap], sim: &Simulator) -> Result<()> {
    let (num_states, m, _, action_counts) = sim.game_dims();
    if fmaps.len() != m {
        return Err(Error::Shape(format!(
            "{} feature maps for {m} agents",
            fmaps.len()
        )));
    }
    for (i, f) in fmaps.iter().enumerate() {
        if f.num_states() != num_states || f.num_actions() != action_counts[i] {
            return Err(Error::Shape(format!(
                "feature map {i} covers ({}, {}), game needs ({num_states}, {})",
                f.num_states(),
                f.num_actions(),
                action_counts[i]
            )));
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn note_restart(
    restarts: &mut usize,
    progress: &mut Vec<RestartRecord>,
    budget: usize,
    phase: Phase,
    at_step: usize,
    sim: &Simulator,
    cores: &CoreSets,
    pairs_before: &mut usize,
) -> Result<()> {
    *restarts += 1;
    progress.push(RestartRecord {
        restart_index: *restarts,
        phase,
        at_step,
        samples_so_far: sim.ledger().total_queries(),
    });
    log::debug!(
        "restart {} in {phase:?} at step {at_step} ({} samples, {} core pairs)",
        *restarts,
        sim.ledger().total_queries(),
        cores.total_pairs()
    );
    // Every restart must strictly grow the core sets; that is what bounds
    // the restart count.
    debug_assert!(cores.total_pairs() > *pairs_before);
    *pairs_before = cores.total_pairs();
    if *restarts > budget {
        return Err(Error::RestartBudgetExceeded {
            restarts: *restarts,
            budget,
        });
    }
    Ok(())
}

/// Run the full local-access learner and return the accepted mixture policy
/// together with its run report.
pub fn run_lin_confident_ftrl(
    sim: &mut Simulator,
    fmaps: &[FeatureMap],
    params: &LearnerParams,
    rng: &mut impl Rng,
) -> Result<(StepMixturePolicy, RunReport)> {
    params.validate()?;
    if sim.protocol() != AccessProtocol::LocalAccess {
        return Err(Error::Config(format!(
            "lin_confident_ftrl requires LocalAccess, simulator uses {:?}",
            sim.protocol()
        )));
    }
    check_feature_maps(fmaps, sim)?;
    let (num_states, m, horizon, action_counts) = sim.game_dims();
    let action_counts = action_counts.to_vec();

    let mut cores = CoreSets::new(fmaps, horizon, params.tau, params.lambda)?;
    let mut counted: u64 = 0;

    // Initialization: one uniform-policy trajectory, explored step by step.
    sim.set_phase(Phase::Init);
    let mut s = sim.initial_state();
    for h in 0..horizon {
        cores.explore(h, fmaps, s);
        let joint: Vec<usize> = action_counts.iter().map(|&a| rng.gen_range(0..a)).collect();
        s = sim.query_next(h, s, &joint)?;
        counted += 1;
    }

    let mut restarts = 0usize;
    let mut progress = Vec::new();
    let mut pairs_before = cores.total_pairs();

    'epoch: loop {
        let mut epoch = EpochState::new(params, fmaps, num_states, horizon);

        sim.set_phase(Phase::Learn);
        for h in (0..horizon).rev() {
            if let PhaseOutcome::Restart { at_step } = multi_agent_learning(
                h,
                sim,
                &mut cores,
                &mut epoch,
                fmaps,
                params,
                &mut counted,
                rng,
            )? {
                note_restart(
                    &mut restarts,
                    &mut progress,
                    params.restart_budget,
                    Phase::Learn,
                    at_step,
                    sim,
                    &cores,
                    &mut pairs_before,
                )?;
                continue 'epoch;
            }
        }

        let mix = epoch.build_mixture(fmaps, &action_counts);

        sim.set_phase(Phase::Rollout);
        if let PhaseOutcome::Restart { at_step } = policy_rollout(
            &mix,
            sim,
            &mut cores,
            fmaps,
            params.n_rollout,
            &mut counted,
            rng,
        )? {
            note_restart(
                &mut restarts,
                &mut progress,
                params.restart_budget,
                Phase::Rollout,
                at_step,
                sim,
                &cores,
                &mut pairs_before,
            )?;
            continue 'epoch;
        }

        sim.set_phase(Phase::SingleAgent);
        for i in 0..m {
            for h in (0..horizon).rev() {
                if let PhaseOutcome::Restart { at_step } = single_agent_learning(
                    h,
                    i,
                    &mix,
                    sim,
                    &mut cores,
                    &mut epoch,
                    fmaps,
                    params,
                    &mut counted,
                    rng,
                )? {
                    note_restart(
                        &mut restarts,
                        &mut progress,
                        params.restart_budget,
                        Phase::SingleAgent,
                        at_step,
                        sim,
                        &cores,
                        &mut pairs_before,
                    )?;
                    continue 'epoch;
                }
            }
        }

        sim.set_phase(Phase::FinalRollout);
        for i in 0..m {
            let deviation = mix.with_agent_replaced(i, &epoch.best_response_policy(i, fmaps));
            if let PhaseOutcome::Restart { at_step } = policy_rollout(
                &deviation,
                sim,
                &mut cores,
                fmaps,
                params.n_rollout,
                &mut counted,
                rng,
            )? {
                note_restart(
                    &mut restarts,
                    &mut progress,
                    params.restart_budget,
                    Phase::FinalRollout,
                    at_step,
                    sim,
                    &cores,
                    &mut pairs_before,
                )?;
                continue 'epoch;
            }
        }

        let report = RunReport::from_ledger(
            sim,
            counted,
            restarts,
            params.restart_budget,
            cores.sizes(),
            progress,
        );
        return Ok((mix, report));
    }
}
