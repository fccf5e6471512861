//! The random-access (generative-model) learner.
//!
//! With arbitrary state-action queries available, each agent selects one
//! core set `D_i` upfront that covers *every* `(s, a)` pair up to the
//! threshold `τ`, shared across all steps. A single backward pass over
//! `h = H-1 .. 0` then runs `K` sampling/regression rounds per step with no
//! rollout phase and no restarts: nothing outside the covered region can
//! ever be met.
//!
//! Per round the fresh ridge solution `θ^k` is folded into a Polyak-style
//! blend `θ̂^k = (1-α_k) θ̂^{k-1} + α_k θ^k` (with `θ̂^0 = 0` and `α_1 = 1`),
//! the next policy is the softmax of the blended estimate, and the output
//! mixes the policy sequence with the weights `α_i^K` induced by the
//! learning-rate schedule. The uniform-averaging schedule `α_k = 1/k`
//! reproduces the local-access learner's running averages exactly; the
//! schedule `α_k = c_α ln K / (k - 1 + c_α ln K)` with one-hot features and
//! an optional count-based bonus `β` recovers the classic tabular setup.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coreset::CoreSet;
use crate::features::FeatureMap;
use crate::ftrl::{ftrl_policy, ftrl_step_size, gamma_hat_for, LearnerParams, RunReport};
use crate::linalg::dot;
use crate::policy::{MixtureComponent, MixtureStep, StepMixturePolicy};
use crate::sim::{AccessProtocol, OpponentSpec, Phase, Simulator};
use crate::{Error, Result};

/// Exploration bonus mode for the value estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BonusMode {
    /// `β = 0`; the plain linear-mode default.
    Zero,
    /// The tabular count-based bonus with constant `c_b`; requires one-hot
    /// features.
    Tabular { c_b: f64 },
}

/// Parameters of the random-access learner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RAParams {
    /// Sampling/regression rounds per step.
    pub k: usize,
    pub tau: f64,
    pub lambda: f64,
    pub delta: f64,
    /// Learning-rate schedule `α_1..α_K` with `α_1 = 1`.
    pub alpha: Vec<f64>,
    /// Optional shared FTRL schedule `η_2..η_{K+1}`; by default each agent
    /// uses [`ftrl_step_size`] evaluated at `k + 1`.
    pub eta_override: Option<Vec<f64>>,
    pub bonus: BonusMode,
    pub c_eta: f64,
    pub gamma_hat: Option<f64>,
}

impl RAParams {
    /// Uniform averaging schedule `α_k = 1/k`.
    pub fn averaging(k: usize, tau: f64, lambda: f64, delta: f64) -> Self {
        RAParams {
            k,
            tau,
            lambda,
            delta,
            alpha: (1..=k).map(|j| 1.0 / j as f64).collect(),
            eta_override: None,
            bonus: BonusMode::Zero,
            c_eta: 2.0,
            gamma_hat: None,
        }
    }

    /// The tabular instantiation: `τ = 1`, vanishing ridge, the
    /// `c_α ln K / (k - 1 + c_α ln K)` schedule and a count-based bonus.
    pub fn tabular(k: usize, delta: f64, c_alpha: f64, c_b: f64) -> Self {
        let log_k = (k as f64).ln();
        let alpha = (1..=k)
            .map(|j| {
                if j == 1 {
                    1.0
                } else {
                    c_alpha * log_k / ((j - 1) as f64 + c_alpha * log_k)
                }
            })
            .collect();
        RAParams {
            k,
            tau: 1.0,
            lambda: 1e-8,
            delta,
            alpha,
            eta_override: None,
            bonus: BonusMode::Tabular { c_b },
            c_eta: 2.0,
            gamma_hat: None,
        }
    }

    /// Regime defaults mirroring the local-access learner's `K`/`τ` split.
    pub fn regime_defaults(
        num_states: usize,
        horizon: usize,
        dim: usize,
        max_actions: usize,
        epsilon: f64,
        delta: f64,
    ) -> Result<Self> {
        let base = LearnerParams::regime_defaults(
            num_states,
            horizon,
            1,
            dim,
            max_actions,
            epsilon,
            delta,
            1.0,
            1.0,
        )?;
        Ok(RAParams::averaging(base.k, base.tau, base.lambda, delta))
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::NonPositive("k"));
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
        if self.c_eta <= 0.0 {
            return Err(Error::NonPositive("c_eta"));
        }
        if self.alpha.len() != self.k {
            return Err(Error::Config(format!(
                "alpha schedule has {} entries for K = {}",
                self.alpha.len(),
                self.k
            )));
        }
        if self.alpha[0] != 1.0 {
            return Err(Error::Config("alpha schedule must start at 1".into()));
        }
        if self.alpha.iter().any(|&a| a <= 0.0 || a > 1.0) {
            return Err(Error::Config("alpha entries must lie in (0, 1]".into()));
        }
        if let Some(etas) = &self.eta_override {
            if etas.len() != self.k {
                return Err(Error::Config(format!(
                    "eta schedule has {} entries for K = {}",
                    etas.len(),
                    self.k
                )));
            }
        }
        if let BonusMode::Tabular { c_b } = self.bonus {
            if c_b < 0.0 {
                return Err(Error::NonPositive("c_b"));
            }
        }
        let weights = mixture_weights(&self.alpha)?;
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("mixture weights sum to {sum}")));
        }
        Ok(())
    }
}

/// The mixture weights `α_i^K` induced by a learning-rate schedule:
/// `α_i^K = α_i Π_{j=i+1}^K (1 - α_j)` for `i < K` and `α_K^K = α_K`.
pub fn mixture_weights(alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::NonPositive("alpha"));
    }
    if alpha[0] != 1.0 {
        return Err(Error::Config("alpha schedule must start at 1".into()));
    }
    let k = alpha.len();
    let mut weights = vec![0.0; k];
    weights[k - 1] = alpha[k - 1];
    let mut tail = 1.0;
    for i in (0..k - 1).rev() {
        tail *= 1.0 - alpha[i + 1];
        weights[i] = alpha[i] * tail;
    }
    Ok(weights)
}

/// Greedily select one core set per agent covering every `(s, a)` pair:
/// add the globally most uncertain pair (lowest flattened index on ties)
/// until `max_{s,a} φ(s,a)^T Λ^{-1} φ(s,a) <= τ`.
pub fn select_core_sets(fmaps: &[FeatureMap], tau: f64, lambda: f64) -> Result<Vec<CoreSet>> {
    let mut out = Vec::with_capacity(fmaps.len());
    for fmap in fmaps {
        let mut core = CoreSet::new(fmap.dim(), tau, lambda)?;
        loop {
            let mut best = f64::NEG_INFINITY;
            let mut best_pair = (0, 0);
            for s in 0..fmap.num_states() {
                for a in 0..fmap.num_actions() {
                    let u = core.action_uncertainty(fmap, s, a);
                    if u > best {
                        best = u;
                        best_pair = (s, a);
                    }
                }
            }
            if best <= tau {
                break;
            }
            core.add_pair(fmap, best_pair.0, best_pair.1);
        }
        out.push(core);
    }
    Ok(out)
}

/// The tabular exploration bonus for one `(h, i, s)`:
/// `c_b sqrt(ln³(K·S·Σ_i A_i / δ) / (K·H)) · Σ_k α_k^K (Var_k + H)`
/// where `Var_k` is the variance of the k-th round's value targets at `s`
/// under `π^k(·|s)`.
#[allow(clippy::too_many_arguments)]
pub fn tabular_bonus(
    k_rounds: usize,
    horizon: usize,
    delta: f64,
    num_states: usize,
    action_sum: usize,
    c_b: f64,
    weights: &[f64],
    variances: &[f64],
) -> f64 {
    debug_assert_eq!(weights.len(), variances.len());
    let log_term = ((k_rounds * num_states * action_sum) as f64 / delta).ln();
    let coefficient = (log_term.powi(3) / (k_rounds as f64 * horizon as f64)).sqrt();
    let weighted: f64 = weights
        .iter()
        .zip(variances)
        .map(|(&w, &v)| w * (v + horizon as f64))
        .sum();
    c_b * coefficient * weighted
}

struct RaAgentLevel {
    thetas: Vec<Vec<f64>>,
    blends: Vec<Vec<f64>>,
}

/// Learner state of the random-access pass: per `(h, i)` the raw regression
/// coefficients `θ^k`, their blended versions `θ̂^k`, and lazily
/// materialized value estimates.
pub struct RaState {
    horizon: usize,
    num_states: usize,
    k_rounds: usize,
    alpha: Vec<f64>,
    weights: Vec<f64>,
    bonus: BonusMode,
    delta: f64,
    action_sum: usize,
    hist: Vec<Vec<RaAgentLevel>>,
    /// Per agent: `η_{k+1}` for `k = 1..=K` (index `k-1`).
    etas: Vec<Vec<f64>>,
    value_cache: Vec<Vec<HashMap<usize, f64>>>,
}

impl RaState {
    pub fn new(
        params: &RAParams,
        fmaps: &[FeatureMap],
        num_states: usize,
        horizon: usize,
    ) -> Result<Self> {
        params.validate()?;
        let m = fmaps.len();
        let proxy = LearnerParams {
            k: params.k,
            n_rollout: 1,
            tau: params.tau,
            lambda: params.lambda,
            delta: params.delta,
            epsilon: 1.0,
            c_eta: params.c_eta,
            gamma_hat: params.gamma_hat,
            restart_budget: 1,
        };
        let etas = fmaps
            .iter()
            .map(|f| match &params.eta_override {
                Some(etas) => etas.clone(),
                None => {
                    let gamma = gamma_hat_for(&proxy, f, num_states);
                    (1..=params.k)
                        .map(|k| {
                            ftrl_step_size(
                                k + 1,
                                params.k,
                                f.num_actions(),
                                horizon,
                                gamma,
                                params.c_eta,
                            )
                        })
                        .collect()
                }
            })
            .collect();
        Ok(RaState {
            horizon,
            num_states,
            k_rounds: params.k,
            alpha: params.alpha.clone(),
            weights: mixture_weights(&params.alpha)?,
            bonus: params.bonus,
            delta: params.delta,
            action_sum: fmaps.iter().map(FeatureMap::num_actions).sum(),
            hist: (0..horizon)
                .map(|_| {
                    (0..m)
                        .map(|_| RaAgentLevel {
                            thetas: Vec::new(),
                            blends: Vec::new(),
                        })
                        .collect()
                })
                .collect(),
            etas,
            value_cache: vec![vec![HashMap::new(); m]; horizon],
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn theta(&self, h: usize, i: usize, k: usize) -> &[f64] {
        &self.hist[h][i].thetas[k - 1]
    }

    /// Blended coefficients `θ̂^k`.
    pub fn blend(&self, h: usize, i: usize, k: usize) -> &[f64] {
        &self.hist[h][i].blends[k - 1]
    }

    fn push(&mut self, h: usize, i: usize, theta: Vec<f64>) {
        let level = &mut self.hist[h][i];
        let k = level.thetas.len() + 1;
        let a = self.alpha[k - 1];
        let blend = if k == 1 {
            // θ̂^0 = 0 and α_1 = 1, so the first blend is θ^1 itself.
            theta.iter().map(|t| a * t).collect()
        } else {
            level.blends[k - 2]
                .iter()
                .zip(&theta)
                .map(|(b, t)| (1.0 - a) * b + a * t)
                .collect()
        };
        level.thetas.push(theta);
        level.blends.push(blend);
        self.value_cache[h][i].clear();
    }

    /// `π^k_{h,i}(·|s)`: uniform for `k = 1`, else the softmax of
    /// `η_k · φ(s,·)^T θ̂^{k-1}`.
    pub fn policy(&self, h: usize, i: usize, k: usize, fmaps: &[FeatureMap], s: usize) -> Vec<f64> {
        let actions = fmaps[i].num_actions();
        if k == 1 || self.hist[h][i].blends.is_empty() {
            return vec![1.0 / actions as f64; actions];
        }
        // η_k is stored at index k-2: the schedule lists η_2..η_{K+1}.
        let eta = self.etas[i][k - 2];
        ftrl_policy(&self.hist[h][i].blends[k - 2], eta, &fmaps[i], s)
    }

    /// `V̂_{level,i}(s) = min{ Σ_k α_k^K <π^k(·|s), q^k(s,·)> + β(s), H - level }`
    /// with `q^k(s,·)` the k-th round's regression estimate `φ(s,·)^T θ^k`.
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
            let mut variances = vec![0.0; done];
            for k in 1..=done {
                let pi = self.policy(level, i, k, fmaps, s);
                let theta = &self.hist[level][i].thetas[k - 1];
                let mut mean = 0.0;
                let mut mean_sq = 0.0;
                for (a, &p) in pi.iter().enumerate() {
                    let q = dot(fmap.phi(s, a), theta);
                    mean += p * q;
                    mean_sq += p * q * q;
                }
                acc += self.weights[k - 1] * mean;
                variances[k - 1] = (mean_sq - mean * mean).max(0.0);
            }
            let beta = match self.bonus {
                BonusMode::Zero => 0.0,
                BonusMode::Tabular { c_b } => tabular_bonus(
                    self.k_rounds,
                    self.horizon,
                    self.delta,
                    self.num_states,
                    self.action_sum,
                    c_b,
                    &self.weights[..done],
                    &variances,
                ),
            };
            (acc + beta).min(cap)
        };
        self.value_cache[level][i].insert(s, v);
        v
    }

    /// Output device: per step, the `α_i^K`-weighted mixture of the policy
    /// sequence.
    pub fn build_mixture(&self, fmaps: &[FeatureMap], action_counts: &[usize]) -> StepMixturePolicy {
        let m = fmaps.len();
        let steps = (0..self.horizon)
            .map(|h| {
                let components = (1..=self.k_rounds)
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
                MixtureStep::new(self.weights.clone(), components)
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
}

/// Run the random-access learner; also returns the final [`RaState`] so the
/// learned coefficients can be inspected.
pub fn run_random_access_full(
    sim: &mut Simulator,
    fmaps: &[FeatureMap],
    params: &RAParams,
    rng: &mut impl Rng,
) -> Result<(StepMixturePolicy, RunReport, RaState)> {
    params.validate()?;
    if sim.protocol() != AccessProtocol::RandomAccess {
        return Err(Error::Config(format!(
            "random_access requires RandomAccess, simulator uses {:?}",
            sim.protocol()
        )));
    }
    let (num_states, m, horizon, action_counts) = sim.game_dims();
    let action_counts = action_counts.to_vec();
    if fmaps.len() != m {
        return Err(Error::Shape(format!(
            "{} feature maps for {m} agents",
            fmaps.len()
        )));
    }
    if matches!(params.bonus, BonusMode::Tabular { .. }) && !fmaps.iter().all(FeatureMap::is_one_hot)
    {
        return Err(Error::Config(
            "the tabular bonus requires one-hot features".into(),
        ));
    }

    let cores = select_core_sets(fmaps, params.tau, params.lambda)?;
    let mut state = RaState::new(params, fmaps, num_states, horizon)?;
    let mut counted: u64 = 0;

    sim.set_phase(Phase::Learn);
    for h in (0..horizon).rev() {
        for k in 1..=params.k {
            for i in 0..m {
                let pairs = cores[i].pairs().to_vec();
                let mut opp_dists: HashMap<usize, Vec<Vec<f64>>> = HashMap::new();
                for &(s, _) in &pairs {
                    opp_dists.entry(s).or_insert_with(|| {
                        (0..m)
                            .filter(|j| *j != i)
                            .map(|j| state.policy(h, j, k, fmaps, s))
                            .collect()
                    });
                }
                let mut targets = Vec::with_capacity(pairs.len());
                for &(s_bar, a_bar) in &pairs {
                    let opp = &opp_dists[&s_bar];
                    let (r, s_next) =
                        sim.local_sampling(h, i, s_bar, a_bar, &OpponentSpec::Product(opp), rng)?;
                    counted += 1;
                    targets.push(r + state.value_estimate(h + 1, i, fmaps, s_next));
                }
                let theta = cores[i].ridge_coefficients(&fmaps[i], &targets)?;
                state.push(h, i, theta);
            }
        }
    }

    let mixture = state.build_mixture(fmaps, &action_counts);
    let sizes: Vec<usize> = cores.iter().map(CoreSet::len).collect();
    let mut report = RunReport::from_ledger(
        sim,
        counted,
        0,
        0,
        vec![sizes; horizon],
        Vec::new(),
    );
    report.core_pairs = Some(cores.iter().map(|c| c.pairs().to_vec()).collect());
    Ok((mixture, report, state))
}

/// Run the random-access learner.
pub fn run_random_access(
    sim: &mut Simulator,
    fmaps: &[FeatureMap],
    params: &RAParams,
    rng: &mut impl Rng,
) -> Result<(StepMixturePolicy, RunReport)> {
    run_random_access_full(sim, fmaps, params, rng).map(|(mix, report, _)| (mix, report))
}
