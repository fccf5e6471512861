//! Markov policies: per-agent product policies and the weighted
//! mixture-of-products policies the learners output.
//!
//! A [`StepMixturePolicy`] is the joint policy induced by a per-step
//! correlation device: at every step `h` a component index `k` is drawn from
//! the step's weights, and then each agent independently plays its own slice
//! `π^k_{h,i}(·|s)`. Drawing `k` afresh at every step is what makes the
//! device Markov; agents never observe `k`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::game::{decode_index, MarkovGame};
use crate::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-12;

fn check_simplex(probs: &[f64], what: &str) -> Result<()> {
    if probs.iter().any(|&p| p < 0.0) {
        return Err(Error::Shape(format!("{what}: negative probability")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Shape(format!("{what}: probabilities sum to {sum}")));
    }
    Ok(())
}

/// Draw an index from a probability vector.
pub fn sample_categorical(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    index_from_uniform(u, probs)
}

/// Map a uniform draw in `[0, 1)` to an index by inverse CDF.
pub fn index_from_uniform(u: f64, probs: &[f64]) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// A product Markov policy: one distribution over own actions per
/// `(step, agent, state)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductPolicy {
    horizon: usize,
    num_agents: usize,
    num_states: usize,
    action_counts: Vec<usize>,
    /// `[(h * m + i) * S + s]` -> probability vector over `A_i`.
    probs: Vec<Vec<f64>>,
}

impl ProductPolicy {
    /// The uniform product policy `π_{h,i}(·|s) = Unif(A_i)`.
    pub fn uniform(game: &MarkovGame) -> Self {
        let mut probs =
            Vec::with_capacity(game.horizon() * game.num_agents() * game.num_states());
        for _h in 0..game.horizon() {
            for i in 0..game.num_agents() {
                let a = game.action_counts()[i];
                for _s in 0..game.num_states() {
                    probs.push(vec![1.0 / a as f64; a]);
                }
            }
        }
        ProductPolicy {
            horizon: game.horizon(),
            num_agents: game.num_agents(),
            num_states: game.num_states(),
            action_counts: game.action_counts().to_vec(),
            probs,
        }
    }

    pub fn probs(&self, h: usize, i: usize, s: usize) -> &[f64] {
        &self.probs[(h * self.num_agents + i) * self.num_states + s]
    }

    pub fn set_probs(&mut self, h: usize, i: usize, s: usize, p: Vec<f64>) -> Result<()> {
        if p.len() != self.action_counts[i] {
            return Err(Error::Shape(format!(
                "expected {} action probabilities for agent {i}",
                self.action_counts[i]
            )));
        }
        check_simplex(&p, "product policy entry")?;
        self.probs[(h * self.num_agents + i) * self.num_states + s] = p;
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }
}

/// A single agent's Markov policy, used for best responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPolicy {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    /// `[h * S + s]` -> distribution over own actions.
    probs: Vec<Vec<f64>>,
}

impl AgentPolicy {
    pub fn new(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        AgentPolicy {
            horizon,
            num_states,
            num_actions,
            probs: vec![vec![1.0 / num_actions as f64; num_actions]; horizon * num_states],
        }
    }

    /// Deterministic policy that plays `action[h][s]`.
    pub fn deterministic(horizon: usize, num_states: usize, num_actions: usize, action: &[Vec<usize>]) -> Self {
        let mut p = AgentPolicy::new(horizon, num_states, num_actions);
        for h in 0..horizon {
            for s in 0..num_states {
                let mut row = vec![0.0; num_actions];
                row[action[h][s]] = 1.0;
                p.probs[h * num_states + s] = row;
            }
        }
        p
    }

    pub fn probs(&self, h: usize, s: usize) -> &[f64] {
        &self.probs[h * self.num_states + s]
    }

    pub fn set_probs(&mut self, h: usize, s: usize, p: Vec<f64>) {
        debug_assert_eq!(p.len(), self.num_actions);
        self.probs[h * self.num_states + s] = p;
    }
}

/// One mixture component for a single step: `[agent][state]` -> distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MixtureComponent(pub Vec<Vec<Vec<f64>>>);

impl MixtureComponent {
    pub fn probs(&self, i: usize, s: usize) -> &[f64] {
        &self.0[i][s]
    }
}

#[derive(Serialize, Deserialize)]
struct MixtureStepData {
    weights: Vec<f64>,
    components: Vec<MixtureComponent>,
}

/// Weights and `K` product-policy slices for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "MixtureStepData", into = "MixtureStepData")]
pub struct MixtureStep {
    weights: Vec<f64>,
    components: Vec<MixtureComponent>,
    /// Cumulative weights for O(log K) component draws.
    cumulative: Vec<f64>,
}

impl MixtureStep {
    pub fn new(weights: Vec<f64>, components: Vec<MixtureComponent>) -> Self {
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for &w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        MixtureStep {
            weights,
            components,
            cumulative,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn component_probs(&self, k: usize, i: usize, s: usize) -> &[f64] {
        self.components[k].probs(i, s)
    }

    /// Draw a component index from the step weights.
    pub fn sample_component(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
        match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&u).unwrap())
        {
            Ok(idx) | Err(idx) => idx.min(self.components.len() - 1),
        }
    }
}

impl From<MixtureStepData> for MixtureStep {
    fn from(d: MixtureStepData) -> Self {
        MixtureStep::new(d.weights, d.components)
    }
}

impl From<MixtureStep> for MixtureStepData {
    fn from(s: MixtureStep) -> Self {
        MixtureStepData {
            weights: s.weights,
            components: s.components,
        }
    }
}

/// A per-step weighted mixture of product policies: the correlation device
/// output by the learners and the object the oracle evaluates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMixturePolicy {
    #[serde(rename = "H")]
    horizon: usize,
    #[serde(rename = "m")]
    num_agents: usize,
    #[serde(rename = "S")]
    num_states: usize,
    #[serde(rename = "A")]
    action_counts: Vec<usize>,
    steps: Vec<MixtureStep>,
}

impl StepMixturePolicy {
    pub fn new(
        horizon: usize,
        num_agents: usize,
        num_states: usize,
        action_counts: Vec<usize>,
        steps: Vec<MixtureStep>,
    ) -> Result<Self> {
        let out = StepMixturePolicy {
            horizon,
            num_agents,
            num_states,
            action_counts,
            steps,
        };
        out.validate()?;
        Ok(out)
    }

    /// Wrap a product policy as a one-component mixture.
    pub fn from_product(p: &ProductPolicy) -> Self {
        let steps = (0..p.horizon)
            .map(|h| {
                let comp = MixtureComponent(
                    (0..p.num_agents)
                        .map(|i| {
                            (0..p.num_states)
                                .map(|s| p.probs(h, i, s).to_vec())
                                .collect()
                        })
                        .collect(),
                );
                MixtureStep::new(vec![1.0], vec![comp])
            })
            .collect();
        StepMixturePolicy {
            horizon: p.horizon,
            num_agents: p.num_agents,
            num_states: p.num_states,
            action_counts: p.action_counts.clone(),
            steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.len() != self.horizon {
            return Err(Error::Shape(format!(
                "mixture has {} steps, horizon is {}",
                self.steps.len(),
                self.horizon
            )));
        }
        for (h, step) in self.steps.iter().enumerate() {
            if step.components.is_empty() || step.weights.len() != step.components.len() {
                return Err(Error::Shape(format!(
                    "step {h}: need K >= 1 weights matching components"
                )));
            }
            check_simplex(&step.weights, &format!("step {h} weights"))?;
            for comp in &step.components {
                if comp.0.len() != self.num_agents {
                    return Err(Error::Shape(format!("step {h}: wrong agent count")));
                }
                for (i, per_state) in comp.0.iter().enumerate() {
                    if per_state.len() != self.num_states {
                        return Err(Error::Shape(format!("step {h}: wrong state count")));
                    }
                    for probs in per_state {
                        if probs.len() != self.action_counts[i] {
                            return Err(Error::Shape(format!(
                                "step {h}: agent {i} has wrong action count"
                            )));
                        }
                        check_simplex(probs, &format!("step {h} agent {i}"))?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn step(&self, h: usize) -> &MixtureStep {
        &self.steps[h]
    }

    fn check_range(&self, h: usize, s: usize) -> Result<()> {
        if h >= self.horizon || s >= self.num_states {
            return Err(Error::Shape(format!(
                "(h = {h}, s = {s}) out of range for H = {}, S = {}",
                self.horizon, self.num_states
            )));
        }
        Ok(())
    }

    /// The correlated distribution over joint actions at `(h, s)`:
    /// `Σ_k w_k Π_i π^k_{h,i}(a_i | s)`.
    pub fn joint_action_distribution(&self, h: usize, s: usize) -> Result<Vec<f64>> {
        self.check_range(h, s)?;
        let step = &self.steps[h];
        let total: usize = self.action_counts.iter().product();
        let mut out = vec![0.0; total];
        let mut idx = vec![0usize; self.num_agents];
        for (k, comp) in step.components.iter().enumerate() {
            let w = step.weights[k];
            if w == 0.0 {
                continue;
            }
            for (joint, slot) in out.iter_mut().enumerate() {
                decode_index(&self.action_counts, joint, &mut idx);
                let mut p = w;
                for (i, &a) in idx.iter().enumerate() {
                    p *= comp.probs(i, s)[a];
                }
                *slot += p;
            }
        }
        Ok(out)
    }

    /// The distribution over opponents' joint actions `a_{-i}` faced by a
    /// deviating agent `i` at `(h, s)`. In general this is a mixture of
    /// products, not itself a product.
    pub fn opponent_marginal(&self, h: usize, s: usize, i: usize) -> Result<Vec<f64>> {
        self.check_range(h, s)?;
        if i >= self.num_agents {
            return Err(Error::Shape(format!("agent {i} out of range")));
        }
        let step = &self.steps[h];
        let rest_dims: Vec<usize> = self
            .action_counts
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, &a)| a)
            .collect();
        let total: usize = rest_dims.iter().product::<usize>().max(1);
        let mut out = vec![0.0; total];
        let mut idx = vec![0usize; rest_dims.len()];
        for (k, comp) in step.components.iter().enumerate() {
            let w = step.weights[k];
            if w == 0.0 {
                continue;
            }
            for (joint, slot) in out.iter_mut().enumerate() {
                decode_index(&rest_dims, joint, &mut idx);
                let mut p = w;
                let mut pos = 0;
                for j in 0..self.num_agents {
                    if j == i {
                        continue;
                    }
                    p *= comp.probs(j, s)[idx[pos]];
                    pos += 1;
                }
                *slot += p;
            }
        }
        Ok(out)
    }

    /// Agent `i`'s own marginal at `(h, s)`: `Σ_k w_k π^k_{h,i}(·|s)`.
    pub fn agent_marginal(&self, h: usize, s: usize, i: usize) -> Vec<f64> {
        let step = &self.steps[h];
        let mut out = vec![0.0; self.action_counts[i]];
        for (k, comp) in step.components.iter().enumerate() {
            let w = step.weights[k];
            for (slot, &p) in out.iter_mut().zip(comp.probs(i, s)) {
                *slot += w * p;
            }
        }
        out
    }

    /// Draw a joint action from the correlation device at `(h, s)`.
    pub fn sample_joint(&self, h: usize, s: usize, rng: &mut impl Rng, out: &mut [usize]) {
        let step = &self.steps[h];
        let k = step.sample_component(rng);
        for i in 0..self.num_agents {
            out[i] = sample_categorical(rng, step.component_probs(k, i, s));
        }
    }

    /// The deviation policy `π'_i × π_{-i}`: every component keeps the
    /// opponents' slices while agent `i`'s slice is replaced by `p` in all
    /// components.
    pub fn with_agent_replaced(&self, i: usize, p: &AgentPolicy) -> StepMixturePolicy {
        let mut out = self.clone();
        for (h, step) in out.steps.iter_mut().enumerate() {
            for comp in &mut step.components {
                for s in 0..self.num_states {
                    comp.0[i][s] = p.probs(h, s).to_vec();
                }
            }
        }
        out
    }
}
