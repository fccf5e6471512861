//! Game generators, experiment configuration, seeded runs and sweeps.
//!
//! A run is fully determined by `(config, seed)`: the learner RNG and the
//! simulator stream are both derived from the run seed, so repeated
//! invocations reproduce every record field except wall time.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::FeatureMap;
use crate::ftrl::{run_lin_confident_ftrl, LearnerParams};
use crate::game::MarkovGame;
use crate::oracle::cce_gap;
use crate::random_access::{run_random_access, RAParams};
use crate::sim::{mix_seed, AccessProtocol, Simulator};
use crate::{Error, Result};

const SIM_STREAM: u64 = 0x5349_4D53;
const RNG_STREAM: u64 = 0x524E_4753;

/// Random tabular game: normalized positive transition rows, uniform
/// rewards in `[0, 1]`, deterministic per seed.
pub fn generate_random_tabular(
    num_states: usize,
    num_agents: usize,
    action_counts: &[usize],
    horizon: usize,
    seed: u64,
) -> MarkovGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ja: usize = action_counts.iter().product();
    let mut transition = Vec::with_capacity(horizon * num_states * ja * num_states);
    for _ in 0..horizon * num_states * ja {
        let row: Vec<f64> = (0..num_states).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = row.iter().sum();
        transition.extend(row.iter().map(|x| x / total));
    }
    let reward: Vec<f64> = (0..horizon * num_agents * num_states * ja)
        .map(|_| rng.gen::<f64>())
        .collect();
    MarkovGame::new(
        num_states,
        num_agents,
        horizon,
        action_counts.to_vec(),
        0,
        transition,
        reward,
    )
    .expect("generated games are valid by construction")
}

/// Single-state repeated matrix game. `payoffs[i]` is the `A_1 × A_2` payoff
/// matrix of agent `i` for two agents; a single agent uses column matrices
/// (`A_1 × 1`).
pub fn matrix_game(payoffs: &[Vec<Vec<f64>>], horizon: usize) -> Result<MarkovGame> {
    let m = payoffs.len();
    if m == 0 || m > 2 {
        return Err(Error::Config(format!(
            "matrix_game supports 1 or 2 agents, got {m}"
        )));
    }
    let a1 = payoffs[0].len();
    let a2 = payoffs[0].first().map_or(0, Vec::len);
    if a1 == 0 || a2 == 0 {
        return Err(Error::Config("empty payoff matrix".into()));
    }
    for p in payoffs {
        if p.len() != a1 || p.iter().any(|row| row.len() != a2) {
            return Err(Error::Config("ragged payoff matrices".into()));
        }
    }
    if m == 1 && a2 != 1 {
        return Err(Error::Config(
            "single-agent payoffs must be column matrices".into(),
        ));
    }
    let action_counts = if m == 2 { vec![a1, a2] } else { vec![a1] };
    let ja = a1 * if m == 2 { a2 } else { 1 };
    let transition = vec![1.0; horizon * ja];
    let mut reward = Vec::with_capacity(horizon * m * ja);
    for _h in 0..horizon {
        for p in payoffs {
            for row in p {
                for &v in row.iter().take(if m == 2 { a2 } else { 1 }) {
                    reward.push(v);
                }
            }
        }
    }
    MarkovGame::new(1, m, horizon, action_counts, 0, transition, reward)
}

/// Matching pennies in `[0, 1]`: agent 0 wants to match, agent 1 to
/// mismatch.
pub fn matching_pennies(horizon: usize) -> MarkovGame {
    let payoffs = vec![
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![vec![0.0, 1.0], vec![1.0, 0.0]],
    ];
    matrix_game(&payoffs, horizon).unwrap()
}

/// Prisoner's dilemma scaled into `[0, 1]`; defection is dominant.
pub fn prisoners_dilemma(horizon: usize) -> MarkovGame {
    let payoffs = vec![
        vec![vec![0.6, 0.0], vec![1.0, 0.2]],
        vec![vec![0.6, 1.0], vec![0.0, 0.2]],
    ];
    matrix_game(&payoffs, horizon).unwrap()
}

/// Single-agent, single-action chain that deterministically advances toward
/// the last state, with step- and state-dependent rewards.
pub fn chain_game(num_states: usize, horizon: usize) -> MarkovGame {
    let mut transition = Vec::with_capacity(horizon * num_states * num_states);
    let mut reward = Vec::with_capacity(horizon * num_states);
    for _h in 0..horizon {
        for s in 0..num_states {
            let mut row = vec![0.0; num_states];
            row[(s + 1).min(num_states - 1)] = 1.0;
            transition.extend(row);
        }
    }
    for h in 0..horizon {
        for s in 0..num_states {
            reward.push(((3 * s + 2 * h + 1) % 10) as f64 / 10.0);
        }
    }
    MarkovGame::new(num_states, 1, horizon, vec![1], 0, transition, reward)
        .expect("chain games are valid by construction")
}

/// Where the game comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GameSource {
    Inline { game: MarkovGame },
    File { path: String },
    Generator { generator: GeneratorSpec },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    RandomTabular {
        s: usize,
        m: usize,
        a: Vec<usize>,
        h: usize,
        seed: u64,
    },
    MatrixGame {
        payoffs: Vec<Vec<Vec<f64>>>,
        #[serde(default = "default_horizon")]
        h: usize,
    },
    Chain {
        s: usize,
        h: usize,
    },
}

fn default_horizon() -> usize {
    1
}

impl GeneratorSpec {
    pub fn build(&self) -> Result<MarkovGame> {
        match self {
            GeneratorSpec::RandomTabular { s, m, a, h, seed } => {
                if *s == 0 || *m == 0 || *h == 0 || a.len() != *m || a.contains(&0) {
                    return Err(Error::Config(
                        "random_tabular requires positive sizes and one action count per agent"
                            .into(),
                    ));
                }
                Ok(generate_random_tabular(*s, *m, a, *h, *seed))
            }
            GeneratorSpec::MatrixGame { payoffs, h } => matrix_game(payoffs, *h),
            GeneratorSpec::Chain { s, h } => {
                if *s == 0 || *h == 0 {
                    return Err(Error::Config("chain requires positive sizes".into()));
                }
                Ok(chain_game(*s, *h))
            }
        }
    }
}

/// Per-agent feature maps.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    #[default]
    OneHot,
    Files {
        paths: Vec<String>,
    },
}

/// On-disk feature-map schema: `{"kind": "one_hot"}` or
/// `{"d": .., "phi": [s][a][d], "nu": ..}`.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum FeatureFile {
    OneHot {
        kind: String,
    },
    Table {
        d: usize,
        phi: Vec<Vec<Vec<f64>>>,
        #[serde(default)]
        nu: Option<f64>,
    },
}

pub fn load_feature_map(path: &Path, num_states: usize, num_actions: usize) -> Result<FeatureMap> {
    let text = std::fs::read_to_string(path)?;
    let parsed: FeatureFile =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{path:?}: {e}")))?;
    match parsed {
        FeatureFile::OneHot { kind } => {
            if kind != "one_hot" {
                return Err(Error::Config(format!("unknown feature kind `{kind}`")));
            }
            Ok(FeatureMap::one_hot(num_states, num_actions))
        }
        FeatureFile::Table { d, phi, nu } => {
            let mut flat = Vec::with_capacity(num_states * num_actions * d);
            for per_state in &phi {
                for per_action in per_state {
                    flat.extend_from_slice(per_action);
                }
            }
            FeatureMap::from_table(num_states, num_actions, d, flat, nu)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    LinConfidentFtrl,
    RandomAccess,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::LinConfidentFtrl => "lin_confident_ftrl",
            Algorithm::RandomAccess => "random_access",
        }
    }

    pub fn required_protocol(self) -> AccessProtocol {
        match self {
            Algorithm::LinConfidentFtrl => AccessProtocol::LocalAccess,
            Algorithm::RandomAccess => AccessProtocol::RandomAccess,
        }
    }
}

/// Learning-rate schedule choice for the random-access learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RaSchedule {
    Averaging,
    Tabular { c_alpha: f64, c_b: f64 },
}

/// Optional overrides on top of the regime defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    pub k: Option<usize>,
    pub n: Option<usize>,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub c_k: Option<f64>,
    pub c_tau: Option<f64>,
    pub c_eta: Option<f64>,
    pub gamma_hat: Option<f64>,
    pub restart_budget: Option<usize>,
    pub ra_schedule: Option<RaSchedule>,
}

fn default_epsilon() -> f64 {
    0.25
}

fn default_delta() -> f64 {
    0.05
}

/// A complete experiment description, loadable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub game: GameSource,
    #[serde(default)]
    pub features: FeatureSpec,
    pub algorithm: Algorithm,
    /// Optional explicit protocol; must match the algorithm's requirement.
    #[serde(default)]
    pub protocol: Option<AccessProtocol>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub params: ParamOverrides,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{path:?}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 {
            return Err(Error::NonPositive("epsilon"));
        }
        if self.delta <= 0.0 {
            return Err(Error::NonPositive("delta"));
        }
        if let Some(protocol) = self.protocol {
            let required = self.algorithm.required_protocol();
            if protocol != required {
                return Err(Error::Config(format!(
                    "{} requires {required:?}, config pins {protocol:?}",
                    self.algorithm.name()
                )));
            }
        }
        Ok(())
    }

    pub fn build_game(&self) -> Result<MarkovGame> {
        match &self.game {
            GameSource::Inline { game } => {
                let report = game.validate();
                if !report.is_empty() {
                    return Err(Error::InvalidGame(
                        report
                            .iter()
                            .map(ToString::to_string)
                            .collect::<Vec<_>>()
                            .join("; "),
                    ));
                }
                Ok(game.clone())
            }
            GameSource::File { path } => {
                let text = std::fs::read_to_string(path)?;
                let game: MarkovGame = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{path}: {e}")))?;
                Ok(game)
            }
            GameSource::Generator { generator } => generator.build(),
        }
    }

    pub fn build_feature_maps(&self, game: &MarkovGame) -> Result<Vec<FeatureMap>> {
        match &self.features {
            FeatureSpec::OneHot => Ok((0..game.num_agents())
                .map(|i| FeatureMap::one_hot(game.num_states(), game.action_counts()[i]))
                .collect()),
            FeatureSpec::Files { paths } => {
                if paths.len() != game.num_agents() {
                    return Err(Error::Config(format!(
                        "{} feature files for {} agents",
                        paths.len(),
                        game.num_agents()
                    )));
                }
                paths
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        load_feature_map(
                            Path::new(p),
                            game.num_states(),
                            game.action_counts()[i],
                        )
                    })
                    .collect()
            }
        }
    }

    /// Resolve the local-access learner's parameters: regime defaults, then
    /// overrides, with dependent defaults (`λ`, restart budget) recomputed
    /// from the final values.
    pub fn resolve_learner_params(&self, game: &MarkovGame, dim: usize) -> Result<LearnerParams> {
        let a_max = game.action_counts().iter().copied().max().unwrap_or(1);
        let mut p = LearnerParams::regime_defaults(
            game.num_states(),
            game.horizon(),
            game.num_agents(),
            dim,
            a_max,
            self.epsilon,
            self.delta,
            self.params.c_k.unwrap_or(1.0),
            self.params.c_tau.unwrap_or(1.0),
        )?;
        if let Some(tau) = self.params.tau {
            p.tau = tau;
        }
        if let Some(k) = self.params.k {
            p.k = k;
        }
        p.lambda = match self.params.lambda {
            Some(lambda) => lambda,
            None => 1.0 / (p.k as f64 * dim as f64 * (game.horizon() as f64).powi(2)),
        };
        if let Some(n) = self.params.n {
            p.n_rollout = n;
        }
        if let Some(c_eta) = self.params.c_eta {
            p.c_eta = c_eta;
        }
        p.gamma_hat = self.params.gamma_hat;
        p.restart_budget = match self.params.restart_budget {
            Some(b) => b,
            None => {
                let c = crate::coreset::c_max(dim, p.tau, p.lambda)?;
                ((game.num_agents() * game.horizon()) as f64 * c).ceil() as usize
            }
        };
        p.validate()?;
        Ok(p)
    }

    pub fn resolve_ra_params(&self, game: &MarkovGame, dim: usize) -> Result<RAParams> {
        let a_max = game.action_counts().iter().copied().max().unwrap_or(1);
        let mut p = match self.params.ra_schedule {
            Some(RaSchedule::Tabular { c_alpha, c_b }) => {
                let k = self.params.k.unwrap_or_else(|| {
                    RAParams::regime_defaults(
                        game.num_states(),
                        game.horizon(),
                        dim,
                        a_max,
                        self.epsilon,
                        self.delta,
                    )
                    .map(|p| p.k)
                    .unwrap_or(1)
                });
                RAParams::tabular(k, self.delta, c_alpha, c_b)
            }
            Some(RaSchedule::Averaging) | None => RAParams::regime_defaults(
                game.num_states(),
                game.horizon(),
                dim,
                a_max,
                self.epsilon,
                self.delta,
            )?,
        };
        if let Some(k) = self.params.k {
            if p.k != k {
                p = match self.params.ra_schedule {
                    Some(RaSchedule::Tabular { c_alpha, c_b }) => {
                        RAParams::tabular(k, self.delta, c_alpha, c_b)
                    }
                    _ => RAParams::averaging(k, p.tau, p.lambda, self.delta),
                };
            }
        }
        if let Some(tau) = self.params.tau {
            p.tau = tau;
        }
        if matches!(
            self.params.ra_schedule,
            None | Some(RaSchedule::Averaging)
        ) {
            p.lambda = match self.params.lambda {
                Some(lambda) => lambda,
                None => 1.0 / (p.k as f64 * dim as f64 * (game.horizon() as f64).powi(2)),
            };
        } else if let Some(lambda) = self.params.lambda {
            p.lambda = lambda;
        }
        if let Some(c_eta) = self.params.c_eta {
            p.c_eta = c_eta;
        }
        p.gamma_hat = self.params.gamma_hat;
        p.validate()?;
        Ok(p)
    }
}

/// One run's machine-readable outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub algorithm: String,
    pub k: usize,
    pub n: usize,
    pub tau: f64,
    pub lambda: f64,
    pub total_samples: u64,
    pub init_samples: u64,
    pub learn_samples: u64,
    pub rollout_samples: u64,
    pub single_agent_samples: u64,
    pub final_rollout_samples: u64,
    pub restarts: usize,
    pub protocol_violations: u64,
    pub gaps: Vec<f64>,
    pub max_gap: f64,
    pub wall_ms: u64,
}

impl RunRecord {
    pub fn csv_header(num_agents: usize) -> String {
        let gaps: Vec<String> = (0..num_agents).map(|i| format!("gap_agent_{i}")).collect();
        format!(
            "seed,algorithm,K,N,tau,lambda,total_samples,init_samples,learn_samples,\
             rollout_samples,single_agent_samples,final_rollout_samples,restarts,{},max_gap,wall_ms",
            gaps.join(",")
        )
    }

    pub fn csv_row(&self) -> String {
        let gaps: Vec<String> = self.gaps.iter().map(|g| format!("{g}")).collect();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.algorithm,
            self.k,
            self.n,
            self.tau,
            self.lambda,
            self.total_samples,
            self.init_samples,
            self.learn_samples,
            self.rollout_samples,
            self.single_agent_samples,
            self.final_rollout_samples,
            self.restarts,
            gaps.join(","),
            self.max_gap,
            self.wall_ms
        )
    }

    /// Field-wise equality ignoring wall time; reproducibility checks use
    /// this.
    pub fn same_outcome(&self, other: &RunRecord) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.wall_ms = 0;
        b.wall_ms = 0;
        a == b
    }
}

pub fn write_runs_csv(w: &mut impl std::io::Write, records: &[RunRecord]) -> Result<()> {
    let agents = records.first().map_or(0, |r| r.gaps.len());
    writeln!(w, "{}", RunRecord::csv_header(agents))?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Execute one seeded run of the configured experiment.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    run_experiment_full(cfg, seed).map(|(record, _)| record)
}

/// Like [`run_experiment`], but also returns the learned mixture policy
/// (serializable in the policy JSON format).
pub fn run_experiment_full(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(RunRecord, crate::policy::StepMixturePolicy)> {
    cfg.validate()?;
    let game = cfg.build_game()?;
    let fmaps = cfg.build_feature_maps(&game)?;
    let dim = fmaps.iter().map(FeatureMap::dim).max().unwrap_or(1);
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, RNG_STREAM));
    let sim_seed = mix_seed(seed, SIM_STREAM);

    let (mix, report, k, n, tau, lambda) = match cfg.algorithm {
        Algorithm::LinConfidentFtrl => {
            let params = cfg.resolve_learner_params(&game, dim)?;
            let mut sim = Simulator::new(&game, AccessProtocol::LocalAccess, sim_seed);
            let (mix, report) = run_lin_confident_ftrl(&mut sim, &fmaps, &params, &mut rng)?;
            (
                mix,
                report,
                params.k,
                params.n_rollout,
                params.tau,
                params.lambda,
            )
        }
        Algorithm::RandomAccess => {
            let params = cfg.resolve_ra_params(&game, dim)?;
            let mut sim = Simulator::new(&game, AccessProtocol::RandomAccess, sim_seed);
            let (mix, report) = run_random_access(&mut sim, &fmaps, &params, &mut rng)?;
            (mix, report, params.k, 0, params.tau, params.lambda)
        }
    };

    let gap = cce_gap(&game, &mix)?;
    let record = RunRecord {
        seed,
        algorithm: cfg.algorithm.name().to_string(),
        k,
        n,
        tau,
        lambda,
        total_samples: report.total_samples,
        init_samples: report.init_samples,
        learn_samples: report.learn_samples,
        rollout_samples: report.rollout_samples,
        single_agent_samples: report.single_agent_samples,
        final_rollout_samples: report.final_rollout_samples,
        restarts: report.restarts,
        protocol_violations: report.protocol_violations,
        gaps: gap.per_agent.iter().map(|g| g.gap).collect(),
        max_gap: gap.max_gap,
        wall_ms: started.elapsed().as_millis() as u64,
    };
    log::info!(
        "run seed={seed} algo={} K={k} samples={} restarts={} max_gap={:.4}",
        record.algorithm,
        record.total_samples,
        record.restarts,
        record.max_gap
    );
    Ok((record, mix))
}

/// Sweepable parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    K,
    N,
    Tau,
    Lambda,
    Seeds,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "k" => Ok(SweepParam::K),
            "n" => Ok(SweepParam::N),
            "tau" => Ok(SweepParam::Tau),
            "lambda" => Ok(SweepParam::Lambda),
            "seeds" => Ok(SweepParam::Seeds),
            other => Err(Error::Config(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub value: f64,
    pub median_max_gap: f64,
    pub median_total_samples: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<RunRecord>,
    pub summaries: Vec<SweepSummary>,
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn apply_sweep_value(cfg: &ExperimentConfig, param: SweepParam, value: f64) -> Result<ExperimentConfig> {
    let mut out = cfg.clone();
    match param {
        SweepParam::K => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::Config(format!("K value {value} must be a positive integer")));
            }
            out.params.k = Some(value as usize);
        }
        SweepParam::N => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::Config(format!("N value {value} must be a positive integer")));
            }
            out.params.n = Some(value as usize);
        }
        SweepParam::Tau => out.params.tau = Some(value),
        SweepParam::Lambda => out.params.lambda = Some(value),
        SweepParam::Seeds => {}
    }
    Ok(out)
}

/// One run per `(value, seed)`, executed in parallel, with per-value medians.
/// Sweeping `seeds` reinterprets the values as seeds on the base config.
pub fn sweep(cfg: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<SweepResult> {
    let mut jobs: Vec<(f64, u64, ExperimentConfig)> = Vec::new();
    match param {
        SweepParam::Seeds => {
            for &v in values {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::Config(format!("seed value {v} must be a nonnegative integer")));
                }
                jobs.push((v, v as u64, cfg.clone()));
            }
        }
        _ => {
            if cfg.seeds.is_empty() && !values.is_empty() {
                return Err(Error::Config("sweep needs at least one seed".into()));
            }
            for &v in values {
                let swept = apply_sweep_value(cfg, param, v)?;
                for &seed in &cfg.seeds {
                    jobs.push((v, seed, swept.clone()));
                }
            }
        }
    }

    let mut rows: Vec<(usize, f64, RunRecord)> = jobs
        .par_iter()
        .enumerate()
        .map(|(idx, (value, seed, job))| run_experiment(job, *seed).map(|r| (idx, *value, r)))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|(idx, _, _)| *idx);

    let mut summaries = Vec::new();
    let mut seen = Vec::new();
    for &(_, value, _) in &rows {
        if seen.contains(&value.to_bits()) {
            continue;
        }
        seen.push(value.to_bits());
        let gaps: Vec<f64> = rows
            .iter()
            .filter(|(_, v, _)| v.to_bits() == value.to_bits())
            .map(|(_, _, r)| r.max_gap)
            .collect();
        let samples: Vec<f64> = rows
            .iter()
            .filter(|(_, v, _)| v.to_bits() == value.to_bits())
            .map(|(_, _, r)| r.total_samples as f64)
            .collect();
        summaries.push(SweepSummary {
            value,
            median_max_gap: median(&gaps),
            median_total_samples: median(&samples),
        });
    }
    Ok(SweepResult {
        rows: rows.into_iter().map(|(_, _, r)| r).collect(),
        summaries,
    })
}
