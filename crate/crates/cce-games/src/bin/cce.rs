//! Command-line harness: seeded runs, sweeps, game generation and exact
//! oracle evaluation. Exit codes: 0 success, 2 configuration error, 3
//! invariant violation.

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cce_games::game::MarkovGame;
use cce_games::harness::{
    self, chain_game, generate_random_tabular, matrix_game, ExperimentConfig, SweepParam,
};
use cce_games::oracle::cce_gap;
use cce_games::policy::StepMixturePolicy;
use cce_games::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cce",
    about = "Equilibrium learning in tabular Markov games under simulator access protocols"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seeded experiment and write a one-row CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the learned mixture policy as JSON.
        #[arg(long)]
        policy_out: Option<PathBuf>,
    },
    /// Evaluate a policy file against a game file with the exact oracle.
    Oracle {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// One run per (value, seed) of a config, varying one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// One of: K, N, tau, lambda, seeds.
        #[arg(long)]
        param: String,
        /// Comma-separated list, e.g. `256,1024,4096`.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a game file.
    Gen {
        /// One of: random_tabular, matrix_game, chain.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 4)]
        s: usize,
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// Comma-separated per-agent action counts, e.g. `2,3`.
        #[arg(long, default_value = "2,2")]
        a: String,
        #[arg(long, default_value_t = 3)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Payoff matrices as JSON `[i][a1][a2]`, for `matrix_game`.
        #[arg(long)]
        payoffs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|x| {
            x.trim()
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("bad list entry `{x}`: {e}")))
        })
        .collect()
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad list entry `{x}`: {e}")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            policy_out,
        } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let (record, policy) = harness::run_experiment_full(&cfg, seed)?;
            let mut file = File::create(&out)?;
            harness::write_runs_csv(&mut file, std::slice::from_ref(&record))?;
            if let Some(path) = policy_out {
                let mut file = File::create(&path)?;
                writeln!(file, "{}", serde_json::to_string(&policy)?)?;
            }
            println!(
                "seed {} -> max_gap {:.6}, {} samples, {} restarts ({})",
                record.seed,
                record.max_gap,
                record.total_samples,
                record.restarts,
                out.display()
            );
            Ok(())
        }
        Command::Oracle { game, policy, out } => {
            let game: MarkovGame = serde_json::from_str(&std::fs::read_to_string(&game)?)?;
            let mix: StepMixturePolicy = serde_json::from_str(&std::fs::read_to_string(&policy)?)?;
            mix.validate()?;
            let report = cce_gap(&game, &mix)?;
            let mut file = File::create(&out)?;
            writeln!(file, "{}", serde_json::to_string_pretty(&report)?)?;
            println!("max_gap {:.6} ({})", report.max_gap, out.display());
            Ok(())
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let param: SweepParam = param.parse()?;
            let values = parse_f64_list(&values)?;
            let result = harness::sweep(&cfg, param, &values)?;
            let mut file = File::create(&out)?;
            harness::write_runs_csv(&mut file, &result.rows)?;
            for summary in &result.summaries {
                println!(
                    "value {} -> median max_gap {:.6}, median samples {}",
                    summary.value, summary.median_max_gap, summary.median_total_samples
                );
            }
            Ok(())
        }
        Command::Gen {
            kind,
            s,
            m,
            a,
            horizon,
            seed,
            payoffs,
            out,
        } => {
            let game = match kind.as_str() {
                "random_tabular" => {
                    let actions = parse_usize_list(&a)?;
                    if actions.len() != m {
                        return Err(Error::Config(format!(
                            "{} action counts for {m} agents",
                            actions.len()
                        )));
                    }
                    generate_random_tabular(s, m, &actions, horizon, seed)
                }
                "chain" => chain_game(s, horizon),
                "matrix_game" => {
                    let path = payoffs.ok_or_else(|| {
                        Error::Config("matrix_game needs --payoffs <file>".into())
                    })?;
                    let payoffs: Vec<Vec<Vec<f64>>> =
                        serde_json::from_str(&std::fs::read_to_string(&path)?)?;
                    matrix_game(&payoffs, horizon)?
                }
                other => {
                    return Err(Error::Config(format!(
                        "unknown generator `{other}` (expected random_tabular, matrix_game or chain)"
                    )))
                }
            };
            let mut file = File::create(&out)?;
            writeln!(file, "{}", serde_json::to_string(&game)?)?;
            println!(
                "wrote {} (S={}, m={}, H={})",
                out.display(),
                game.num_states(),
                game.num_agents(),
                game.horizon()
            );
            Ok(())
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Protocol { .. } | Error::RestartBudgetExceeded { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("CCE_LOG_LEVEL")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
