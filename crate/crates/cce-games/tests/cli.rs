//! End-to-end checks of the `cce` binary: every subcommand, the file
//! formats it reads and writes, and the documented exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cce_games::game::MarkovGame;
use cce_games::harness::{matching_pennies, run_experiment, ExperimentConfig};
use cce_games::oracle::{cce_gap, GapReport};
use cce_games::policy::{ProductPolicy, StepMixturePolicy};

fn cce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cce"))
        .args(args)
        .output()
        .expect("run cce")
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cce-cli-{name}-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, contents: &str) {
    fs::write(path, contents).unwrap();
}

#[test]
fn gen_produces_a_loadable_valid_game() {
    let dir = tmp_dir("gen");
    let out = dir.join("game.json");
    let status = cce(&[
        "gen",
        "--kind",
        "random_tabular",
        "--s",
        "3",
        "--m",
        "2",
        "--a",
        "2,2",
        "--horizon",
        "2",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(status.status.success(), "{status:?}");
    let game: MarkovGame = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(game.validate().is_empty());
    assert_eq!(game.num_states(), 3);

    // Same seed, same bytes.
    let out2 = dir.join("game2.json");
    cce(&[
        "gen",
        "--kind",
        "random_tabular",
        "--s",
        "3",
        "--m",
        "2",
        "--a",
        "2,2",
        "--horizon",
        "2",
        "--seed",
        "5",
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        fs::read_to_string(&out2).unwrap()
    );
}

#[test]
fn gen_matrix_game_reads_payoff_files() {
    let dir = tmp_dir("matrix");
    let payoffs = dir.join("payoffs.json");
    write(
        &payoffs,
        "[[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [1.0, 0.0]]]",
    );
    let out = dir.join("mp.json");
    let status = cce(&[
        "gen",
        "--kind",
        "matrix_game",
        "--payoffs",
        payoffs.to_str().unwrap(),
        "--horizon",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    let game: MarkovGame = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(game.num_joint_actions(), 4);

    let bad = cce(&["gen", "--kind", "nonsense", "--out", "/dev/null"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn oracle_subcommand_matches_library_gap() {
    let dir = tmp_dir("oracle");
    let game = matching_pennies(1);
    let game_path = dir.join("mp.json");
    write(&game_path, &serde_json::to_string(&game).unwrap());

    let mix = StepMixturePolicy::from_product(&ProductPolicy::uniform(&game));
    let policy_path = dir.join("uniform.json");
    write(&policy_path, &serde_json::to_string(&mix).unwrap());

    let out = dir.join("report.json");
    let status = cce(&[
        "oracle",
        "--game",
        game_path.to_str().unwrap(),
        "--policy",
        policy_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    let report: GapReport = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let direct = cce_gap(&game, &mix).unwrap();
    assert!((report.max_gap - direct.max_gap).abs() < 1e-15);
    assert!(report.max_gap.abs() < 1e-12);
}

const SMALL_CONFIG: &str = r#"{
  "game": {"kind": "generator", "generator": {"kind": "chain", "s": 3, "h": 2}},
  "features": {"kind": "one_hot"},
  "algorithm": "lin_confident_ftrl",
  "epsilon": 0.5,
  "params": {"k": 8, "n": 4},
  "seeds": [0, 1]
}"#;

#[test]
fn run_subcommand_writes_the_fixed_csv_and_matches_the_library() {
    let dir = tmp_dir("run");
    let cfg_path = dir.join("config.json");
    write(&cfg_path, SMALL_CONFIG);
    let out = dir.join("run.csv");
    let status = cce(&[
        "run",
        "--config",
        cfg_path.to_str().unwrap(),
        "--seed",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("seed,algorithm,K,N,tau,lambda,total_samples"));
    assert!(header.ends_with("restarts,gap_agent_0,max_gap,wall_ms"));

    let cfg: ExperimentConfig = serde_json::from_str(SMALL_CONFIG).unwrap();
    let direct = run_experiment(&cfg, 0).unwrap();
    let row = lines.next().unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[0], "0");
    assert_eq!(fields[6], direct.total_samples.to_string());
}

#[test]
fn learned_policies_round_trip_through_the_oracle() {
    let dir = tmp_dir("policy");
    let cfg_path = dir.join("config.json");
    write(&cfg_path, SMALL_CONFIG);
    let policy_path = dir.join("policy.json");
    let status = cce(&[
        "run",
        "--config",
        cfg_path.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        dir.join("run.csv").to_str().unwrap(),
        "--policy-out",
        policy_path.to_str().unwrap(),
    ]);
    assert!(status.status.success());

    // The persisted policy evaluates to the same gap the run reported.
    let game_path = dir.join("game.json");
    let game = cce_games::harness::chain_game(3, 2);
    write(&game_path, &serde_json::to_string(&game).unwrap());
    let report_path = dir.join("report.json");
    let status = cce(&[
        "oracle",
        "--game",
        game_path.to_str().unwrap(),
        "--policy",
        policy_path.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    let report: GapReport =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    let cfg: ExperimentConfig = serde_json::from_str(SMALL_CONFIG).unwrap();
    let direct = run_experiment(&cfg, 1).unwrap();
    assert!((report.max_gap - direct.max_gap).abs() < 1e-12);
}

#[test]
fn sweep_subcommand_emits_one_row_per_value_and_seed() {
    let dir = tmp_dir("sweep");
    let cfg_path = dir.join("config.json");
    write(&cfg_path, SMALL_CONFIG);
    let out = dir.join("sweep.csv");
    let status = cce(&[
        "sweep",
        "--config",
        cfg_path.to_str().unwrap(),
        "--param",
        "K",
        "--values",
        "4,8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 4); // header + 2 values x 2 seeds

    let bad = cce(&[
        "sweep",
        "--config",
        cfg_path.to_str().unwrap(),
        "--param",
        "banana",
        "--values",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tmp_dir("badcfg");
    let cfg_path = dir.join("bad.json");
    write(&cfg_path, "{\"not\": \"a config\"}");
    let status = cce(&[
        "run",
        "--config",
        cfg_path.to_str().unwrap(),
        "--seed",
        "0",
        "--out",
        "/dev/null",
    ]);
    assert_eq!(status.status.code(), Some(2));

    // Legal JSON but an illegal protocol pairing.
    let cfg_path = dir.join("pairing.json");
    write(
        &cfg_path,
        r#"{
          "game": {"kind": "generator", "generator": {"kind": "chain", "s": 3, "h": 2}},
          "algorithm": "random_access",
          "protocol": "LocalAccess",
          "params": {"k": 8},
          "seeds": [0]
        }"#,
    );
    let status = cce(&[
        "run",
        "--config",
        cfg_path.to_str().unwrap(),
        "--seed",
        "0",
        "--out",
        "/dev/null",
    ]);
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn missing_files_exit_with_code_two() {
    let status = cce(&[
        "run",
        "--config",
        "/nonexistent/config.json",
        "--seed",
        "0",
        "--out",
        "/dev/null",
    ]);
    assert_eq!(status.status.code(), Some(2));
}
