use std::path::Path;
use std::process::{Command, Output};

use gainsched_cli::{ExperimentConfig, Scenario, RESOLVED_CONFIG_FILE};

fn gainsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gainsched")).args(args).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn simulate_writes_tables_plot_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let config = write_config(dir.path(), "scenario = \"simulate\"\nmaster_seed = 3\nruns = 20\nhorizon = 5\n");
    let status = gainsched(&["simulate", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(status.status.success(), "{}", stderr(&status));
    for file in ["trajectories.csv", "aggregate.csv", "simulate.svg", RESOLVED_CONFIG_FILE] {
        assert!(out.join(file).is_file(), "missing {file}");
    }
    let trajectories = std::fs::read_to_string(out.join("trajectories.csv")).unwrap();
    assert!(trajectories.starts_with("run,iter,task,J,gain_est,gain_oracle,alpha,comm_cum\n"));
    assert_eq!(trajectories.lines().count(), 1 + 20 * 5);

    let echo = std::fs::read_to_string(out.join(RESOLVED_CONFIG_FILE)).unwrap();
    let parsed = ExperimentConfig::from_toml_str(&echo, None, None).unwrap();
    assert_eq!(parsed.runs, 20);
    assert_eq!(parsed.master_seed, 3);
    assert_eq!(parsed.tasks[0].noise_variance, 1.0);
}

#[test]
fn seed_flag_overrides_and_replaces_missing_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "runs = 10\nhorizon = 3\n");
    let a = dir.path().join("a");
    let status = gainsched(&["simulate", "--config", &config, "--seed", "11", "--out", a.to_str().unwrap()]);
    assert!(status.status.success(), "{}", stderr(&status));
    let echo = std::fs::read_to_string(a.join(RESOLVED_CONFIG_FILE)).unwrap();
    assert!(echo.contains("master_seed = 11"));

    let missing = gainsched(&["simulate", "--config", &config, "--out", a.to_str().unwrap()]);
    assert!(!missing.status.success());
    assert!(stderr(&missing).contains("master_seed"));
}

#[test]
fn unknown_key_is_reported_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "master_seed = 1\n[policy]\nkind = \"threshold\"\nlamda = 1.0\n");
    let out = gainsched(&["simulate", "--config", &config, "--out", dir.path().join("x").to_str().unwrap()]);
    assert!(!out.status.success());
    let msg = stderr(&out);
    assert!(msg.contains("policy") && msg.contains("lamda"), "{msg}");
    assert!(!dir.path().join("x").exists());
}

#[test]
fn unstable_stepsize_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "master_seed = 1\nstepsize = 0.7\n");
    let out = gainsched(&["simulate", "--config", &config, "--out", dir.path().join("x").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("max_stepsize"), "{}", stderr(&out));
}

#[test]
fn scenario_mismatch_and_missing_file_fail() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "scenario = \"compare\"\nmaster_seed = 1\n");
    let out = gainsched(&["simulate", "--config", &config]);
    assert!(!out.status.success());
    let missing = gainsched(&["simulate", "--config", dir.path().join("nope.toml").to_str().unwrap()]);
    assert!(!missing.status.success());
    assert!(stderr(&missing).contains("cannot read config"));
}

#[test]
fn estimated_bounds_reports_carry_the_mode_in_their_names() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "scenario = \"bounds\"\nmaster_seed = 5\nruns = 50\nhorizon = 30\n[policy]\nkind = \"threshold\"\nlambda = 1.0\ngain_mode = \"estimated\"\n[sweep]\nlambdas = [1.0]\n",
    );
    let out = dir.path().join("b");
    let status = gainsched(&["bounds", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(status.status.success(), "{}", stderr(&status));
    assert!(out.join("bounds_envelope_lambda1_estimated.csv").is_file());
    assert!(out.join("bounds_budget_lambda1_estimated.csv").is_file());
    let summary = std::fs::read_to_string(out.join("bounds_summary.csv")).unwrap();
    assert!(summary.lines().skip(1).all(|l| l.contains(",estimated,")));
}

#[test]
fn default_configs_are_valid_for_every_scenario() {
    for scenario in [Scenario::Tradeoff, Scenario::BiasHist, Scenario::Compare, Scenario::Bounds, Scenario::Simulate] {
        let config = ExperimentConfig::default_for(scenario, 1).unwrap();
        let echo = config.to_toml_string();
        assert_eq!(ExperimentConfig::from_toml_str(&echo, Some(scenario), None).unwrap(), config);
    }
}

#[test]
fn help_lists_every_subcommand() {
    let out = gainsched(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["tradeoff", "bias-hist", "compare", "bounds", "simulate"] {
        assert!(text.contains(cmd), "{cmd}");
    }
}
