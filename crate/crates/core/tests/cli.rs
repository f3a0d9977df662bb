use std::fs;
use std::path::Path;
use std::process::Command;

use rruc::cli::{run_command, EXIT_OK, EXIT_SHORTFALL, EXIT_USAGE};

fn run(args: &[&str]) -> i32 {
    run_command(std::iter::once("rruc").chain(args.iter().copied()))
}

fn bin(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rruc")).args(args).output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_smooth_eight_days() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = run(&["simulate", "--model", "ramp_smooth", "--days", "8", "--dt", "5", "--out", out]);
    assert_eq!(code, EXIT_OK);
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["periods"], 2304);
    assert_eq!(report["model"], "ramp_smooth");
    for f in ["decisions.csv", "census.csv", "config.echo.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    assert_eq!(json(&dir.path().join("config.echo.json"))["resolved_model"], "ramp_smooth");
}

#[test]
fn oracle_compare_prints_max_gap() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["oracle-compare", "--units", "12", "--instances", "50", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("max gap"), "{stdout}");
    let saved = json(&dir.path().join("oracle.json"));
    assert_eq!(saved["gaps"].as_array().unwrap().len(), 50);
    assert!(dir.path().join("config.echo.json").is_file());
}

#[test]
fn bench_writes_one_row_per_multiplier() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&[
        "bench",
        "--multipliers",
        "1,2,4",
        "--days",
        "2",
        "--model",
        "runtime",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let csv = fs::read_to_string(dir.path().join("scaling.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,seconds,objective_per_gen");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("42,") && lines[3].starts_with("168,"));
    assert!(fs::read_to_string(dir.path().join("scaling.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn synthesized_files_feed_a_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["synth-fleet", "--multiplier", "2", "--seed", "4", "--out", out]), EXIT_OK);
    assert_eq!(run(&["synth-demand", "--multiplier", "2", "--days", "3", "--out", out]), EXIT_OK);
    let fleet = json(&dir.path().join("fleet.json"));
    assert_eq!(fleet.as_array().unwrap().len(), 84);
    let demand = fs::read_to_string(dir.path().join("demand.csv")).unwrap();
    assert_eq!(demand.lines().next(), Some("period_index,demand_mw"));
    assert_eq!(demand.lines().count(), 865);

    let fleet_path = dir.path().join("fleet.json");
    let demand_path = dir.path().join("demand.csv");
    let sim_dir = dir.path().join("sim");
    let code = run(&[
        "simulate",
        "--model",
        "runtime",
        "--fleet",
        fleet_path.to_str().unwrap(),
        "--demand",
        demand_path.to_str().unwrap(),
        "--out",
        sim_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(json(&sim_dir.join("report.json"))["n_generators"], 84);
}

#[test]
fn unserved_demand_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let demand = dir.path().join("demand.csv");
    let mut text = String::from("period_index,demand_mw\n");
    for t in 0..576 {
        text.push_str(&format!("{t},20000\n"));
    }
    fs::write(&demand, text).unwrap();
    let code = run(&[
        "simulate",
        "--model",
        "runtime",
        "--demand",
        demand.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_SHORTFALL);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["simulate", "--bogus"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(run(&["simulate", "--model", "mip", "--out", dir.path().to_str().unwrap()]), EXIT_USAGE);
    assert_eq!(run(&["synth-fleet", "--fleet", "a.json", "--multiplier", "2"]), EXIT_USAGE);
    assert_eq!(run(&[]), EXIT_USAGE);
    assert_eq!(bin(&["--help"]).status.code(), Some(EXIT_OK));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, "seed = 5\nmodel = \"runtime\"\n[demand]\ndays = 2\n").unwrap();
    let out = dir.path().join("out");
    let code = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let echo = json(&out.join("config.echo.json"));
    assert_eq!(echo["seed"], 9);
    assert_eq!(echo["demand"]["days"], 2);
    assert_eq!(echo["resolved_model"], "runtime");
    assert_eq!(json(&out.join("report.json"))["periods"], 576);
}
