use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SHORT: &str = r#"
[map]
prior = 0.02

[loss]
switch_cost = 0.05

[trajectories]
actions = ["a0", "a1", "a2"]
clearance_m = 2.0

[scene]
water_depth = 30.0

[[scene.obstacles]]
position = [10.0, 0.5, 10.0]
radius = 1.0
target_strength_db = 15.0

[mission]
waypoints = [[-10.0, 0.0, 10.0], [15.0, 0.0, 10.0]]
acceptance_radius = 3.0

[sim]
seeds = [0, 1]
avoidance = false
stop_on_collision = false
record_pings = true
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sonar-avoid"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Temp dir holding the short config and one simulated batch under `run/`.
fn simulated() -> (TempDir, String, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "short.toml", SHORT);
    let out = dir.path().join("run");
    let res = run(&["simulate", "--config", &cfg, "--out", p(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    (dir, cfg, out)
}

fn timelines(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("timeline_"))
        .collect();
    names.sort();
    names
}

#[test]
fn simulate_writes_logs_and_a_summary() {
    let (_dir, _cfg, out) = simulated();
    for seed in ["seed_0", "seed_1"] {
        for file in ["nav.csv", "pings.csv", "decisions.csv", "truth.csv", "summary.csv"] {
            assert!(out.join(seed).join(file).is_file(), "{seed}/{file}");
        }
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn replay_writes_one_timeline_per_level() {
    let (dir, _cfg, out) = simulated();
    let seed = out.join("seed_0");
    let (pings, nav) = (seed.join("pings.csv"), seed.join("nav.csv"));
    let levels = config(dir.path(), "levels.toml", &format!("{SHORT}\n[replay]\nlevels = [4.0, 7.0, 10.0]\n"));
    let many = dir.path().join("many");
    let res = run(&["replay", "--pings", p(&pings), "--nav", p(&nav), "--config", &levels, "--out", p(&many)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert_eq!(timelines(&many).len(), 3);
    assert!(many.join("report.csv").is_file());

    let one_level = config(dir.path(), "one.toml", &format!("{SHORT}\n[replay]\nlevels = [7.0]\n"));
    let one = dir.path().join("one");
    let res = run(&["replay", "--pings", p(&pings), "--nav", p(&nav), "--config", &one_level, "--out", p(&one)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert_eq!(timelines(&one), vec!["timeline_delta_7.csv".to_string()]);
    assert_eq!(
        fs::read(one.join("timeline_delta_7.csv")).unwrap(),
        fs::read(many.join("timeline_delta_7.csv")).unwrap()
    );
}

#[test]
fn corrupt_log_line_is_a_data_error() {
    let (dir, cfg, out) = simulated();
    let seed = out.join("seed_0");
    let text = fs::read_to_string(seed.join("nav.csv")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[6] = "not,a,nav,record";
    let nav = dir.path().join("bad_nav.csv");
    fs::write(&nav, lines.join("\n")).unwrap();
    let res = run(&[
        "replay",
        "--pings",
        p(&seed.join("pings.csv")),
        "--nav",
        p(&nav),
        "--config",
        &cfg,
        "--out",
        p(&dir.path().join("r")),
    ]);
    assert_eq!(code(&res), 3);
    assert!(stderr(&res).contains("bad_nav.csv:7:"), "{}", stderr(&res));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let no_scene = config(dir.path(), "no_scene.toml", "[mission]\nwaypoints = [[0.0, 0.0, 10.0]]\n");
    let res = run(&["simulate", "--config", &no_scene, "--out", p(&out)]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("scene"), "{}", stderr(&res));

    let cfg = config(dir.path(), "short.toml", SHORT);
    let res = run(&["sweep", "--config", &cfg, "--param", "c_dd", "--values", "0,1", "--out", p(&out)]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("c_dd"), "{}", stderr(&res));

    let res = run(&["sweep", "--config", &cfg, "--param", "mission.waypoints", "--values", "1", "--out", p(&out)]);
    assert_eq!(code(&res), 2, "{}", stderr(&res));
}

#[test]
fn sweep_over_a_loss_weight_runs_one_batch_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "short.toml", SHORT);
    let out = dir.path().join("sweep");
    let res = run(&["sweep", "--config", &cfg, "--param", "c_d", "--values", "0,0.5,1", "--out", p(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    for v in ["0", "0.5", "1"] {
        assert!(out.join(format!("c_d_{v}")).join("summary.csv").is_file(), "{v}");
    }
    let table = stdout(&res);
    assert_eq!(table.lines().count(), 4, "{table}");
    assert_eq!(fs::read_to_string(out.join("sweep.txt")).unwrap(), table);
}

#[test]
fn single_value_sweep_matches_simulate() {
    let (dir, cfg, out) = simulated();
    let swept = dir.path().join("sweep");
    let res = run(&["sweep", "--config", &cfg, "--param", "switch_cost", "--values", "0.05", "--out", p(&swept)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert_eq!(
        fs::read(swept.join("switch_cost_0.05").join("summary.csv")).unwrap(),
        fs::read(out.join("summary.csv")).unwrap()
    );
}

#[test]
fn sensitivity_sweep_on_a_fixed_log_matches_replay() {
    let (dir, _cfg, out) = simulated();
    let seed = out.join("seed_0");
    let (pings, nav) = (seed.join("pings.csv"), seed.join("nav.csv"));
    let levels = config(dir.path(), "levels.toml", &format!("{SHORT}\n[replay]\nlevels = [4.0, 7.0, 10.0]\n"));
    let replayed = dir.path().join("replayed");
    let res = run(&["replay", "--pings", p(&pings), "--nav", p(&nav), "--config", &levels, "--out", p(&replayed)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));

    let fixed = config(
        dir.path(),
        "fixed.toml",
        &format!("{SHORT}\n[replay]\npings = \"run/seed_0/pings.csv\"\nnav = \"run/seed_0/nav.csv\"\n"),
    );
    let swept = dir.path().join("sweep");
    let res = run(&["sweep", "--config", &fixed, "--param", "delta_db", "--values", "4,7,10", "--out", p(&swept)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    for v in ["4", "7", "10"] {
        let name = format!("timeline_delta_{v}.csv");
        assert_eq!(
            fs::read(swept.join(format!("delta_db_{v}")).join(&name)).unwrap(),
            fs::read(replayed.join(&name)).unwrap(),
            "{name}"
        );
    }
}
