use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn glitchbench(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glitchbench"))
        .args(args)
        .current_dir(dir)
        .env_remove("GLITCHBENCH_SEED")
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn first_record(path: &Path) -> serde_json::Value {
    let text = fs::read_to_string(path).unwrap();
    serde_json::from_str(text.lines().next().unwrap()).unwrap()
}

#[test]
fn test_and_clock_flags_select_program_and_frequency() {
    let dir = tempfile::tempdir().unwrap();
    ok(&glitchbench(
        dir.path(),
        &["run", "--test", "1", "--clock", "slow", "--attempts", "8", "--out", "a.jsonl"],
    ));
    let r = first_record(&dir.path().join("a.jsonl"));
    assert_eq!(r["test"], "register_loop");
    assert_eq!(r["freq_hz"], 16e6);
    assert!(dir.path().join("a.summary.json").exists());

    ok(&glitchbench(
        dir.path(),
        &["run", "--clock", "fast-vfi", "--attempts", "8", "--out", "b.jsonl"],
    ));
    let r = first_record(&dir.path().join("b.jsonl"));
    assert_eq!(r["freq_hz"], 240e6);
    assert_eq!(r["attack"], "vfi");
}

#[test]
fn missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = glitchbench(dir.path(), &["run", "no-such-config.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-config.toml"));
}

#[test]
fn bad_config_field_is_reported_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.toml"),
        "attack = \"emfi\"\ntest_id = \"register_loop\"\nclock = \"slow\"\nattempts = \"many\"\n",
    )
    .unwrap();
    let out = glitchbench(dir.path(), &["run", "bad.toml"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("attempts") && err.contains("line 4"), "{err}");
}

#[test]
fn seed_comes_from_flag_then_environment_then_config() {
    let dir = tempfile::tempdir().unwrap();
    let env_run = Command::new(env!("CARGO_BIN_EXE_glitchbench"))
        .args(["run", "vfi-medium", "--attempts", "4", "--out", "env.jsonl"])
        .current_dir(dir.path())
        .env("GLITCHBENCH_SEED", "77")
        .output()
        .unwrap();
    ok(&env_run);
    assert_eq!(first_record(&dir.path().join("env.jsonl"))["seed"], 77);
    let flag_run = Command::new(env!("CARGO_BIN_EXE_glitchbench"))
        .args(["run", "vfi-medium", "--attempts", "4", "--seed", "5", "--out", "flag.jsonl"])
        .current_dir(dir.path())
        .env("GLITCHBENCH_SEED", "77")
        .output()
        .unwrap();
    ok(&flag_run);
    assert_eq!(first_record(&dir.path().join("flag.jsonl"))["seed"], 5);
}

#[test]
fn equal_invocations_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["x.jsonl", "y.jsonl"] {
        ok(&glitchbench(dir.path(), &["run", "emfi-fast", "--attempts", "200", "--out", name]));
    }
    assert_eq!(
        fs::read(dir.path().join("x.jsonl")).unwrap(),
        fs::read(dir.path().join("y.jsonl")).unwrap()
    );
}

#[test]
fn attribution_labels_successes_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    ok(&glitchbench(dir.path(), &["run", "vfi-fast", "--attempts", "120", "--out", "r.jsonl"]));
    ok(&glitchbench(dir.path(), &["attribute", "r.jsonl", "--out", "once.jsonl"]));
    ok(&glitchbench(dir.path(), &["attribute", "once.jsonl", "--out", "twice.jsonl"]));
    let once = fs::read_to_string(dir.path().join("once.jsonl")).unwrap();
    assert_eq!(once, fs::read_to_string(dir.path().join("twice.jsonl")).unwrap());
    for line in once.lines() {
        let r: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(r["outcome"] == "successful", !r["labels"].is_null(), "{line}");
    }
}

#[test]
fn attributing_a_file_without_successes_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    ok(&glitchbench(
        dir.path(),
        &["run", "emfi-slow", "--test", "1", "--attempts", "64", "--out", "q.jsonl"],
    ));
    let before = fs::read_to_string(dir.path().join("q.jsonl")).unwrap();
    assert!(!before.contains("\"successful\""));
    ok(&glitchbench(dir.path(), &["attribute", "q.jsonl"]));
    assert_eq!(before, fs::read_to_string(dir.path().join("q.jsonl")).unwrap());
}

#[test]
fn malformed_record_line_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    ok(&glitchbench(dir.path(), &["run", "vfi-slow", "--attempts", "3", "--out", "m.jsonl"]));
    let path = dir.path().join("m.jsonl");
    let mut text = fs::read_to_string(&path).unwrap();
    text.push_str("{\"index\": 3\n");
    fs::write(&path, text).unwrap();
    let out = glitchbench(dir.path(), &["attribute", "m.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn report_writes_grid_and_scatter_data() {
    let dir = tempfile::tempdir().unwrap();
    ok(&glitchbench(dir.path(), &["run", "emfi-medium", "--attempts", "128", "--out", "e.jsonl"]));
    let out = glitchbench(dir.path(), &["report", "e.jsonl", "--out-dir", "plots", "--svg"]);
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("attempts 128"), "{stdout}");
    let points = fs::read_to_string(dir.path().join("plots/e.points.csv")).unwrap();
    let counts: u64 = points
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(2).map(|v| v.parse::<u64>().unwrap()).sum::<u64>())
        .sum();
    assert_eq!(points.lines().count(), 65);
    assert_eq!(counts, 128);
    let scatter = fs::read_to_string(dir.path().join("plots/e.scatter.csv")).unwrap();
    assert_eq!(scatter.lines().next(), Some("index,x_um,y_um,category"));
    assert_eq!(scatter.lines().count(), 129);
    assert!(dir.path().join("plots/e.svg").exists());
    assert!(!dir.path().join("plots/e.vfi.csv").exists());
}

#[test]
fn report_on_empty_file_prints_zero_totals() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let out = glitchbench(dir.path(), &["report", "empty.jsonl"]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("attempts 0"));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = glitchbench(dir.path(), &["selftest"]);
    ok(&out);
    assert!(!String::from_utf8_lossy(&out.stdout).contains("WRONG"));
}
