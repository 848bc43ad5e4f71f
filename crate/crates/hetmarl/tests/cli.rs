//! End-to-end checks of the command-line binary: exit codes, override
//! precedence, artifact layout, and cross-run determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hetmarl"));
    // Isolate from the ambient environment; individual tests opt back in.
    c.env_remove("HETMARL_SEED");
    c
}

/// Small, fast run: two units a side on a small map.
fn tiny_flags(c: &mut Command) -> &mut Command {
    c.args([
        "--total-steps",
        "40",
        "--batch-size",
        "4",
        "--buffer-capacity",
        "64",
        "--warmup",
        "8",
        "--bases",
        "2",
        "--width",
        "8",
        "--height",
        "8",
        "--step-limit",
        "30",
        "--allies-ranged",
        "1",
        "--allies-melee",
        "1",
        "--enemies-ranged",
        "1",
        "--enemies-melee",
        "1",
    ])
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process exited")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn usage_errors_exit_one() {
    let out = bin().arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(code(&out), 1);

    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(code(&out), 1);

    let out = bin().args(["train"]).output().unwrap();
    assert_eq!(code(&out), 1, "train without --out is a usage error");
}

#[test]
fn help_and_version_exit_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(code(&out), 0);
    let out = bin().arg("--version").output().unwrap();
    assert_eq!(code(&out), 0);
}

#[test]
fn config_invariant_violations_exit_one_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["train", "--out"])
        .arg(dir.path())
        .args(["--comms", "rgcn", "--trr", "true"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("attention"), "got: {}", stderr(&out));

    let out = bin()
        .args(["train", "--out"])
        .arg(dir.path())
        .args(["--gamma", "1.5"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn unknown_config_file_keys_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    fs::write(&cfg_path, r#"{ "learning_rate": 0.1 }"#).unwrap();
    let out = bin()
        .args(["train", "--out"])
        .arg(dir.path())
        .arg("--config")
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(
        stderr(&out).contains("unknown config key \"learning_rate\""),
        "got: {}",
        stderr(&out)
    );
}

fn train_into(dir: &Path, extra: &[&str]) -> Output {
    let mut c = bin();
    c.args(["train", "--out"]).arg(dir);
    tiny_flags(&mut c);
    c.args(extra);
    c.output().unwrap()
}

#[test]
fn train_writes_the_advertised_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_into(dir.path(), &["--seed", "3"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "episode,steps_alive,mean_agent_reward,epsilon,mean_loss,wall_seconds"
    );
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 6);
        let steps: u32 = fields[1].parse().unwrap();
        assert!(steps <= 30, "steps_alive {steps} over the step limit");
        for f in &fields[2..] {
            let v: f64 = f.parse().unwrap();
            assert!(v.is_finite());
        }
        rows += 1;
    }
    assert!(rows > 0);

    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["seed"], 3);
    assert_eq!(manifest["config"]["total_steps"], 40);
    assert!(dir.path().join("checkpoint.bin").exists());
}

#[test]
fn flag_overrides_land_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_into(dir.path(), &["--gamma", "0"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["gamma"], 0.0);
}

#[test]
fn eval_and_baseline_share_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_into(dir.path(), &["--seed", "2"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let eval_dir = dir.path().join("eval");
    let mut c = bin();
    c.args(["eval", "--checkpoint"])
        .arg(dir.path().join("checkpoint.bin"))
        .args(["--episodes", "3", "--out"])
        .arg(&eval_dir);
    tiny_flags(&mut c);
    let out = c.output().unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let base_dir = dir.path().join("base");
    let mut c = bin();
    c.args(["baseline", "--episodes", "3", "--out"]).arg(&base_dir);
    tiny_flags(&mut c);
    let out = c.output().unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let eval_csv = fs::read_to_string(eval_dir.join("eval.csv")).unwrap();
    let base_csv = fs::read_to_string(base_dir.join("eval.csv")).unwrap();
    assert_eq!(
        eval_csv.lines().next(),
        base_csv.lines().next(),
        "schemas must be diffable"
    );
    assert_eq!(eval_csv.lines().count(), 4);
    assert_eq!(base_csv.lines().count(), 4);
}

#[test]
fn eval_without_a_checkpoint_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = bin();
    c.args(["eval", "--checkpoint"])
        .arg(dir.path().join("missing.bin"))
        .args(["--episodes", "1", "--out"])
        .arg(dir.path());
    tiny_flags(&mut c);
    let out = c.output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn plot_renders_and_rejects_short_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_into(dir.path(), &[]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let svg_path = dir.path().join("plots").join("curves.svg");
    let out = bin()
        .args(["plot", "--metrics"])
        .arg(dir.path().join("metrics.csv"))
        .arg("--out")
        .arg(&svg_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let svg = fs::read_to_string(&svg_path).unwrap();
    assert!(svg.starts_with("<svg "));
    assert!(svg.trim_end().ends_with("</svg>"));

    let short = dir.path().join("short.csv");
    fs::write(
        &short,
        "episode,steps_alive,mean_agent_reward,epsilon,mean_loss,wall_seconds\n0,1,0,0.5,0,0\n",
    )
    .unwrap();
    let out = bin()
        .args(["plot", "--metrics"])
        .arg(&short)
        .arg("--out")
        .arg(dir.path().join("short.svg"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("two episodes"), "got: {}", stderr(&out));
}

#[test]
fn seed_env_var_is_a_fallback_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();

    let env_dir = dir.path().join("env");
    let mut c = bin();
    c.args(["train", "--out"]).arg(&env_dir);
    tiny_flags(&mut c);
    c.env("HETMARL_SEED", "11");
    let out = c.output().unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(env_dir.join("run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["seed"], 11, "env var fills the seed");

    let flag_dir = dir.path().join("flag");
    let mut c = bin();
    c.args(["train", "--out"]).arg(&flag_dir);
    tiny_flags(&mut c);
    c.args(["--seed", "4"]).env("HETMARL_SEED", "11");
    let out = c.output().unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(flag_dir.join("run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["seed"], 4, "flag beats env var");

    let mut c = bin();
    c.args(["baseline", "--episodes", "1", "--out"]).arg(dir.path());
    c.env("HETMARL_SEED", "not-a-number");
    let out = c.output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("HETMARL_SEED"), "got: {}", stderr(&out));
}

#[test]
fn identical_config_and_seed_reproduce_metrics_exactly_but_for_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&train_into(&a, &["--seed", "8"])), 0);
    assert_eq!(code(&train_into(&b, &["--seed", "8"])), 0);

    let strip_wall = |text: &str| -> Vec<String> {
        text.lines()
            .map(|l| l.rsplit_once(',').expect("comma-separated").0.to_string())
            .collect()
    };
    let ma = fs::read_to_string(a.join("metrics.csv")).unwrap();
    let mb = fs::read_to_string(b.join("metrics.csv")).unwrap();
    assert_eq!(strip_wall(&ma), strip_wall(&mb));

    let ca = fs::read(a.join("checkpoint.bin")).unwrap();
    let cb = fs::read(b.join("checkpoint.bin")).unwrap();
    assert_eq!(ca, cb, "same seed, same final parameters");
}

#[test]
fn gradcheck_verb_reports_three_suites() {
    let out = bin().args(["gradcheck", "--seed", "1"]).output().unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for name in ["relational", "attention", "objective"] {
        assert!(stdout.contains(name), "missing {name} in: {stdout}");
    }
    assert!(stdout.contains("max rel err"));
}
