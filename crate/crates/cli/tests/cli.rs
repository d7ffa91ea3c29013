use std::fs;
use std::path::Path;
use std::process::Command;

fn tracker(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tracker"))
        .args(args)
        .current_dir(dir)
        .env("TRACKER_THREADS", "1")
        .output()
        .expect("binary runs")
}

const SMALL: &str = "\
[recipe]
steps = 120
per_source = 20
[train]
hidden_layers = [5]
max_iterations = 8
[test]
steps = 80
";

#[test]
fn identify_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = tracker(&["identify", "--system", "sim_stable", "--out", "res"], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("relative degree   1"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("res/identify.json")).unwrap()).unwrap();
    assert_eq!(json["identification"]["relative_degree"], 1);
    assert_eq!(json["difference_learning_eligible"], false);
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[recipe]\namplitudes = []\n").unwrap();
    let out = tracker(&["train", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("amplitude"));

    let out = tracker(&["identify", "--config", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let out = tracker(&["evaluate", "--model", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn training_failure_exits_two_and_keeps_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let config = SMALL.replace("[train]\n", "[train]\ntrainer = \"momentum\"\nlearning_rate = 1e12\n");
    fs::write(dir.path().join("div.toml"), config).unwrap();
    let out = tracker(&["train", "--config", "div.toml", "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("res/dataset.csv").exists());
    assert!(!dir.path().join("res/model.json").exists());
}

#[test]
fn same_seed_gives_identical_model_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    for out in ["a", "b"] {
        let o = tracker(&["train", "--config", "small.toml", "--seed", "7", "--out", out], dir.path());
        assert!(o.status.success());
    }
    let a = fs::read(dir.path().join("a/model.json")).unwrap();
    let b = fs::read(dir.path().join("b/model.json")).unwrap();
    assert_eq!(a, b);
    let o = tracker(&["train", "--config", "small.toml", "--seed", "8", "--out", "c"], dir.path());
    assert!(o.status.success());
    assert_ne!(a, fs::read(dir.path().join("c/model.json")).unwrap());

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/train_report.json")).unwrap()).unwrap();
    assert_eq!(report["seeds"]["sampling"], 7);
    assert_eq!(report["config"]["train"]["max_iterations"], 8);
    let losses = fs::read_to_string(dir.path().join("a/loss_history.csv")).unwrap();
    assert!(losses.starts_with("iteration,loss\n"));
}

#[test]
fn evaluate_after_train() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    assert!(tracker(&["train", "--config", "small.toml", "--out", "res"], dir.path()).status.success());
    let out = tracker(&["evaluate", "--config", "small.toml", "--out", "res"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.json", "trace.csv", "plot.gp"] {
        assert!(dir.path().join("res").join(f).exists());
    }
    // a model trained for another feature layout is a configuration error
    fs::write(
        dir.path().join("tf.toml"),
        format!("{SMALL}[features]\nmode = \"transfer_function\"\n"),
    )
    .unwrap();
    let out = tracker(&["evaluate", "--config", "tf.toml", "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn divergence_is_not_an_error() {
    // whatever the enhanced loop does on the non-minimum-phase plant, the
    // outcome is reported in-band with exit code 0
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("nmp.toml"),
        format!("system = \"sim_unstable\"\n{SMALL}"),
    )
    .unwrap();
    assert!(tracker(&["train", "--config", "nmp.toml", "--out", "res"], dir.path()).status.success());
    let out = tracker(&["evaluate", "--config", "nmp.toml", "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("diverged"));
    assert!(stdout.contains("unstable zero"));
}

#[test]
fn feature_dim_study() {
    let dir = tempfile::tempdir().unwrap();
    let out = tracker(&["reproduce", "feature_dim", "--out", "res"], dir.path());
    assert!(out.status.success());
    let rows: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("res/feature_dim/summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(rows[0]["state_space_width"], 3);
    assert_eq!(rows[0]["transfer_function_width"], 4);
    assert_eq!(rows[2]["r"], 2);
}

#[test]
fn bad_thread_setting_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tracker"))
        .args(["identify"])
        .current_dir(dir.path())
        .env("TRACKER_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
