use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn pmrl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmrl"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SPEC: &str = r#"{"assets": [
  {"id": "a", "drift": 0.001, "volatility": 0.01},
  {"id": "b", "drift": 0.0, "volatility": 0.01}
], "days": 60, "start_date": "2012-01-02"}"#;

fn run_config(agent: &str, extra: &str) -> String {
    format!(
        r#"{{"data": "data/manifest.json", "agent": "{agent}", "seed": 1,
  "env": {{"window": 5, "risk_window": 5}},
  "arch": {{"channels": 2, "critic_hidden": 2}},
  "pg": {{"epochs": 3}},
  "split": {{"train_start": "2012-01-02", "train_end": "2012-02-17",
            "test_start": "2012-02-20", "test_end": "2012-03-23"}}{extra}}}"#
    )
}

fn setup() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("spec.json"), SPEC).unwrap();
    let o = pmrl(&["gen-data", "--config", "spec.json", "--out", "data", "--seed", "4"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    dir
}

#[test]
fn gen_train_backtest_compare() {
    let dir = setup();
    let d = dir.path();
    assert!(d.join("data/manifest.json").is_file());
    fs::write(d.join("pg.json"), run_config("pg", "")).unwrap();

    for seed in ["1", "2"] {
        let out = format!("runs/pg{seed}");
        let o = pmrl(&["train", "--config", "pg.json", "--out", &out, "--seed", seed], d);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("training APV"));
        let o = pmrl(&["backtest", "--config", "pg.json", "--out", &out, "--seed", seed], d);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let snapshot = fs::read_to_string(d.join("runs/pg2/config.json")).unwrap();
    assert!(snapshot.contains("\"seed\": 2"));

    let o = pmrl(
        &["compare", "--a", "runs/pg1", "runs/pg2", "--b", "runs/pg2", "runs/pg1", "--out", "cmp"],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("cmp/comparison.csv").is_file());
}

#[test]
fn features_flag_changes_the_input_shape() {
    let dir = setup();
    let d = dir.path();
    fs::write(d.join("pg.json"), run_config("pg", r#", "out_dir": "runs/x""#)).unwrap();
    let o = pmrl(&["train", "--config", "pg.json", "--features", "close+high"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    // a close-only backtest cannot load a two-feature checkpoint
    let o = pmrl(&["backtest", "--config", "pg.json"], d);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("shape"), "{}", stderr(&o));
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let dir = setup();
    let d = dir.path();
    fs::write(d.join("bad.json"), r#"{"agent": "pg", "seed": 1, "extra": true}"#).unwrap();
    let o = pmrl(&["train", "--config", "bad.json", "--out", "x"], d);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("`data`") && err.contains("`split`") && err.contains("extra"), "{err}");

    let o = pmrl(&["train", "--config", "x.json", "--features", "close+colour"], d);
    assert!(!o.status.success());

    fs::write(d.join("ucrp.json"), run_config("ucrp", "")).unwrap();
    let o = pmrl(&["backtest", "--config", "ucrp.json", "--out", "runs/u"], d);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn shipped_configs_are_valid() {
    let repo = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let dir = TempDir::new().unwrap();
    let configs = dir.path().join("configs");
    fs::create_dir_all(&configs).unwrap();
    for entry in fs::read_dir(repo.join("configs")).unwrap() {
        let path = entry.unwrap().path();
        fs::copy(&path, configs.join(path.file_name().unwrap())).unwrap();
    }
    let o = pmrl(
        &["gen-data", "--config", "configs/synthetic.json", "--out", "data/synthetic", "--seed", "1"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));

    for entry in fs::read_dir(&configs).unwrap() {
        let path = entry.unwrap().path();
        if path.file_name().unwrap() == "synthetic.json" {
            continue;
        }
        if let Err(e) = pmrl::runner::RunConfig::load(&path, &pmrl::runner::Overrides::default()) {
            panic!("{}: {e}", path.display());
        }
    }
    let o = pmrl(&["backtest", "--config", "configs/ucrp.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("runs/ucrp/metrics.json").is_file());
}
