use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_seerpol"));
    c.env("SEERPOL_THREADS", "1");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(format!("{name}.json"))
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn toy4_config(dir: &Path) -> PathBuf {
    let cfg = json!({
        "space": fixture("toy4"),
        "train": {"epochs": 30, "hidden": [16, 16]},
        "evo": {"rounds": 2, "samples_per_round": 15, "holdout": 10, "evo_iters": 10, "population": 20, "top_k": 5, "n_mutate": 10, "n_crossover": 10},
        "opt": {"budget": 0.025},
        "experiment": {"seeds": [0, 1], "sweep": {"eta": [0.01, 0.1]}},
        "output_dir": "out"
    });
    write_config(dir, &cfg)
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|row| row.unwrap()[idx].to_string()).collect()
}

#[test]
fn train_then_optimize_writes_reproducible_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy4_config(tmp.path());
    let out = tmp.path().join("out");
    run(bin().args(["train-predictor"]).arg(&cfg));
    for f in ["predictor.json", "dataset.csv", "holdout.csv", "mse_curve.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(csv_rows(&out.join("dataset.csv")).len(), 30);
    assert_eq!(csv_rows(&out.join("holdout.csv")).len(), 10);
    assert_eq!(csv_rows(&out.join("mse_curve.csv")).len(), 2);

    run(bin().args(["optimize", "--seed", "3"]).arg(&cfg));
    let complexity: f64 = column(&out.join("summary.csv"), "complexity_g")[0].parse().unwrap();
    assert!(complexity <= 0.025);
    let first = fs::read(out.join("deployed.csv")).unwrap();
    let trajectory = fs::read(out.join("trajectory.csv")).unwrap();
    run(bin().args(["optimize", "--seed", "3"]).arg(&cfg));
    assert_eq!(first, fs::read(out.join("deployed.csv")).unwrap());
    assert_eq!(trajectory, fs::read(out.join("trajectory.csv")).unwrap());
    let log = fs::read_to_string(out.join("run.log")).unwrap();
    assert!(log.lines().filter(|l| l.contains("wall_clock_s=")).count() >= 2);
}

#[test]
fn random_sampler_override_labels_requested_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy4_config(tmp.path());
    run(bin().args(["train-predictor", "--sampler", "random", "--seed", "5"]).arg(&cfg));
    assert_eq!(csv_rows(&tmp.path().join("out/dataset.csv")).len(), 30);
}

#[test]
fn baselines_and_sweep_write_one_row_per_seed_or_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy4_config(tmp.path());
    let out = tmp.path().join("out");
    run(bin().arg("train-predictor").arg(&cfg));
    for m in ["random", "evolution", "cpo"] {
        run(bin().args(["baseline", "--method", m]).arg(&cfg));
        let rows = csv_rows(&out.join(format!("baseline_{m}.csv")));
        assert!(rows.len() >= 2, "{m}");
    }
    run(bin().args(["sweep", "--axis", "eta"]).arg(&cfg));
    assert_eq!(csv_rows(&out.join("sweep_eta.csv")).len(), 2);
}

#[test]
fn infeasible_budget_exits_with_code_four() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy4_config(tmp.path());
    run(bin().arg("train-predictor").arg(&cfg));
    let out = bin().args(["optimize", "--budget-g", "1e-6"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible budget"));
}

#[test]
fn unknown_config_field_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &json!({"space": fixture("toy4"), "output_dir": "out", "opt": {"budjet": 1.0}}));
    let out = bin().arg("optimize").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_oracle_prints_a_loadable_fixture() {
    let out = run(bin().args(["gen-oracle", "--seed", "9"]).arg(fixture("toy4")));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["layers"].as_array().unwrap().len(), 4);
    assert_eq!(v["oracle"]["layers"].as_array().unwrap().len(), 4);
    let again = run(bin().args(["gen-oracle", "--seed", "9"]).arg(fixture("toy4")));
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn bundled_toy4_config_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/toy4.json");
    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(bundled).unwrap()).unwrap();
    cfg["space"] = json!(fixture("toy4"));
    cfg["output_dir"] = json!("out");
    let path = write_config(tmp.path(), &cfg);
    run(bin().arg("train-predictor").arg(&path));
    let mse: f64 = column(&tmp.path().join("out/mse_curve.csv"), "holdout_mse").last().unwrap().parse().unwrap();
    assert!(mse < 5e-4, "{mse}");
    run(bin().arg("optimize").arg(&path));
}

#[test]
fn bundled_resnet20_config_loads() {
    let tmp = tempfile::tempdir().unwrap();
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/resnet20.json");
    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(bundled).unwrap()).unwrap();
    cfg["space"] = json!(fixture("resnet20"));
    cfg["output_dir"] = json!("out");
    let path = write_config(tmp.path(), &cfg);
    // no checkpoint yet: everything before the predictor loads cleanly
    let out = bin().arg("optimize").arg(&path).output().unwrap();
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(2));
    assert!(err.contains("predictor.checkpoint"), "{err}");
}
