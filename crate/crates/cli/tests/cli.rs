use std::path::Path;
use std::process::{Command, Output};

use binarygp::estimation::FittedModel;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_binarygp")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = bin(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Simulates and fits a small panel, returning the model path.
fn fitted(dir: &Path) -> std::path::PathBuf {
    let sim = dir.join("sim");
    ok(&["simulate", "--generator", "gp", "--n", "25", "--t", "4", "--seed", "2", "--out-dir", s(&sim)]);
    let fit = dir.join("fit");
    ok(&["fit", "--inputs", s(&sim.join("inputs.csv")), "--panel", s(&sim.join("panel.csv")), "--out-dir", s(&fit)]);
    fit.join("model.json")
}

#[test]
fn simulate_writes_the_triple_and_truth() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["simulate", "--generator", "friedman", "--n", "8", "--t", "3", "--out-dir", s(tmp.path())]);
    for f in ["inputs.csv", "panel.csv", "true_p.csv", "truth.json", "config.json"] {
        assert!(tmp.path().join(f).exists(), "{f} missing");
    }
    let panel = std::fs::read_to_string(tmp.path().join("panel.csv")).unwrap();
    assert_eq!(panel.lines().count(), 9);
    assert_eq!(panel.lines().next().unwrap(), "y1,y2,y3");
}

#[test]
fn fit_writes_model_table_and_log() {
    let tmp = tempfile::tempdir().unwrap();
    let model = fitted(tmp.path());
    let dir = model.parent().unwrap();
    let table = std::fs::read_to_string(dir.join("coefficients.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "name,value,std_dev,z_score,p_value");
    assert_eq!(table.lines().count(), 1 + 7);
    let log: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("convergence.json")).unwrap()).unwrap();
    assert!(log["converged"].as_bool().unwrap());

    let text = std::fs::read_to_string(&model).unwrap();
    let m = FittedModel::<f64>::from_json(&text).unwrap();
    assert_eq!(m.to_json().unwrap(), text.trim_end());
}

#[test]
fn reloaded_model_predicts_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let model = fitted(tmp.path());
    let q = tmp.path().join("q.csv");
    std::fs::write(&q, "x1,x2,x3,x4,x5\n0.1,0.2,0.3,0.4,0.5\n0.9,0.1,0.5,0.5,0.2\n").unwrap();
    let run = |out: &str| {
        let dir = tmp.path().join(out);
        ok(&["predict", "--model", s(&model), "--inputs", s(&q), "--mh-samples", "80", "--mh-burnin", "20", "--out-dir", s(&dir)]);
        std::fs::read_to_string(dir.join("predictions.csv")).unwrap()
    };
    let a = run("p1");
    assert_eq!(a, run("p2"));
    assert_eq!(a.lines().count(), 3);
    assert!(a.starts_with("point,time,mean,variance,q0.025,q0.5,q0.975,"));
}

#[test]
fn emulate_gives_one_row_per_step_with_ordered_bands() {
    let tmp = tempfile::tempdir().unwrap();
    let model = fitted(tmp.path());
    let out = tmp.path().join("em");
    ok(&[
        "emulate",
        "--model",
        s(&model),
        "--x",
        "0.2,0.4,0.6,0.8,0.3",
        "--t-out",
        "100",
        "--mh-samples",
        "50",
        "--mh-burnin",
        "20",
        "--quantiles",
        "0.05,0.25,0.5,0.75,0.95",
        "--out-dir",
        s(&out),
    ]);
    let mut rdr = csv::Reader::from_path(out.join("emulation.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 100);
    for (k, r) in rows.iter().enumerate() {
        assert_eq!(r[0].parse::<usize>().unwrap(), k + 1);
        let q: Vec<f64> = (4..9).map(|c| r[c].parse().unwrap()).collect();
        assert!(q.windows(2).all(|w| w[0] <= w[1]), "row {k}: {q:?}");
        assert!(r[3] == *"0" || r[3] == *"1");
    }
}

#[test]
fn malformed_csv_names_the_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = tmp.path().join("x.csv");
    let panel = tmp.path().join("y.csv");
    std::fs::write(&inputs, "a,b\n0.1,0.2\n0.3,oops\n").unwrap();
    std::fs::write(&panel, "y1,y2\n0,1\n1,0\n").unwrap();
    let out = bin(&["fit", "--inputs", s(&inputs), "--panel", s(&panel), "--out-dir", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("\"oops\"") && err.contains("row 2") && err.contains("column 2"), "{err}");

    std::fs::write(&inputs, "a,b\n0.1,0.2\n0.3,0.4\n").unwrap();
    std::fs::write(&panel, "y1,y2\n0,1\n2,0\n").unwrap();
    let out = bin(&["fit", "--inputs", s(&inputs), "--panel", s(&panel), "--out-dir", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("non-binary response 2 at row 2, column 1"), "{err}");
}

#[test]
fn missing_or_mismatched_model_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin(&["emulate", "--model", s(&tmp.path().join("none.json")), "--x", "0.5", "--t-out", "3", "--out-dir", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("none.json"));

    let model = fitted(tmp.path());
    let mut value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    value["schema_version"] = 99.into();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, value.to_string()).unwrap();
    let out = bin(&["emulate", "--model", s(&bad), "--x", "0.1,0.2,0.3,0.4,0.5", "--t-out", "3", "--out-dir", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema version 99"));
}

#[test]
fn every_output_directory_echoes_a_replayable_config() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    ok(&["simulate", "--generator", "demo1d", "--n", "12", "--t", "1", "--seed", "9", "--out-dir", s(&a)]);
    let cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["schema_version"], 1);
    assert_eq!(cfg["command"]["simulate"]["seed"], 9);
    assert!(cfg.to_string().find("threads").is_none());
    let b = tmp.path().join("b");
    ok(&["rerun", "--config", s(&a.join("config.json")), "--out-dir", s(&b)]);
    for f in ["inputs.csv", "panel.csv", "true_p.csv", "truth.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn benchmark_overrides_merge_into_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"replicates": 2, "n_train": 20, "n_test": 6, "t": 3, "mh": {"n_samples": 40, "burn_in": 10}}"#).unwrap();
    let out = tmp.path().join("t3");
    ok(&["benchmark", "table3", "--config", s(&cfg), "--out-dir", s(&out)]);
    let echoed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    let study = &echoed["command"]["benchmark"]["study"];
    assert_eq!(study["study"], "table3");
    assert_eq!(study["mh"]["thin"], 2);
    assert_eq!(study["n_train"], 20);
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 3);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let names: Vec<&str> = summary["stats"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"rmspe") && names.contains(&"sigma2"));
}
