mod common;

use common::{bin, path, run};
use serde_json::Value;
use tempfile::TempDir;

fn simulate(dir: &TempDir, name: &str, n: &str, extra: &[&str]) -> std::path::PathBuf {
    let out = dir.path().join(name);
    let mut args = vec!["simulate", "--n", n, "--out", path(&out)];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

const FAST: [&str; 6] = ["--chains", "2", "--warmup", "100", "--draws", "100"];

fn fit(data: &std::path::Path, artifact: &std::path::Path, extra: &[&str]) -> std::process::Output {
    let mut args = vec!["fit", "--data", path(data), "--artifact", path(artifact)];
    args.extend_from_slice(&FAST);
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn simulate_fit_and_evaluate_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let a = simulate(&dir, "a.csv", "250", &["--seed", "3"]);
    let b = simulate(&dir, "b.csv", "250", &["--seed", "3"]);
    let c = simulate(&dir, "c.csv", "250", &["--seed", "4"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());

    let (m1, m2) = (dir.path().join("m1.json"), dir.path().join("m2.json"));
    assert!(fit(&a, &m1, &[]).status.success());
    assert!(fit(&a, &m2, &[]).status.success());
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());

    let eval = |out: &std::path::Path| {
        let mut args = vec!["evaluate", "--data", path(&a), "--folds", "2", "--score-draws", "20", "--out", path(out)];
        args.extend_from_slice(&["--chains", "1", "--warmup", "60", "--draws", "40"]);
        let o = run(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        o.stdout
    };
    let (r1, r2) = (dir.path().join("r1.json"), dir.path().join("r2.json"));
    assert_eq!(eval(&r1), eval(&r2));
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());
    let report: Value = serde_json::from_slice(&std::fs::read(&r1).unwrap()).unwrap();
    assert_eq!(report["report"]["folds"], 2);
}

#[test]
fn seed_is_read_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let a = simulate(&dir, "a.csv", "30", &["--seed", "9"]);
    let b = dir.path().join("b.csv");
    let o = bin()
        .env("MDDBAYES_SEED", "9")
        .args(["simulate", "--n", "30", "--out", path(&b)])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn predict_prints_intervals_for_default_targets() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "d.csv", "200", &[]);
    let art = dir.path().join("m.json");
    assert!(fit(&data, &art, &[]).status.success());
    let o = run(&[
        "predict",
        "--artifact",
        path(&art),
        "--evidence",
        r#"{"age_group": 1, "gender": 0, "symptoms": {"phq8_3": 1}}"#,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n_draws"], 200);
    let preds = v["predictions"].as_array().unwrap();
    assert!(preds.iter().any(|p| p["target"] == "condition"));
    assert!(!preds.iter().any(|p| p["target"] == "phq8_3"));
    for p in preds.iter().filter(|p| p.get("p").is_some()) {
        let (lo, m, hi) = (p["lower"].as_f64().unwrap(), p["p"].as_f64().unwrap(), p["upper"].as_f64().unwrap());
        assert!(0.0 <= lo && lo <= m && m <= hi && hi <= 1.0);
    }

    let ev_file = dir.path().join("ev.json");
    std::fs::write(&ev_file, r#"{"condition": 1}"#).unwrap();
    let at = format!("@{}", path(&ev_file));
    let o = run(&["predict", "--artifact", path(&art), "--evidence", &at, "--targets", "phq8_1,age_group"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["predictions"].as_array().unwrap().len(), 2);
    assert_eq!(v["predictions"][1]["probabilities"].as_array().unwrap().len(), 4);
}

#[test]
fn exit_codes_distinguish_usage_and_data_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["fit"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let missing = dir.path().join("missing.csv");
    let art = dir.path().join("m.json");
    assert_eq!(fit(&missing, &art, &[]).status.code(), Some(2));

    let data = simulate(&dir, "d.csv", "120", &[]);
    let text = std::fs::read_to_string(&data).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[3].split(',').map(String::from).collect();
    cells[2] = "7".into();
    lines[3] = cells.join(",");
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    let o = fit(&bad, &art, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("row 4") && err.contains("gender"), "{err}");

    assert!(fit(&data, &art, &[]).status.success());
    let predict = |ev: &str, targets: Option<&str>| {
        let mut args = vec!["predict", "--artifact", path(&art), "--evidence", ev];
        if let Some(t) = targets {
            args.extend_from_slice(&["--targets", t]);
        }
        run(&args)
    };
    assert_eq!(predict(r#"{"gender": 3}"#, None).status.code(), Some(2));
    assert_eq!(predict(r#"{"colour": 1}"#, None).status.code(), Some(2));
    assert_eq!(predict("not json", None).status.code(), Some(2));
    assert_eq!(predict(r#"{"condition": 1}"#, Some("condition")).status.code(), Some(2));
    assert_eq!(predict("{}", Some("phq8_9")).status.code(), Some(2));
    assert_eq!(predict("{}", None).status.code(), Some(0));

    let tampered = std::fs::read_to_string(&art).unwrap().replacen("\"n_records\":120", "\"n_records\":121", 1);
    std::fs::write(&art, tampered).unwrap();
    let o = predict("{}", None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash"));
}

#[test]
fn fit_rejects_partial_records() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "d.csv", "150", &["--missing-prob", "0.2"]);
    let o = fit(&data, &dir.path().join("m.json"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("incomplete"));
}

#[test]
fn discovered_graph_can_be_reused_for_fitting() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "d.csv", "300", &[]);
    let dag = dir.path().join("dag.json");
    let o = run(&["discover-dag", "--data", path(&data), "--out", path(&dag)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&std::fs::read(&dag).unwrap()).unwrap();
    assert_eq!(v["causal_order"].as_array().unwrap().len(), 8);

    let art = dir.path().join("m.json");
    assert!(fit(&data, &art, &["--dag", path(&dag)]).status.success());
    let a: Value = serde_json::from_slice(&std::fs::read(&art).unwrap()).unwrap();
    assert_eq!(a["content"]["dag"], v["dag"]);
    assert!(a["content"]["fit_config"]["lingam"].is_null());
}
