use std::process::Command;

use cmdp_bench::campaign::{prepare, run_campaign};
use cmdp_bench::config::{Algorithm, ExperimentConfig};
use cmdp_bench::instance::InstanceSpec;
use cmdp_bench::summary::summarize_dir;

fn small_config(out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        instance: InstanceSpec::chain_walk(4, 3, 1.0),
        episodes: 60,
        kprime: Some(10),
        seeds: vec![0, 1],
        out: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

#[test]
fn chain_walk_constraint_binds() {
    let config = ExperimentConfig::default();
    let prepared = prepare(&config).unwrap();
    assert!(prepared.exact.duals[0] > 1e-6, "{:?}", prepared.exact.duals);
    assert!(prepared.exact.slacks[0].abs() < 1e-9);
    assert!(prepared.rho > 0.0);
}

#[test]
fn campaign_writes_one_csv_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_campaign(&small_config(dir.path())).unwrap();
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "instance.json",
            "optaug-seed0.csv",
            "optaug-seed1.csv",
            "optdual-seed0.csv",
            "optdual-seed1.csv",
            "summary.json"
        ]
    );
    assert_eq!(summary.runs.len(), 4);
    assert_eq!(summary.aggregates.len(), 2);
}

#[test]
fn csv_totals_recompute_from_per_episode_values() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        algorithm: Algorithm::Optaug,
        seeds: vec![3],
        ..small_config(dir.path())
    };
    let prepared = prepare(&config).unwrap();
    run_campaign(&config).unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join("optaug-seed3.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (vc, vd, sc, sd, wc, wd) = (
        col("V_c"),
        col("V_d_1"),
        col("strong_c_cum"),
        col("strong_d_cum"),
        col("weak_c_cum"),
        col("weak_d_cum"),
    );
    let alpha = prepared.cmdp.thresholds()[0];
    let v_star = prepared.exact.value;
    let mut totals = [0.0f64; 4];
    let mut rows = 0;
    for record in reader.records() {
        let record = record.unwrap();
        let num = |c: usize| record[c].parse::<f64>().unwrap();
        let (c, d) = (num(vc) - v_star, num(vd) - alpha);
        totals[0] += c.max(0.0);
        totals[1] += d.max(0.0);
        totals[2] += c;
        totals[3] += d;
        for (t, c) in totals.iter().zip([sc, sd, wc, wd]) {
            assert!((t - num(c)).abs() < 1e-9);
        }
        rows += 1;
    }
    assert_eq!(rows, 60);
    let summary = summarize_dir(dir.path()).unwrap();
    assert!((summary.runs[0].strong_d - totals[1]).abs() < 1e-9);
}

#[test]
fn cli_run_and_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"instance": {"generator": "random-cmdp", "states": 3, "actions": 2, "horizon": 3, "constraints": 1},
            "episodes": 40, "kprime": 5, "seeds": [7]}"#,
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_cmdp-bench");
    let status = Command::new(bin)
        .args(["run", "--config", config.to_str().unwrap(), "--algo", "optdual", "--K", "30", "--out"])
        .arg(&out)
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert!(status.success());
    let summary = summarize_dir(&out).unwrap();
    assert_eq!(summary.runs.len(), 1);
    assert_eq!(summary.runs[0].run_id, "optdual-seed7");
    assert_eq!(summary.runs[0].episodes, 30);

    let status = Command::new(bin).args(["summarize", "--out"]).arg(&out).env("RUST_LOG", "warn").output().unwrap();
    assert!(status.status.success());

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"episodes": 10, "bogus": 1}"#).unwrap();
    let output = Command::new(bin).args(["run", "--config"]).arg(&bad).output().unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("bogus"));
}

#[test]
fn generate_writes_instance_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_cmdp-bench"))
        .args(["generate", "--out"])
        .arg(dir.path())
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(status.status.success());
    let text = std::fs::read_to_string(dir.path().join("instance.json")).unwrap();
    let cmdp = cmdp_core::Cmdp::from_json_str(&text).unwrap();
    assert_eq!(cmdp.shape().states, 5);
    let oracle: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("oracle.json")).unwrap()).unwrap();
    assert!(oracle["duals"][0].as_f64().unwrap() > 0.0);
}
