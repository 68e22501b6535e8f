use std::path::{Path, PathBuf};

use clap::Parser;
use refcomm::harness::Manifest;
use refcomm_cli::{run, Cli};
use serde_json::{json, Value};

fn small_config(dir: &Path) -> PathBuf {
    let config = json!({
        "seeds": {"contexts": 11, "eval": 12, "train": 13},
        "train_contexts": 30,
        "test_contexts": 30,
        "sweeps": {"tau": [2.0, 6.0], "r_term": [0.0, -0.05, -0.1]},
        "train": {"episodes": 300, "hidden": 8, "warmup": 64, "batch_size": 16, "target_sync": 50},
        "grid_resolution": 5,
        "calibration": {"tolerance": 0.5, "max_iterations": 4}
    });
    let path = dir.join("config.json");
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

fn refcomm(args: &[&str]) -> anyhow::Result<String> {
    let cli = Cli::try_parse_from(std::iter::once("refcomm").chain(args.iter().copied()))?;
    let mut out = Vec::new();
    run(cli, &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

fn with_out(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    refcomm(&args).unwrap()
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn generate_contexts_writes_balanced_sets_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let out = tmp.path().join("ctx");
    with_out("generate-contexts", &config, &out, &[]);
    let test = read(out.join("test.jsonl"));
    assert_eq!(test.lines().count(), 30);
    for cond in ["far", "split", "close"] {
        let n = test.lines().filter(|l| l.contains(&format!("\"{cond}\""))).count();
        assert_eq!(n, 10, "{cond}");
    }
    let manifest = Manifest::load(&out).unwrap();
    assert_eq!(manifest.command, "generate-contexts");
    assert_eq!(manifest.seeds.contexts, 11);
    assert_eq!(manifest.outputs.len(), 2);
    assert_eq!(
        manifest.outputs["train.jsonl"],
        refcomm::harness::manifest::file_sha256(&out.join("train.jsonl")).unwrap()
    );
}

#[test]
fn evaluate_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let printed = with_out("evaluate", &config, &a, &[]);
    with_out("evaluate", &config, &b, &[]);
    assert!(printed.contains("extended"));
    for f in ["manifest.json", "results.json", "results.csv"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f}");
    }
    // One overall row and three condition rows per policy.
    let csv = read(a.join("results.csv"));
    assert_eq!(csv.lines().count(), 1 + 3 * 4);
    let results: Value = serde_json::from_str(&read(a.join("results.json"))).unwrap();
    for r in results.as_array().unwrap() {
        let per: f64 = r["per_condition"]
            .as_object()
            .unwrap()
            .values()
            .map(|c| c["successes"].as_f64().unwrap())
            .sum();
        let overall = r["success_rate"].as_f64().unwrap() * r["episodes"].as_f64().unwrap();
        assert!((per - overall).abs() < 1e-9);
    }
}

#[test]
fn policy_flag_overrides_the_config_list() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let out = tmp.path().join("e");
    with_out("evaluate", &config, &out, &["--policy", "mixed"]);
    let results: Value = serde_json::from_str(&read(out.join("results.json"))).unwrap();
    assert_eq!(results.as_array().unwrap().len(), 1);
    assert_eq!(results[0]["policy"], "mixed");
}

#[test]
fn train_then_grid_and_evaluate_the_weights() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    with_out("train", &config, &a, &[]);
    with_out("train", &config, &b, &[]);
    for f in ["manifest.json", "weights.json", "train_log.csv", "eval.json"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f}");
    }
    let log = read(a.join("train_log.csv"));
    assert!(log.starts_with("episode,reward,success,epsilon,loss"));
    assert_eq!(log.lines().count(), 301);
    let weights: Value = serde_json::from_str(&read(a.join("weights.json"))).unwrap();
    let manifest = Manifest::load(&a).unwrap();
    assert_eq!(weights["config_hash"], json!(manifest.config_hash));

    let grid = tmp.path().join("grid");
    let w = a.join("weights.json");
    with_out("policy-grid", &config, &grid, &["--weights", w.to_str().unwrap()]);
    let csv = read(grid.join("policy_grid.csv"));
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 25);
    // Off-simplex cells have an empty action column.
    for row in &rows {
        let cols: Vec<f64> = row.split(',').take(2).map(|x| x.parse().unwrap()).collect();
        assert_eq!(row.ends_with(','), cols[0] + cols[1] > 1.0 + 1e-9, "{row}");
    }
    assert!(grid.join("threshold_fit.json").is_file());

    let eval = tmp.path().join("eval");
    let policy = format!("dqn:{}", w.display());
    with_out("evaluate", &config, &eval, &["--policy", &policy]);
    let trained: Value = serde_json::from_str(&read(a.join("eval.json"))).unwrap();
    let again: Value = serde_json::from_str(&read(eval.join("results.json"))).unwrap();
    assert_eq!(trained["success_rate"], again[0]["success_rate"]);
    assert_eq!(trained["avg_reward"], again[0]["avg_reward"]);
}

#[test]
fn sweep_writes_one_row_per_point_and_policy() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let out = tmp.path().join("s");
    with_out("sweep", &config, &out, &["--kind", "tau"]);
    let csv = read(out.join("sweep_tau.csv"));
    assert!(csv.starts_with("sweep,value,policy,"));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(read(out.join("plot_sweep_tau.py")).contains("sweep_tau.csv"));
    assert!(Manifest::load(&out).unwrap().outputs.contains_key("sweep_tau.csv"));
}

#[test]
fn reward_space_reports_dominance() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let out = tmp.path().join("r");
    with_out("reward-space", &config, &out, &[]);
    assert_eq!(read(out.join("reward_space.csv")).lines().count(), 1 + 3 * 3);
    let dom: Value = serde_json::from_str(&read(out.join("dominance.json"))).unwrap();
    let policies: Vec<&str> = dom.as_array().unwrap().iter().map(|d| d["policy"].as_str().unwrap()).collect();
    assert_eq!(policies, ["direct", "extended", "mixed"]);
}

#[test]
fn calibrate_reports_a_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let out = tmp.path().join("c");
    with_out("calibrate", &config, &out, &[]);
    let cal: Value = serde_json::from_str(&read(out.join("calibration.json"))).unwrap();
    let t = cal["threshold"].as_f64().unwrap();
    assert!((0.34..=1.0).contains(&t));
}

#[test]
fn parse_prints_ranked_forms() {
    let printed = refcomm(&["parse", "--utterance", "darker blue?"]).unwrap();
    let parses: Value = serde_json::from_str(&printed).unwrap();
    let acts: Vec<&str> = parses.as_array().unwrap().iter().map(|p| p["lf"]["act"].as_str().unwrap()).collect();
    assert_eq!(acts, ["ClarifyTerm", "Describe"]);
    let none = refcomm(&["parse", "--utterance", "xyzzy"]).unwrap();
    assert_eq!(serde_json::from_str::<Value>(&none).unwrap(), json!([]));
}

#[test]
fn bad_inputs_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"test_contexts": 0}"#).unwrap();
    let out = tmp.path().join("o");
    let err = refcomm(&["evaluate", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(err.is_err());
    assert!(refcomm(&["sweep", "--out", "x", "--kind", "gamma"]).is_err());
    assert!(refcomm(&["serve", "--policy-dir", "/definitely/not/here", "--port", "0"]).is_err());
    assert!(refcomm(&["evaluate", "--out", out.to_str().unwrap(), "--policy", "dqn:/no/such/file"]).is_err());
}
