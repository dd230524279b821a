//! Black-box checks of the CLI against the built binary.

use std::path::Path;
use std::process::Command;

fn genlang() -> Command {
    Command::new(env!("CARGO_BIN_EXE_genlang"))
}

#[test]
fn splits_emits_a_valid_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("splits.json");
    let status = genlang()
        .args(["splits", "--fold", "2", "--seed", "1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(manifest["fold"], 2);
    assert_eq!(manifest["test"].as_array().unwrap().len(), 132);
    assert_eq!(
        manifest["train"].as_array().unwrap().len()
            + manifest["validation"].as_array().unwrap().len(),
        252
    );
    assert_eq!(manifest["forbidden_pairs"].as_array().unwrap().len(), 3);
}

#[test]
fn run_then_similarity_and_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    std::fs::write(
        &config_path,
        r#"
name = "cli-smoke"

[arch]
hidden = 8
embed = 4

[population]
n_q = 2
n_a = 2
period = 50
[population.policy]
kind = "multi_uniform_random"

[train]
batch_size = 1
epochs = 100
patience = 1000
val_interval = 25
seed = 0

[checkpoints]
event_snapshots = true
"#,
    )
    .unwrap();
    let run_dir = dir.path().join("sweep").join("run0");
    let status = genlang()
        .args(["run", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&run_dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(run_dir.join("result.json").exists());

    let status = genlang()
        .args(["similarity", "--run"])
        .arg(&run_dir)
        .args(["--draws", "3", "--curve"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(run_dir.join("similarity.json").exists());
    let curve = std::fs::read_to_string(run_dir.join("similarity_curve.csv")).unwrap();
    assert!(curve.lines().count() > 2);
    assert!(curve.starts_with("epoch,phase,d"));

    let status = genlang()
        .args(["analyze", "--dir"])
        .arg(dir.path().join("sweep"))
        .status()
        .unwrap();
    assert!(status.success());
    let analysis = dir.path().join("sweep").join("analysis");
    assert!(analysis.join("runs.csv").exists());
    assert!(analysis.join("accuracy_bars.csv").exists());
    assert!(analysis.join("pvalues.csv").exists());
}

#[test]
fn run_rejects_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("bad.toml");
    std::fs::write(
        &config_path,
        "[population]\nn_q = 3\nn_a = 3\nperiod = 10\n[population.policy]\nkind = \"single_random\"\n",
    )
    .unwrap();
    let output = genlang()
        .args(["run", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("single"), "stderr: {stderr}");
}

#[test]
fn metrics_csv_documented_header_is_stable() {
    // The CSV contract other tools parse.
    let header = "epoch,mean_reward,train_both,val_both,event";
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    std::fs::write(
        &config_path,
        r#"
name = "hdr"
[arch]
hidden = 8
embed = 4
[train]
batch_size = 1
epochs = 10
patience = 100
val_interval = 5
seed = 1
"#,
    )
    .unwrap();
    let run_dir = dir.path().join("run");
    assert!(genlang()
        .args(["run", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&run_dir)
        .status()
        .unwrap()
        .success());
    let text = std::fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), header);
    let _ = Path::new(&run_dir);
}
