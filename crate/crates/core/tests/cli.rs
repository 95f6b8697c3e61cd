use std::path::Path;
use std::process::{Command, Output};

use flowdrift::features::io::read_feature_csv;
use flowdrift::features::Label;

fn flowdrift(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_flowdrift"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    out
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = flowdrift(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const CONFIG: &str = "\
# small synthetic run
offline_source = data/offline.csv
incoming_source = data/incoming.csv
output_dir = out
batch_size = 1000
model = logistic
";

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out-dir", "data", "--offline", "3000", "--incoming", "3000"]);
    std::fs::write(dir.path().join("exp.conf"), CONFIG).unwrap();
    dir
}

#[test]
fn extract_labels_attacker_flows() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out-dir", ".", "--packets", "2000", "--seed", "3"]);
    let stderr = String::from_utf8(
        flowdrift(dir.path(), &["extract", "packets.csv", "-o", "f.csv", "--origin", "BS1", "--attacker", "10.0.0.7=UDPFlood"]).stderr,
    )
    .unwrap();
    assert!(stderr.contains("2000 packets kept"), "{stderr}");
    let rows = read_feature_csv(dir.path().join("f.csv")).unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().any(|r| r.label == Label::Malicious && r.attack_type == "UDPFlood"));
    assert!(rows.iter().all(|r| r.origin == "BS1"));

    let stats = ok(dir.path(), &["stats", "f.csv"]);
    assert!(stats.contains("UDPFlood"));

    let dropped = flowdrift(dir.path(), &["extract", "packets.csv", "-o", "g.csv", "--drop-icmp"]);
    assert!(dropped.status.success());
    assert!(String::from_utf8_lossy(&dropped.stderr).contains("ICMP"));
}

#[test]
fn run_protocol_is_byte_deterministic() {
    let dir = workspace();
    let tables = ok(dir.path(), &["run-protocol", "--config", "exp.conf"]);
    assert!(tables.contains("Forgetting"));
    let first = std::fs::read(dir.path().join("out/report.json")).unwrap();
    ok(dir.path(), &["run-protocol", "--config", "exp.conf"]);
    assert_eq!(first, std::fs::read(dir.path().join("out/report.json")).unwrap());
    for f in ["tables.txt", "timing.json", "curve_logistic.csv", "checkpoints/logistic_offline.json"] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
    let rerendered = ok(dir.path(), &["report", "out"]);
    assert_eq!(rerendered, std::fs::read_to_string(dir.path().join("out/tables.txt")).unwrap());
}

#[test]
fn flags_override_config_keys() {
    let dir = workspace();
    ok(
        dir.path(),
        &["run-protocol", "--config", "exp.conf", "--model", "mlp", "--mlp.hidden", "8", "--lwf.lambda", "0.5", "--output_dir", "other"],
    );
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("other/report.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["model"], "mlp");
    assert_eq!(json["config"]["lwf.lambda"], "0.5");
    assert_eq!(json["runs"].as_array().unwrap().len(), 2);
}

#[test]
fn staged_training_and_resume() {
    let dir = workspace();
    ok(dir.path(), &["train-offline", "--config", "exp.conf"]);
    let ckpt = "out/checkpoints/logistic_offline.json";
    let full = ok(dir.path(), &["train-incremental", "--config", "exp.conf", "--checkpoint", ckpt]);
    let resumed = ok(
        dir.path(),
        &["train-incremental", "--config", "exp.conf", "--checkpoint", ckpt, "--resume", "out/checkpoints/logistic_batch0000.json"],
    );
    let after = |s: &str| s.lines().find(|l| l.starts_with("incoming after")).unwrap().to_owned();
    assert_eq!(after(&full), after(&resumed));

    let lwf = flowdrift(dir.path(), &["train-incremental", "--config", "exp.conf", "--checkpoint", ckpt, "--lwf"]);
    assert!(!lwf.status.success());
}

#[test]
fn split_writes_both_parts() {
    let dir = workspace();
    let out = ok(dir.path(), &["split", "data/offline.csv", "--train-out", "a.csv", "--test-out", "b.csv", "--train_fraction", "0.8"]);
    assert_eq!(out.trim(), "train 2400  test 600");
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = workspace();
    let out = flowdrift(dir.path(), &["run-protocol", "--config", "exp.conf", "--batch_size", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("batch_size"));
    let out = flowdrift(dir.path(), &["stats", "missing.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
}
