use std::path::Path;
use std::process::Command;

fn dfagnn() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dfagnn"));
    cmd.env("RUST_LOG", "error");
    cmd
}

fn cora() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/cora").to_string_lossy().into_owned()
}

#[test]
fn train_writes_summary_and_epochs() {
    let out = tempfile::tempdir().unwrap();
    let status = dfagnn()
        .args(["train", "--data", &cora(), "--epochs", "3", "--seeds", "4", "--out"])
        .arg(out.path())
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for f in ["summary.csv", "runs.csv", "epochs_seed4.csv"] {
        assert!(out.path().join(f).exists(), "missing {f}");
    }
    let epochs = std::fs::read_to_string(out.path().join("epochs_seed4.csv")).unwrap();
    // Provenance row, header, then epochs 0..=3.
    assert_eq!(epochs.lines().count(), 6);
    assert!(epochs.starts_with("config,"));
}

#[test]
fn config_file_values_apply_and_flags_win() {
    let out = tempfile::tempdir().unwrap();
    let cfg = out.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"epochs": 2, "lr": 0.05, "algo": "bp"}"#).unwrap();
    let status = dfagnn()
        .args(["train", "--data", &cora(), "--seeds", "0", "--lr", "0.02", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let summary = std::fs::read_to_string(out.path().join("summary.csv")).unwrap();
    let provenance = summary.lines().next().unwrap();
    assert!(provenance.contains("epochs=2"));
    assert!(provenance.contains("lr=0.02"));
    assert!(provenance.contains("algo=bp"));
}

#[test]
fn invalid_input_fails_cleanly() {
    let out = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["train", "--data", "/nonexistent/cora"],
        &["train", "--data", &cora(), "--lr", "-1"],
        &["ablate", "--data", &cora(), "--algo", "bp"],
        &["train", "--data", &cora(), "--freeze", "not json"],
    ];
    for args in cases {
        let result = dfagnn().args(args).arg("--out").arg(out.path()).output().unwrap();
        assert!(!result.status.success(), "{args:?} should fail");
        assert!(!result.stderr.is_empty(), "{args:?} should explain the failure");
    }
}
