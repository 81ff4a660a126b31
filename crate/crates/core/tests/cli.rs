mod common;

use std::path::Path;
use std::process::Command;

fn stochpool(args: &[&str], cwd: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_stochpool"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

fn write_config(dir: &Path, lr: f64, dataset: &str) -> String {
    let path = dir.join(format!("config-{lr}.json"));
    let text = format!(
        r#"{{"name": "cli", "dataset": {dataset},
          "network": {{"preset": "desk-16-16-16", "init_std": 0.1, "response_norm": false}},
          "pooling": {{"train": "stochastic", "test": "probweight"}},
          "optimizer": {{"lr_conv": {lr}, "lr_softmax": {lr}}},
          "epochs": 2, "batch_size": 16, "seed": 1}}"#
    );
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const BLOBS: &str = r#"{"kind": "blobs", "train": 48, "test": 16, "classes": 4, "channels": 1, "size": 12, "seed": 1, "scale_unit": false}"#;

#[test]
fn exit_codes_follow_the_failure_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let ok = write_config(dir, 0.02, BLOBS);
    let (code, text) = stochpool(&["train", "--config", &ok, "--out", "run", "--threads", "1"], dir);
    assert_eq!(code, 0, "{text}");
    assert!(dir.join("run/metrics.csv").exists());

    let (code, text) = stochpool(&["eval", "--checkpoint", "run/checkpoints/final", "--out", "eval"], dir);
    assert_eq!(code, 0, "{text}");
    assert!(dir.join("eval/confusion.csv").exists());

    assert_eq!(stochpool(&["train"], dir).0, 1);
    assert_eq!(stochpool(&["train", "--config", "missing.json"], dir).0, 1);
    assert_eq!(stochpool(&["no-such-command"], dir).0, 1);
    assert_eq!(stochpool(&["eval", "--checkpoint", "run/checkpoints/final", "--mode", "median"], dir).0, 1);

    let no_data = write_config(dir, 0.03, r#"{"kind": "mnist", "dir": "nowhere"}"#);
    assert_eq!(stochpool(&["train", "--config", &no_data], dir).0, 2);

    let boom = write_config(dir, 1e8, BLOBS);
    let (code, text) = stochpool(&["train", "--config", &boom, "--out", "boom"], dir);
    assert_eq!(code, 3, "{text}");
    assert!(dir.join("boom/checkpoints/last-good/manifest.txt").exists());
}

#[test]
fn convert_svhn_writes_cifar_records() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let pixels: Vec<u8> = (0..2 * 32 * 32 * 3).map(|i| (i % 251) as u8).collect();
    std::fs::write(dir.join("x.bin"), &pixels).unwrap();
    std::fs::write(dir.join("y.bin"), [10u8, 3]).unwrap();
    let (code, text) = stochpool(&["convert-svhn", "--images", "x.bin", "--labels", "y.bin", "--out", "train.bin"], dir);
    assert_eq!(code, 0, "{text}");
    let ds = stochpool::data::load_cifar_binary(&[dir.join("train.bin")], 10).unwrap();
    assert_eq!(ds.labels(), &[0, 3]);
    assert_eq!(ds.images().at(0, 0, 0, 1), pixels[3] as f64);

    std::fs::write(dir.join("short.bin"), [1u8, 2, 3]).unwrap();
    let (code, _) = stochpool(&["convert-svhn", "--images", "short.bin", "--labels", "y.bin", "--out", "t.bin"], dir);
    assert_eq!(code, 2);
}
