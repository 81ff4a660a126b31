#![allow(dead_code)]

use std::path::PathBuf;

use stochpool::experiment::ExperimentConfig;

/// Small synthetic experiment that trains in well under a second.
pub fn blobs_config(epochs: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{
          "name": "blobs-test",
          "dataset": {{"kind": "blobs", "train": 96, "test": 40, "classes": 4, "channels": 1, "size": 12, "seed": 3, "scale_unit": false}},
          "network": {{"preset": "desk-16-16-16", "init_std": 0.1, "response_norm": false}},
          "pooling": {{"train": "stochastic", "test": "probweight"}},
          "optimizer": {{"lr_conv": 0.02, "lr_softmax": 0.05}},
          "epochs": {epochs},
          "batch_size": 16,
          "seed": {seed}
        }}"#
    ))
    .unwrap()
}

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn read(path: impl AsRef<std::path::Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}
