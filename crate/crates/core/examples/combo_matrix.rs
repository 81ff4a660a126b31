//! Trains with each pooling mode and tests with each, printing the
//! train-mode by test-mode error table.

use stochpool::experiment::{cmd_combo_matrix, ExperimentConfig};
use stochpool::pooling::PoolingMode;

const CONFIG: &str = r#"{
  "name": "combo-example",
  "dataset": {"kind": "blobs", "train": 300, "test": 120, "classes": 6, "channels": 1, "size": 12, "seed": 8, "scale_unit": false},
  "network": {"preset": "desk-16-16-16", "init_std": 0.1, "response_norm": false},
  "pooling": {"train": "stochastic", "test": "probweight"},
  "optimizer": {"lr_conv": 0.02, "lr_softmax": 0.05},
  "epochs": 6,
  "batch_size": 16,
  "seed": 4
}"#;

fn main() -> stochpool::Result<()> {
    use PoolingMode::*;
    let config = ExperimentConfig::from_json(CONFIG)?;
    let table = cmd_combo_matrix(&config, &[Average, Max, Stochastic], &[Average, Max, Stochastic, ProbWeight], None)?;
    print!("{}", table.to_csv());
    Ok(())
}
