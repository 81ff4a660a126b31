//! Trains a small network on synthetic blobs and prints the per-epoch
//! metrics CSV.

use stochpool::experiment::{prepare, train, write_metrics_csv, ExperimentConfig, TrainOptions};

const CONFIG: &str = r#"{
  "name": "blobs-example",
  "dataset": {"kind": "blobs", "train": 400, "test": 100, "classes": 4, "channels": 1, "size": 12, "seed": 3, "scale_unit": false},
  "network": {"preset": "desk-16-16-16", "init_std": 0.1, "response_norm": false},
  "pooling": {"train": "stochastic", "test": "probweight"},
  "optimizer": {"lr_conv": 0.02, "lr_softmax": 0.05},
  "epochs": 6,
  "batch_size": 16,
  "seed": 11
}"#;

fn main() -> stochpool::Result<()> {
    let config = ExperimentConfig::from_json(CONFIG)?;
    let data = prepare(&config)?;
    println!("{} training and {} test images of {:?}", data.train.len(), data.test.len(), data.train.image_dims());
    let run = train(&config, &data, TrainOptions::default())?;
    print!("{}", write_metrics_csv(&run.metrics));
    Ok(())
}
