//! Stops a run halfway, reloads the checkpoint and finishes it, then checks
//! that the metrics match an uninterrupted run.

use stochpool::experiment::{prepare, train, write_metrics_csv, Checkpoint, ExperimentConfig, TrainOptions};

const CONFIG: &str = r#"{
  "name": "resume-example",
  "dataset": {"kind": "blobs", "train": 120, "test": 40, "classes": 3, "channels": 1, "size": 12, "seed": 2, "scale_unit": false},
  "network": {"preset": "desk-16-16-16", "init_std": 0.1, "response_norm": false},
  "pooling": {"train": "stochastic", "test": "probweight"},
  "optimizer": {"lr_conv": 0.02, "lr_softmax": 0.05},
  "epochs": 4,
  "batch_size": 16,
  "seed": 6,
  "checkpoint_every": 1
}"#;

fn main() -> stochpool::Result<()> {
    let config = ExperimentConfig::from_json(CONFIG)?;
    let data = prepare(&config)?;
    let dir = std::env::temp_dir().join("stochpool-resume-example");
    let _ = std::fs::remove_dir_all(&dir);

    let full = train(&config, &data, TrainOptions::default())?;
    let half = TrainOptions { out_dir: Some(dir.clone()), stop_after: Some(2), ..TrainOptions::default() };
    train(&config, &data, half)?;
    let checkpoint = Checkpoint::load(dir.join("checkpoints/epoch-0002"))?;
    println!("resuming from epoch {} of {}", checkpoint.epoch, checkpoint.total_epochs);
    let rest = TrainOptions { resume: Some(checkpoint), ..TrainOptions::default() };
    let resumed = train(&config, &data, rest)?;

    print!("{}", write_metrics_csv(&resumed.metrics));
    let same = write_metrics_csv(&full.metrics) == write_metrics_csv(&resumed.metrics) && full.params == resumed.params;
    println!("identical to the uninterrupted run: {same}");
    Ok(())
}
