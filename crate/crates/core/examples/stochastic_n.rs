//! Averages N stochastic forward passes at test time and shows the
//! prediction approaching probability-weighted pooling as N grows. Run
//! from the repository root so `data/mnist-5k` resolves.

use stochpool::experiment::{evaluate, prepare, train, ExperimentConfig, TrainOptions};
use stochpool::pooling::PoolingMode;
use stochpool::rng::{Purpose, RngStream};

const CONFIG: &str = r#"{
  "name": "stochastic-n-example",
  "dataset": {"kind": "mnist", "dir": "data/mnist-5k", "train_subsample": 1000, "test_subsample": 500},
  "network": {"preset": "desk-16-16-16", "init_std": 0.05},
  "pooling": {"train": "stochastic", "test": "probweight"},
  "optimizer": {"lr_conv": 0.02, "lr_softmax": 0.1},
  "epochs": 5,
  "batch_size": 32,
  "seed": 2
}"#;

fn main() -> stochpool::Result<()> {
    let config = ExperimentConfig::from_json(CONFIG)?;
    let data = prepare(&config)?;
    let run = train(&config, &data, TrainOptions::default())?;
    let mut stream = RngStream::derive(config.seed, Purpose::Evaluation);
    let reference = evaluate(&run.net, &run.params, &data.test, Some(PoolingMode::ProbWeight), &mut stream, 100)?;
    println!("probweight    error {:6.2}%  loss {:.4}", reference.error, reference.loss);
    for n in [1, 3, 10, 30, 100] {
        let e = evaluate(&run.net, &run.params, &data.test, Some(PoolingMode::StochasticN(n)), &mut stream, 100)?;
        println!("stochastic-{n:<3} error {:6.2}%  loss {:.4}  |loss - probweight| {:.4}", e.error, e.loss, (e.loss - reference.loss).abs());
    }
    Ok(())
}
