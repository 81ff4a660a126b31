//! Projects a top-layer activation back to pixel space with recorded,
//! feed-forward resampled and uniform switches, writing PGM images and
//! the similarity statistic to a temporary directory.

use stochpool::deconviz::{mean_cross_similarity, mean_self_similarity, reconstruct, reconstruct_samples, write_pnm, ReconstructOptions, SwitchSource};
use stochpool::experiment::{prepare, top_feature_layer, train, ExperimentConfig, TrainOptions};
use stochpool::net::{network_forward, Phase};
use stochpool::rng::{Purpose, RngStream};

const CONFIG: &str = r#"{
  "name": "deconv-example",
  "dataset": {"kind": "blobs", "train": 200, "test": 20, "classes": 4, "channels": 1, "size": 16, "seed": 1, "scale_unit": false},
  "network": {"preset": "desk-16-16-16", "init_std": 0.1, "response_norm": false},
  "pooling": {"train": "stochastic", "test": "probweight"},
  "optimizer": {"lr_conv": 0.02, "lr_softmax": 0.05},
  "epochs": 3,
  "batch_size": 16,
  "seed": 9
}"#;

fn main() -> stochpool::Result<()> {
    let config = ExperimentConfig::from_json(CONFIG)?;
    let data = prepare(&config)?;
    let run = train(&config, &data, TrainOptions::default())?;
    let (image, _) = data.test.batch(&[0]);
    let trace = network_forward(&run.net, &run.params, &image, Phase::Train, &mut RngStream::derive(9, Purpose::Visualization))?;
    let top = top_feature_layer(&run.net);
    let pools = run.net.pool_layers().len();
    let options = ReconstructOptions::default();

    let out = std::env::temp_dir().join("stochpool-deconv-example");
    std::fs::create_dir_all(&out).map_err(|e| stochpool::Error::Io { path: out.clone(), source: e })?;
    let recorded = reconstruct(&run.net, &run.params, &trace, top, &vec![SwitchSource::Recorded; pools], options)?;
    write_pnm(out.join("recorded.pgm"), &recorded)?;
    let ff = reconstruct_samples(&run.net, &run.params, &trace, top, &vec![SwitchSource::FeedForward { seed: 0 }; pools], 100, 16, options)?;
    let un = reconstruct_samples(&run.net, &run.params, &trace, top, &vec![SwitchSource::Uniform { seed: 0 }; pools], 200, 16, options)?;
    for (k, im) in ff.iter().take(4).enumerate() {
        write_pnm(out.join(format!("ff_{k}.pgm")), im)?;
        write_pnm(out.join(format!("un_{k}.pgm")), &un[k])?;
    }
    println!("images in {}", out.display());
    println!("ff-ff correlation {:.4}", mean_self_similarity(&ff)?);
    println!("ff-un correlation {:.4}", mean_cross_similarity(&ff, &un)?);
    Ok(())
}
