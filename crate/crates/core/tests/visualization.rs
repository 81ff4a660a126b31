mod common;

use std::fs;
use std::path::Path;

use common::blobs_config;
use stochpool::deconviz::{mean_cross_similarity, reconstruct_samples, ReconstructOptions, SwitchSource};
use stochpool::experiment::{cmd_train, cmd_visualize, top_feature_layer, Checkpoint, TrainOptions, VisualizeOptions};
use stochpool::net::{network_forward, Phase};
use stochpool::rng::RngStream;

fn trained(dir: &Path) -> Checkpoint {
    let options = TrainOptions {
        out_dir: Some(dir.join("run")),
        ..TrainOptions::default()
    };
    cmd_train(&blobs_config(3, 31), options).unwrap();
    Checkpoint::load(dir.join("run/checkpoints/final")).unwrap()
}

fn options(dir: &Path, sources: &str, grid: usize) -> VisualizeOptions {
    VisualizeOptions {
        image_index: 1,
        from_layer: None,
        sources: sources.into(),
        grid,
        stat_samples: 16,
        seed: 4,
        rectify: true,
        out_dir: dir.to_path_buf(),
    }
}

fn count(dir: &Path, ext: &str) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == ext))
        .count()
}

#[test]
fn feed_forward_grid_writes_sixteen_images_and_a_montage() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = trained(tmp.path());
    let out = tmp.path().join("ff");
    let report = cmd_visualize(&ck, &options(&out, "ff", 4)).unwrap();
    assert_eq!(count(&out, "pgm"), 17);
    assert_eq!(count(&out, "sp4t"), 16);
    assert!(out.join("montage.pgm").exists());
    let stats = fs::read_to_string(out.join("similarity.csv")).unwrap();
    assert!(stats.starts_with("layer,samples,ff_ff_ncc,ff_un_ncc,ff_more_self_similar\n"));
    assert!(report.ff_self > report.ff_uniform, "{report:?}");
}

#[test]
fn recorded_single_reconstruction_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = trained(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    cmd_visualize(&ck, &options(&a, "rec", 1)).unwrap();
    cmd_visualize(&ck, &options(&b, "rec", 1)).unwrap();
    assert_eq!(count(&a, "pgm"), 2);
    assert_eq!(fs::read(a.join("sample_00.sp4t")).unwrap(), fs::read(b.join("sample_00.sp4t")).unwrap());
    assert!(cmd_visualize(&ck, &options(&a, "rec,ff", 1)).is_err());
}

#[test]
fn uniform_switches_hurt_more_at_lower_layers() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = trained(tmp.path());
    let net = ck.network().unwrap();
    let config = ck.config.clone().unwrap();
    let test = stochpool::experiment::prepare(&config).unwrap().test;
    let top = top_feature_layer(&net);
    let pools = net.pool_layers().len();
    let recon = ReconstructOptions::default();
    let ff = vec![SwitchSource::FeedForward { seed: 0 }; pools];
    let mut low = Vec::new();
    let mut high = Vec::new();
    for image in 0..8 {
        let (x, _) = test.batch(&[image]);
        let trace = network_forward(&net, &ck.params, &x, Phase::Train, &mut RngStream::new(image as u64)).unwrap();
        let reference = reconstruct_samples(&net, &ck.params, &trace, top, &ff, 10, 8, recon).unwrap();
        let with_uniform_at = |layer: usize| {
            let mut s = ff.clone();
            s[layer] = SwitchSource::Uniform { seed: 0 };
            let r = reconstruct_samples(&net, &ck.params, &trace, top, &s, 20, 8, recon).unwrap();
            mean_cross_similarity(&reference, &r).unwrap()
        };
        low.push(with_uniform_at(0));
        high.push(with_uniform_at(pools - 1));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&low) < mean(&high), "uniform at bottom {} vs top {}", mean(&low), mean(&high));
}
