//! The experiment commands behind the `stochpool` binary.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::checkpoint::Checkpoint;
use super::config::{prepare, prepare_test_with_mean, ExperimentConfig};
use super::metrics::{pct, Table};
use super::train::{epoch_stream, evaluate, train, Evaluation, TrainOptions, TrainRun};
use crate::data::convert_svhn_raw;
use crate::deconviz::{
    mean_cross_similarity, mean_self_similarity, montage, reconstruct, reconstruct_samples, write_pnm,
    ReconstructOptions, SwitchSource,
};
use crate::error::{Error, Result};
use crate::net::{network_forward_with, ForwardOptions, Layer, Network, Phase};
use crate::pooling::PoolingMode;
use crate::rng::{Purpose, RngStream};

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Trains per `config`, writing metrics, checkpoints and the resolved config
/// under `options.out_dir`.
pub fn cmd_train(config: &ExperimentConfig, options: TrainOptions) -> Result<TrainRun> {
    config.validate()?;
    if let Some(dir) = &options.out_dir {
        write_file(&dir.join("config.json"), config.to_json())?;
    }
    let data = prepare(config)?;
    train(config, &data, options)
}

/// Evaluates a checkpoint on its config's test split.
///
/// `mode: None` uses the network's test modes. Without an explicit `seed`,
/// random modes replay the stream of the checkpoint's last logged
/// evaluation, so the logged test error is reproduced exactly.
pub fn cmd_eval(checkpoint: &Checkpoint, mode: Option<PoolingMode>, seed: Option<u64>) -> Result<Evaluation> {
    let config = checkpoint
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("checkpoint has no experiment config to load data from".into()))?;
    let net = checkpoint.network()?;
    let test = prepare_test_with_mean(config, checkpoint.mean.as_ref())?;
    if test.image_dims() != net.spec().input {
        return Err(Error::Config("test images do not fit the checkpoint's network".into()));
    }
    let mut stream = match seed {
        Some(s) => RngStream::derive(s, Purpose::Evaluation),
        None => epoch_stream(checkpoint.seed, Purpose::Evaluation, checkpoint.epoch.saturating_sub(1)),
    };
    evaluate(&net, &checkpoint.params, &test, mode, &mut stream, config.eval_batch_size)
}

/// `eval.csv` and `confusion.csv` for one evaluation.
pub fn eval_tables(mode: &str, eval: &Evaluation) -> (Table, Table) {
    let mut summary = Table::new(&["mode", "examples", "error_pct", "loss"]);
    let n: usize = eval.confusion.iter().flatten().sum();
    summary.push(vec![mode.into(), n.to_string(), pct(eval.error), format!("{:.6}", eval.loss)]);
    let k = eval.confusion.len();
    let mut header = vec!["true".to_string()];
    header.extend((0..k).map(|j| format!("pred_{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut confusion = Table::new(&header);
    for (i, row) in eval.confusion.iter().enumerate() {
        let mut r = vec![i.to_string()];
        r.extend(row.iter().map(|c| c.to_string()));
        confusion.push(r);
    }
    (summary, confusion)
}

fn sub_dir(out: Option<&Path>, name: String) -> Option<PathBuf> {
    out.map(|d| d.join(name))
}

/// Trains one model per train mode and evaluates each under every test
/// mode. Rows: `train_mode, test_mode, train_error_pct, test_error_pct`.
pub fn cmd_combo_matrix(
    config: &ExperimentConfig,
    train_modes: &[PoolingMode],
    test_modes: &[PoolingMode],
    out: Option<&Path>,
) -> Result<Table> {
    if train_modes.is_empty() || test_modes.is_empty() {
        return Err(Error::Config("combination matrix needs train and test modes".into()));
    }
    let data = prepare(config)?;
    let mut table = Table::new(&["train_mode", "test_mode", "train_error_pct", "test_error_pct"]);
    for &tm in train_modes {
        let mut c = config.clone();
        c.pooling.train = tm;
        let options = TrainOptions {
            out_dir: sub_dir(out, format!("train-{tm}")),
            ..TrainOptions::default()
        };
        let run = train(&c, &data, options)?;
        for (j, &em) in test_modes.iter().enumerate() {
            let mut stream = RngStream::derive(c.seed, Purpose::Evaluation).child(1000 + j as u64);
            let eval = evaluate(&run.net, &run.params, &data.test, Some(em), &mut stream, c.eval_batch_size)?;
            table.push(vec![tm.to_string(), em.to_string(), pct(run.last().train_error), pct(eval.error)]);
        }
    }
    if let Some(dir) = out {
        write_file(&dir.join("combo_matrix.csv"), table.to_csv())?;
    }
    Ok(table)
}

/// Train and test modes used for a method name in sweeps: stochastic
/// training is paired with probabilistic weighting at test time.
pub fn method_modes(method: PoolingMode) -> (PoolingMode, PoolingMode) {
    match method {
        PoolingMode::Stochastic | PoolingMode::StochasticN(_) => (PoolingMode::Stochastic, PoolingMode::ProbWeight),
        m => (m, m),
    }
}

/// One training run per `(size, method)`. Infeasible geometries produce
/// `skipped` rows. Rows: `size, stride, method, status, train_error_pct, test_error_pct`.
pub fn cmd_sweep_pool_size(
    config: &ExperimentConfig,
    sizes: &[usize],
    stride: Option<usize>,
    methods: &[PoolingMode],
    out: Option<&Path>,
) -> Result<Table> {
    let data = prepare(config)?;
    let mut table = Table::new(&["size", "stride", "method", "status", "train_error_pct", "test_error_pct"]);
    for &size in sizes {
        let st = stride.unwrap_or(size.min(2));
        for &m in methods {
            let (train_mode, test_mode) = method_modes(m);
            let mut c = config.clone();
            c.pooling.size = Some(size);
            c.pooling.stride = Some(st);
            c.pooling.train = train_mode;
            c.pooling.test = test_mode;
            let mut row = vec![size.to_string(), st.to_string(), m.to_string()];
            if size == 0 || st == 0 || c.network().is_err() {
                row.extend(["skipped".to_string(), String::new(), String::new()]);
            } else {
                let options = TrainOptions {
                    out_dir: sub_dir(out, format!("size{size}-{m}")),
                    ..TrainOptions::default()
                };
                let run = train(&c, &data, options)?;
                row.extend(["ok".to_string(), pct(run.last().train_error), pct(run.last().test_error)]);
            }
            table.push(row);
        }
    }
    if let Some(dir) = out {
        write_file(&dir.join("pool_size_sweep.csv"), table.to_csv())?;
    }
    Ok(table)
}

/// Trains on random subsets of the training split. Rows sorted by `n`:
/// `n, method, train_error_pct, test_error_pct`.
pub fn cmd_reduced_set(
    config: &ExperimentConfig,
    sizes: &[usize],
    methods: &[PoolingMode],
    out: Option<&Path>,
) -> Result<Table> {
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let mut table = Table::new(&["n", "method", "train_error_pct", "test_error_pct"]);
    for &n in &sizes {
        let mut c = config.clone();
        c.dataset.train_subsample = Some(n);
        let data = prepare(&c)?;
        for &m in methods {
            let (train_mode, test_mode) = method_modes(m);
            let mut cm = c.clone();
            cm.pooling.train = train_mode;
            cm.pooling.test = test_mode;
            let options = TrainOptions {
                out_dir: sub_dir(out, format!("n{n}-{m}")),
                ..TrainOptions::default()
            };
            let run = train(&cm, &data, options)?;
            table.push(vec![n.to_string(), m.to_string(), pct(run.last().train_error), pct(run.last().test_error)]);
        }
    }
    if let Some(dir) = out {
        write_file(&dir.join("reduced_set.csv"), table.to_csv())?;
    }
    Ok(table)
}

/// Switch source kinds as written on the command line: `rec`, `ff`, `un`.
pub fn parse_sources(text: &str, pool_layers: usize) -> Result<Vec<SwitchSource>> {
    let kinds: Vec<SwitchSource> = text
        .split(',')
        .map(|t| match t.trim() {
            "rec" | "recorded" => Ok(SwitchSource::Recorded),
            "ff" => Ok(SwitchSource::FeedForward { seed: 0 }),
            "un" => Ok(SwitchSource::Uniform { seed: 0 }),
            other => Err(Error::Config(format!("unknown switch source {other:?} (use rec, ff or un)"))),
        })
        .collect::<Result<_>>()?;
    match kinds.len() {
        1 => Ok(vec![kinds[0]; pool_layers]),
        n if n == pool_layers => Ok(kinds),
        n => Err(Error::Config(format!("{n} switch sources for {pool_layers} pooling layers"))),
    }
}

#[derive(Debug, Clone)]
pub struct VisualizeOptions {
    /// Index into the checkpoint config's test split.
    pub image_index: usize,
    /// Layer whose output is projected; defaults to the last layer before the classifier.
    pub from_layer: Option<usize>,
    /// One source per pooling layer at or below `from_layer` (or one for all).
    pub sources: String,
    /// The grid is `grid x grid` reconstructions.
    pub grid: usize,
    /// Reconstructions per group for the FF/UN statistic.
    pub stat_samples: usize,
    pub seed: u64,
    pub rectify: bool,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisualizeReport {
    pub files: Vec<PathBuf>,
    /// Mean pairwise correlation among feed-forward resamples.
    pub ff_self: f64,
    /// Mean correlation between feed-forward and uniform resamples.
    pub ff_uniform: f64,
}

/// Default projection layer: the last layer below the classifier.
pub fn top_feature_layer(net: &Network) -> usize {
    net.layers()
        .iter()
        .rposition(|l| !matches!(l, Layer::Softmax { .. }))
        .unwrap_or(0)
}

/// Writes a grid of reconstructions of one test image plus the FF/UN
/// similarity statistic.
pub fn cmd_visualize(checkpoint: &Checkpoint, options: &VisualizeOptions) -> Result<VisualizeReport> {
    let config = checkpoint
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("checkpoint has no experiment config to load data from".into()))?;
    let net = checkpoint.network()?;
    let test = prepare_test_with_mean(config, checkpoint.mean.as_ref())?;
    if options.image_index >= test.len() {
        return Err(Error::Config(format!(
            "image index {} outside a test split of {}",
            options.image_index,
            test.len()
        )));
    }
    if options.grid == 0 {
        return Err(Error::Config("grid must be at least 1".into()));
    }
    let from = options.from_layer.unwrap_or_else(|| top_feature_layer(&net));
    let pools = net.pool_layers().into_iter().filter(|&i| i <= from).count();
    let sources = parse_sources(&options.sources, pools)?;
    let (x, _) = test.batch(&[options.image_index]);
    let forward = ForwardOptions {
        phase: Phase::Test,
        pool_override: Some(PoolingMode::Stochastic),
        replay: None,
    };
    let mut stream = RngStream::derive(options.seed, Purpose::Visualization);
    let trace = network_forward_with(&net, &checkpoint.params, &x, forward, &mut stream)?;
    let recon = ReconstructOptions { rectify: options.rectify };
    let count = options.grid * options.grid;
    let samples = if sources.iter().all(|s| *s == SwitchSource::Recorded) {
        vec![reconstruct(&net, &checkpoint.params, &trace, from, &sources, recon)?; count]
    } else {
        reconstruct_samples(&net, &checkpoint.params, &trace, from, &sources, options.seed, count, recon)?
    };
    let ext = if x.shape().c == 3 { "ppm" } else { "pgm" };
    let mut files = Vec::new();
    fs::create_dir_all(&options.out_dir).map_err(|e| Error::io(&options.out_dir, e))?;
    for (k, im) in samples.iter().enumerate() {
        let path = options.out_dir.join(format!("sample_{k:02}.{ext}"));
        write_pnm(&path, im)?;
        im.save(options.out_dir.join(format!("sample_{k:02}.sp4t")))?;
        files.push(path);
    }
    let path = options.out_dir.join(format!("montage.{ext}"));
    write_pnm(&path, &montage(&samples, options.grid, 1)?)?;
    files.push(path);

    let n = options.stat_samples.max(2);
    let groups: Vec<Vec<_>> = [SwitchSource::FeedForward { seed: 0 }, SwitchSource::Uniform { seed: 0 }]
        .par_iter()
        .enumerate()
        .map(|(g, kind)| {
            let all = vec![*kind; pools];
            let base = options.seed.wrapping_add(1_000_000 * (g as u64 + 1));
            reconstruct_samples(&net, &checkpoint.params, &trace, from, &all, base, n, recon)
        })
        .collect::<Result<_>>()?;
    let ff_self = mean_self_similarity(&groups[0])?;
    let ff_uniform = mean_cross_similarity(&groups[0], &groups[1])?;
    let mut stats = Table::new(&["layer", "samples", "ff_ff_ncc", "ff_un_ncc", "ff_more_self_similar"]);
    stats.push(vec![
        from.to_string(),
        n.to_string(),
        format!("{ff_self:.6}"),
        format!("{ff_uniform:.6}"),
        (ff_self > ff_uniform).to_string(),
    ]);
    let path = options.out_dir.join("similarity.csv");
    write_file(&path, stats.to_csv())?;
    files.push(path);
    Ok(VisualizeReport {
        files,
        ff_self,
        ff_uniform,
    })
}

/// Converts SVHN raw dumps (see [`convert_svhn_raw`]) to a CIFAR-10 layout
/// binary. Returns the record count.
pub fn cmd_convert_svhn(images: &Path, labels: &Path, out: &Path) -> Result<usize> {
    let img = fs::read(images).map_err(|e| Error::io(images, e))?;
    let lab = fs::read(labels).map_err(|e| Error::io(labels, e))?;
    let bytes = convert_svhn_raw(&img, &lab)?;
    write_file(out, bytes)?;
    Ok(lab.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_lists() {
        assert_eq!(parse_sources("ff", 3).unwrap().len(), 3);
        assert_eq!(
            parse_sources("un,ff", 2).unwrap(),
            vec![SwitchSource::Uniform { seed: 0 }, SwitchSource::FeedForward { seed: 0 }]
        );
        assert!(parse_sources("ff,ff", 3).is_err());
        assert!(parse_sources("xx", 1).is_err());
    }

    #[test]
    fn stochastic_methods_test_with_probweight() {
        assert_eq!(method_modes(PoolingMode::Stochastic), (PoolingMode::Stochastic, PoolingMode::ProbWeight));
        assert_eq!(method_modes(PoolingMode::Max), (PoolingMode::Max, PoolingMode::Max));
    }
}
