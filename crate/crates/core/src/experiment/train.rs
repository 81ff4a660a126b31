//! The training loop and evaluation passes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;

use super::checkpoint::Checkpoint;
use super::config::{ExperimentConfig, PreparedData};
use super::metrics::{write_metrics_csv, write_timing_csv, MetricsRow};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::{network_backward, network_forward, predict, NetParams, Network, ParamGroup, Phase};
use crate::optim::SgdState;
use crate::pooling::PoolingMode;
use crate::rng::{Purpose, RngStream};
use crate::tensor::Tensor4;

/// Error rate, loss and confusion counts of one evaluation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Percent of misclassified examples.
    pub error: f64,
    /// Mean negative log probability of the true class.
    pub loss: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Classifies `data` in batches. `mode` overrides every pooling layer;
/// `None` uses each layer's test mode. Random modes draw from `stream`.
pub fn evaluate(
    net: &Network,
    params: &NetParams,
    data: &Dataset,
    mode: Option<PoolingMode>,
    stream: &mut RngStream,
    batch_size: usize,
) -> Result<Evaluation> {
    let k = net.classes();
    let mut confusion = vec![vec![0usize; k]; k];
    let mut loss = 0.0;
    let mut wrong = 0usize;
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, labels) = data.batch(chunk);
        let probs = predict(net, params, &x, mode, stream)?;
        for (n, &label) in labels.iter().enumerate() {
            let row = probs.item(n);
            let pred = argmax(row);
            confusion[label][pred] += 1;
            wrong += (pred != label) as usize;
            loss -= row[label].max(1e-300).ln();
        }
    }
    let n = data.len().max(1) as f64;
    Ok(Evaluation {
        error: 100.0 * wrong as f64 / n,
        loss: loss / n,
        confusion,
    })
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = j;
        }
    }
    best
}

/// Stream used for epoch `epoch` (0-based) of the given purpose.
pub fn epoch_stream(seed: u64, purpose: Purpose, epoch: usize) -> RngStream {
    RngStream::derive(seed, purpose).child(epoch as u64)
}

/// Training order for epoch `epoch`: a seeded permutation of `0..n`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = epoch_stream(seed, Purpose::Shuffle, epoch).substream(0);
    order.shuffle(&mut rng);
    order
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Directory for metrics and checkpoints; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    /// Continue from this checkpoint instead of a fresh initialization.
    pub resume: Option<Checkpoint>,
    /// Stop after this many completed epochs, keeping the full schedule.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub net: Network,
    pub params: NetParams,
    pub sgd: SgdState,
    pub metrics: Vec<MetricsRow>,
    /// Final checkpoint directory, when an output directory was given.
    pub checkpoint: Option<PathBuf>,
}

impl TrainRun {
    pub fn last(&self) -> &MetricsRow {
        self.metrics.last().expect("a run has at least one epoch")
    }
}

struct Writer<'a> {
    config: &'a ExperimentConfig,
    mean: Option<&'a Tensor4>,
    dir: Option<&'a Path>,
}

impl Writer<'_> {
    fn checkpoint(&self, name: &str, net: &Network, params: &NetParams, sgd: &SgdState, epoch: usize, metrics: &[MetricsRow]) -> Result<Option<PathBuf>> {
        let Some(dir) = self.dir else { return Ok(None) };
        let seed = self.config.seed;
        let mut streams = BTreeMap::new();
        streams.insert("shuffle".into(), RngStream::derive(seed, Purpose::Shuffle).child(epoch as u64));
        streams.insert("pooling".into(), epoch_stream(seed, Purpose::Pooling, epoch));
        streams.insert("evaluation".into(), epoch_stream(seed, Purpose::Evaluation, epoch));
        let ck = Checkpoint {
            spec: net.spec().clone(),
            params: params.clone(),
            velocities: Some(sgd.velocities.clone()),
            epoch,
            total_epochs: sgd.total_epochs,
            seed,
            streams,
            config: Some(self.config.clone()),
            metrics: metrics.to_vec(),
            mean: self.mean.cloned(),
        };
        ck.save(dir.join("checkpoints").join(name)).map(Some)
    }

    fn metrics(&self, rows: &[MetricsRow]) -> Result<()> {
        let Some(dir) = self.dir else { return Ok(()) };
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("metrics.csv");
        fs::write(&path, write_metrics_csv(rows)).map_err(|e| Error::io(&path, e))?;
        let path = dir.join("timing.csv");
        fs::write(&path, write_timing_csv(rows)).map_err(|e| Error::io(&path, e))
    }
}

/// Runs mini-batch SGD for `config.epochs` epochs (or until `stop_after`),
/// evaluating the test split after every epoch.
pub fn train(config: &ExperimentConfig, data: &PreparedData, options: TrainOptions) -> Result<TrainRun> {
    config.validate()?;
    let net = config.network()?;
    let seed = config.seed;
    let (mut params, mut sgd, mut metrics, start) = match options.resume {
        Some(ck) => {
            if ck.spec.fingerprint() != net.spec().fingerprint() || ck.seed != seed || ck.total_epochs != config.epochs {
                return Err(Error::Config("checkpoint does not belong to this config".into()));
            }
            let mut sgd = SgdState::new(config.optimizer, &ck.params, config.epochs)?;
            if let Some(v) = ck.velocities {
                sgd.velocities = v;
            }
            (ck.params, sgd, ck.metrics, ck.epoch)
        }
        None => {
            let params = NetParams::init(&net, &mut RngStream::derive(seed, Purpose::Init));
            let sgd = SgdState::new(config.optimizer, &params, config.epochs)?;
            (params, sgd, Vec::new(), 0)
        }
    };
    let writer = Writer {
        config,
        mean: data.mean.as_ref(),
        dir: options.out_dir.as_deref(),
    };
    let end = options.stop_after.unwrap_or(config.epochs).min(config.epochs);
    let mut last_checkpoint = None;
    for epoch in start..end {
        let clock = Instant::now();
        let good = (params.clone(), sgd.clone());
        let outcome = run_epoch(config, &net, data, &mut params, &mut sgd, epoch).and_then(|train| {
            let mut stream = epoch_stream(seed, Purpose::Evaluation, epoch);
            let eval = evaluate(&net, &params, &data.test, None, &mut stream, config.eval_batch_size)?;
            if !eval.loss.is_finite() {
                return Err(Error::Numerical(format!("test loss became {} in epoch {}", eval.loss, epoch + 1)));
            }
            Ok((train, eval))
        });
        let ((train_error, train_loss), eval) = match outcome {
            Ok(v) => v,
            Err(e @ Error::Numerical(_)) => {
                writer.checkpoint("last-good", &net, &good.0, &good.1, epoch, &metrics)?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        metrics.push(MetricsRow {
            epoch: epoch + 1,
            train_error,
            test_error: eval.error,
            train_loss,
            test_loss: eval.loss,
            lr_conv: sgd.lr(ParamGroup::Conv, epoch)?,
            lr_softmax: sgd.lr(ParamGroup::Softmax, epoch)?,
            seconds: clock.elapsed().as_secs_f64(),
        });
        writer.metrics(&metrics)?;
        let done = epoch + 1;
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 {
            last_checkpoint = writer.checkpoint(&format!("epoch-{done:04}"), &net, &params, &sgd, done, &metrics)?;
        }
    }
    if end == config.epochs && end > start {
        last_checkpoint = writer.checkpoint("final", &net, &params, &sgd, end, &metrics)?;
    }
    Ok(TrainRun {
        net,
        params,
        sgd,
        metrics,
        checkpoint: last_checkpoint,
    })
}

/// One pass over the shuffled training split. Returns the running train
/// error (percent) and mean loss.
fn run_epoch(
    config: &ExperimentConfig,
    net: &Network,
    data: &PreparedData,
    params: &mut NetParams,
    sgd: &mut SgdState,
    epoch: usize,
) -> Result<(f64, f64)> {
    let order = epoch_order(config.seed, epoch, data.train.len());
    let mut pooling = epoch_stream(config.seed, Purpose::Pooling, epoch);
    let (mut wrong, mut loss_sum) = (0usize, 0.0);
    for chunk in order.chunks(config.batch_size) {
        let (x, labels) = data.train.batch(chunk);
        let trace = network_forward(net, params, &x, Phase::Train, &mut pooling)?;
        wrong += trace.predictions().iter().zip(&labels).filter(|(p, l)| p != l).count();
        let grads = network_backward(net, params, &trace, &labels)?;
        if !grads.loss.is_finite() {
            return Err(Error::Numerical(format!("loss became {} in epoch {}", grads.loss, epoch + 1)));
        }
        loss_sum += grads.loss * chunk.len() as f64;
        sgd.step(params, &grads.params, epoch)?;
    }
    let n = data.train.len().max(1) as f64;
    Ok((100.0 * wrong as f64 / n, loss_sum / n))
}
