//! Experiment configuration files (JSON).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    apply_mean, blobs_split, load_cifar_binary, load_idx, local_contrast_normalize, local_contrast_normalize_auto,
    per_pixel_mean_subtract, scale_unit, subsample, Dataset, LCN_DEFAULT_RADIUS,
};
use crate::error::{Error, Result};
use crate::net::{Network, NetworkSpec};
use crate::optim::SgdConfig;
use crate::pooling::PoolingMode;
use crate::rng::{splitmix64, Purpose, RngStream};
use crate::tensor::Tensor4;

/// Where the images come from. Directory sources expect the standard file
/// names of each distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    /// `train-images-idx3-ubyte`, `train-labels-idx1-ubyte`,
    /// `t10k-images-idx3-ubyte`, `t10k-labels-idx1-ubyte`.
    Mnist { dir: PathBuf },
    /// `data_batch_1.bin` .. `data_batch_5.bin`, `test_batch.bin`.
    Cifar10 { dir: PathBuf },
    /// `train.bin`, `test.bin`.
    Cifar100 { dir: PathBuf },
    /// `train.bin`, `test.bin` in CIFAR-10 layout (see `convert-svhn`).
    Svhn { dir: PathBuf },
    /// Synthetic separable blobs.
    Blobs {
        train: usize,
        test: usize,
        classes: usize,
        channels: usize,
        size: usize,
        seed: u64,
    },
}

impl DataSource {
    /// Image and label file paths for the train and test splits.
    pub fn files(&self) -> Option<(Vec<PathBuf>, Vec<PathBuf>)> {
        let join = |dir: &Path, names: &[&str]| names.iter().map(|n| dir.join(n)).collect::<Vec<_>>();
        match self {
            DataSource::Mnist { dir } => Some((
                join(dir, &["train-images-idx3-ubyte", "train-labels-idx1-ubyte"]),
                join(dir, &["t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]),
            )),
            DataSource::Cifar10 { dir } => Some((
                join(dir, &["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"]),
                join(dir, &["test_batch.bin"]),
            )),
            DataSource::Cifar100 { dir } | DataSource::Svhn { dir } => {
                Some((join(dir, &["train.bin"]), join(dir, &["test.bin"])))
            }
            DataSource::Blobs { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcnConfig {
    #[serde(default = "default_lcn_radius")]
    pub radius: usize,
    /// Fixed divisor floor; omitted means the mean local deviation.
    #[serde(default)]
    pub floor: Option<f64>,
}

fn default_lcn_radius() -> usize {
    LCN_DEFAULT_RADIUS
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    #[serde(flatten)]
    pub source: DataSource,
    /// Divide raw bytes by 255.
    #[serde(default = "yes")]
    pub scale_unit: bool,
    #[serde(default)]
    pub mean_subtract: bool,
    #[serde(default)]
    pub lcn: Option<LcnConfig>,
    /// Random training subset size.
    #[serde(default)]
    pub train_subsample: Option<usize>,
    /// Random test subset size.
    #[serde(default)]
    pub test_subsample: Option<usize>,
    /// Seed for both subsets; defaults to one derived from the master seed.
    #[serde(default)]
    pub subsample_seed: Option<u64>,
}

/// Network preset name or inline spec. Input shape and class count of a
/// preset come from the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub spec: Option<NetworkSpec>,
    #[serde(default = "yes")]
    pub response_norm: bool,
    #[serde(default)]
    pub init_std: Option<f64>,
}

/// Pooling modes and geometry applied to every pooling layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolingConfig {
    pub train: PoolingMode,
    pub test: PoolingMode,
    #[serde(default)]
    pub size: Option<usize>,
    #[serde(default)]
    pub stride: Option<usize>,
}

fn default_batch_size() -> usize {
    128
}

fn default_eval_batch() -> usize {
    250
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetConfig,
    pub network: NetworkConfig,
    pub pooling: PoolingConfig,
    #[serde(default)]
    pub optimizer: SgdConfig,
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Batch size for evaluation passes; does not affect results.
    #[serde(default = "default_eval_batch")]
    pub eval_batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Write a checkpoint every this many epochs (0: only the final one).
    #[serde(default)]
    pub checkpoint_every: usize,
}

/// Loaded, preprocessed splits plus the statistics needed to repeat the
/// preprocessing on new data.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    pub mean: Option<Tensor4>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("cannot parse experiment config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        ExperimentConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(Error::Config("epochs and batch sizes must be positive".into()));
        }
        if self.network.preset.is_some() == self.network.spec.is_some() {
            return Err(Error::Config("network needs exactly one of `preset` or `spec`".into()));
        }
        self.pooling.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.pooling.test.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.pooling.size.is_none() && self.pooling.stride.is_some() {
            return Err(Error::Config("pooling stride given without a size".into()));
        }
        if self.dataset.mean_subtract && self.dataset.lcn.is_some() {
            return Err(Error::Config("choose either mean subtraction or local contrast normalization".into()));
        }
        self.optimizer.validate()
    }

    pub fn subsample_seed(&self) -> u64 {
        self.dataset
            .subsample_seed
            .unwrap_or_else(|| RngStream::derive(self.seed, Purpose::Subsample).seed())
    }

    /// Class count and `(c, h, w)` of the configured data source.
    pub fn data_dims(&self) -> (usize, (usize, usize, usize)) {
        match &self.dataset.source {
            DataSource::Mnist { .. } => (10, (1, 28, 28)),
            DataSource::Cifar10 { .. } | DataSource::Svhn { .. } => (10, (3, 32, 32)),
            DataSource::Cifar100 { .. } => (100, (3, 32, 32)),
            DataSource::Blobs { classes, channels, size, .. } => (*classes, (*channels, *size, *size)),
        }
    }

    /// The network this experiment trains, with the pooling section applied.
    pub fn network_spec(&self) -> Result<NetworkSpec> {
        let (classes, dims) = self.data_dims();
        let p = &self.pooling;
        let mut spec = match (&self.network.preset, &self.network.spec) {
            (Some(name), _) => NetworkSpec::preset(name, dims, classes, p.train, p.test)?,
            (None, Some(spec)) => spec.with_pool_modes(p.train, p.test),
            (None, None) => return Err(Error::Config("network needs a preset or a spec".into())),
        };
        if let Some(size) = p.size {
            spec = spec.with_pool_size(size, p.stride.unwrap_or(size.min(2)));
        }
        if !self.network.response_norm {
            spec = spec.without_lrn();
        }
        if let Some(std) = self.network.init_std {
            spec.init_std = std;
        }
        if spec.input != dims {
            return Err(Error::Config(format!(
                "network input {:?} does not match dataset images {dims:?}",
                spec.input
            )));
        }
        Ok(spec)
    }

    pub fn network(&self) -> Result<Network> {
        self.network_spec()?.resolve()
    }

    /// Stable hash of the config, used to name derived runs.
    pub fn hash(&self) -> u64 {
        self.to_json().bytes().fold(0x84222325, |h, b| splitmix64(h ^ b as u64))
    }
}

fn load_split(source: &DataSource, train: bool) -> Result<Dataset> {
    let (train_files, test_files) = match source.files() {
        Some(f) => f,
        None => unreachable!("synthetic sources are generated"),
    };
    let files = if train { train_files } else { test_files };
    match source {
        DataSource::Mnist { .. } => load_idx(&files[0], &files[1]),
        DataSource::Cifar10 { .. } | DataSource::Svhn { .. } => load_cifar_binary(&files, 10),
        DataSource::Cifar100 { .. } => load_cifar_binary(&files, 100),
        DataSource::Blobs { .. } => unreachable!(),
    }
}

/// Raw train and test splits after subsampling, before pixel transforms.
pub fn load_raw(config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let d = &config.dataset;
    let (train, test) = match &d.source {
        DataSource::Blobs {
            train,
            test,
            classes,
            channels,
            size,
            seed,
        } => {
            let dims = (*channels, *size, *size);
            (
                blobs_split(*train, *classes, dims, *seed, "train")?,
                blobs_split(*test, *classes, dims, seed.wrapping_add(1), "test")?,
            )
        }
        source => (load_split(source, true)?, load_split(source, false)?),
    };
    let seed = config.subsample_seed();
    let train = match d.train_subsample {
        Some(n) => subsample(&train, n, seed)?,
        None => train,
    };
    let test = match d.test_subsample {
        Some(n) => subsample(&test, n, seed.wrapping_add(1))?,
        None => test,
    };
    Ok((train, test))
}

fn pixel_steps(config: &DatasetConfig, d: Dataset) -> Result<Dataset> {
    let d = if config.scale_unit { scale_unit(&d)? } else { d };
    match config.lcn {
        Some(LcnConfig { radius, floor: Some(f) }) => local_contrast_normalize(&d, radius, f),
        Some(LcnConfig { radius, floor: None }) => local_contrast_normalize_auto(&d, radius),
        None => Ok(d),
    }
}

/// Loads and preprocesses both splits. Mean statistics come from the
/// training split only.
pub fn prepare(config: &ExperimentConfig) -> Result<PreparedData> {
    let (train, test) = load_raw(config)?;
    let train = pixel_steps(&config.dataset, train)?;
    let test = pixel_steps(&config.dataset, test)?;
    if config.dataset.mean_subtract {
        let (train, mut rest, mean) = per_pixel_mean_subtract(&train, &[&test])?;
        Ok(PreparedData {
            train,
            test: rest.remove(0),
            mean: Some(mean),
        })
    } else {
        Ok(PreparedData { train, test, mean: None })
    }
}

/// Preprocesses a test split with a stored mean image instead of
/// recomputing it.
pub fn prepare_test_with_mean(config: &ExperimentConfig, mean: Option<&Tensor4>) -> Result<Dataset> {
    let (_, test) = load_raw(config)?;
    let test = pixel_steps(&config.dataset, test)?;
    match (config.dataset.mean_subtract, mean) {
        (true, Some(m)) => apply_mean(&test, m, "train"),
        (true, None) => Err(Error::Config("config subtracts a mean but none was stored".into())),
        (false, _) => Ok(test),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob_config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "name": "t",
                "dataset": {"kind": "blobs", "train": 8, "test": 4, "classes": 2, "channels": 1, "size": 8, "seed": 1, "scale_unit": false},
                "network": {"spec": {"input": [1, 8, 8], "layers": [
                    {"type": "conv", "maps": 2, "kernel": 3, "padding": 1},
                    {"type": "relu"},
                    {"type": "pool", "size": 2, "stride": 2, "train": "max", "test": "max"},
                    {"type": "softmax", "classes": 2}]}},
                "pooling": {"train": "stochastic", "test": "probweight"},
                "epochs": 2,
                "seed": 3
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_and_round_trip() {
        let c = blob_config();
        assert_eq!(c.batch_size, 128);
        assert_eq!(c.optimizer, SgdConfig::default());
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
        let spec = c.network_spec().unwrap();
        assert!(spec.layers.iter().any(|l| matches!(
            l,
            crate::net::LayerSpec::Pool { train: PoolingMode::Stochastic, test: PoolingMode::ProbWeight, .. }
        )));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = blob_config();
        c.network.preset = Some("desk-16-16-16".into());
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::from_json("{}").is_err());
        let mut c = blob_config();
        c.pooling.size = Some(40);
        assert!(c.network().is_err());
    }

    #[test]
    fn preset_follows_dataset_dims() {
        let mut c = blob_config();
        c.network = NetworkConfig {
            preset: Some("desk-16-16-16".into()),
            spec: None,
            response_norm: false,
            init_std: Some(0.05),
        };
        c.dataset.source = DataSource::Mnist { dir: "nowhere".into() };
        let spec = c.network_spec().unwrap();
        assert_eq!(spec.input, (1, 28, 28));
        assert_eq!(spec.init_std, 0.05);
        assert!(!spec.layers.iter().any(|l| matches!(l, crate::net::LayerSpec::ResponseNorm(_))));
        assert!(matches!(prepare(&c), Err(Error::Io { .. })));
    }

    #[test]
    fn prepare_is_reproducible() {
        let mut c = blob_config();
        c.dataset.mean_subtract = true;
        c.dataset.train_subsample = Some(6);
        let a = prepare(&c).unwrap();
        let b = prepare(&c).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.train.len(), 6);
        let test = prepare_test_with_mean(&c, a.mean.as_ref()).unwrap();
        assert_eq!(test, a.test);
    }
}
