//! Checkpoint directories.
//!
//! ```text
//! manifest.txt      key=value lines: format, spec_hash, epoch, total_epochs,
//!                   seed, rng positions, parameter tensor names
//! spec.json         network spec
//! config.json       experiment config (when trained from one)
//! metrics.csv       rows logged up to this epoch
//! <param>.sp4t      one tensor per parameter
//! velocity_<param>.sp4t
//! mean.sp4t         training mean image, when mean subtraction is on
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::metrics::{read_metrics_csv, write_metrics_csv, MetricsRow};
use crate::error::{Error, Result};
use crate::net::{NetParams, Network, NetworkSpec};
use crate::rng::RngStream;
use crate::tensor::Tensor4;

const FORMAT: &str = "stochpool-checkpoint-1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub params: NetParams,
    /// Momentum velocities in parameter order.
    pub velocities: Option<Vec<Vec<f64>>>,
    /// Completed epochs.
    pub epoch: usize,
    pub total_epochs: usize,
    pub seed: u64,
    /// Named rng streams and their positions.
    pub streams: BTreeMap<String, RngStream>,
    pub config: Option<ExperimentConfig>,
    pub metrics: Vec<MetricsRow>,
    pub mean: Option<Tensor4>,
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl Checkpoint {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = vec![
            format!("format={FORMAT}"),
            format!("spec_hash={:016x}", self.spec.fingerprint()),
            format!("epoch={}", self.epoch),
            format!("total_epochs={}", self.total_epochs),
            format!("seed={}", self.seed),
        ];
        for (name, s) in &self.streams {
            manifest.push(format!("rng.{name}={}:{}", s.seed(), s.position()));
        }
        let tensors = self.params.tensors();
        manifest.push(format!("params={}", tensors.len()));
        for (info, t) in &tensors {
            let name = info.name();
            t.save(dir.join(format!("{name}.sp4t")))?;
            manifest.push(format!("param={name}"));
        }
        if let Some(vel) = &self.velocities {
            if vel.len() != tensors.len() {
                return Err(Error::dim("Checkpoint::save", "velocity count differs from parameter count"));
            }
            for ((info, _), v) in tensors.iter().zip(vel) {
                Tensor4::from_vec(info.shape, v.clone())?.save(dir.join(format!("velocity_{}.sp4t", info.name())))?;
            }
            manifest.push("velocities=yes".into());
        }
        if let Some(mean) = &self.mean {
            mean.save(dir.join("mean.sp4t"))?;
            manifest.push("mean=mean.sp4t".into());
        }
        write(&dir.join("spec.json"), serde_json::to_string_pretty(&self.spec).expect("specs serialize"))?;
        if let Some(config) = &self.config {
            write(&dir.join("config.json"), config.to_json())?;
        }
        write(&dir.join("metrics.csv"), write_metrics_csv(&self.metrics))?;
        manifest.push(String::new());
        write(&dir.join("manifest.txt"), manifest.join("\n"))?;
        Ok(dir.to_path_buf())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let text = read_text(&dir.join("manifest.txt"))?;
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        let mut param_names = Vec::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format("checkpoint manifest", format!("line without '=': {line}")))?;
            if k == "param" {
                param_names.push(v.to_string());
            } else {
                kv.insert(k.into(), v.into());
            }
        }
        let get = |k: &str| {
            kv.get(k)
                .ok_or_else(|| Error::format("checkpoint manifest", format!("missing key {k}")))
        };
        if get("format")? != FORMAT {
            return Err(Error::format("checkpoint manifest", format!("unknown format {}", get("format")?)));
        }
        let num = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| Error::format("checkpoint manifest", format!("{k} is not a number")))
        };
        let spec: NetworkSpec = serde_json::from_str(&read_text(&dir.join("spec.json"))?)
            .map_err(|e| Error::format("checkpoint spec", e.to_string()))?;
        let hash = format!("{:016x}", spec.fingerprint());
        if get("spec_hash")? != &hash {
            return Err(Error::format(
                "checkpoint manifest",
                format!("spec hash {} does not match spec.json ({hash})", get("spec_hash")?),
            ));
        }
        let net = spec.resolve()?;
        let mut params = NetParams::init(&net, &mut RngStream::new(0));
        let expected: Vec<String> = params.entries().iter().map(|(i, _)| i.name()).collect();
        if expected != param_names {
            return Err(Error::format("checkpoint manifest", "parameter list does not match the spec"));
        }
        let tensors = param_names
            .iter()
            .map(|n| Tensor4::load(dir.join(format!("{n}.sp4t"))))
            .collect::<Result<Vec<_>>>()?;
        params.load_tensors(&tensors)?;
        let velocities = if kv.contains_key("velocities") {
            Some(
                param_names
                    .iter()
                    .map(|n| Tensor4::load(dir.join(format!("velocity_{n}.sp4t"))).map(Tensor4::into_vec))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        let mut streams = BTreeMap::new();
        for (k, v) in &kv {
            if let Some(name) = k.strip_prefix("rng.") {
                let parsed = v
                    .split_once(':')
                    .and_then(|(s, p)| Some((s.parse::<u64>().ok()?, p.parse::<u64>().ok()?)));
                let (seed, pos) =
                    parsed.ok_or_else(|| Error::format("checkpoint manifest", format!("bad stream {k}={v}")))?;
                let mut s = RngStream::new(seed);
                s.set_position(pos);
                streams.insert(name.to_string(), s);
            }
        }
        let config_path = dir.join("config.json");
        let config = if config_path.exists() {
            Some(ExperimentConfig::from_json(&read_text(&config_path)?)?)
        } else {
            None
        };
        let metrics_path = dir.join("metrics.csv");
        let metrics = if metrics_path.exists() {
            read_metrics_csv(&read_text(&metrics_path)?)?
        } else {
            Vec::new()
        };
        let mean = match kv.get("mean") {
            Some(name) => Some(Tensor4::load(dir.join(name))?),
            None => None,
        };
        Ok(Checkpoint {
            spec,
            params,
            velocities,
            epoch: num("epoch")? as usize,
            total_epochs: num("total_epochs")? as usize,
            seed: num("seed")?,
            streams,
            config,
            metrics,
            mean,
        })
    }

    pub fn network(&self) -> Result<Network> {
        self.spec.resolve()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::LayerSpec;
    use crate::pooling::PoolingMode;

    #[test]
    fn save_load_round_trip() {
        let spec = NetworkSpec {
            input: (1, 6, 6),
            layers: vec![
                LayerSpec::Conv { maps: 2, kernel: 3, stride: 1, padding: 0 },
                LayerSpec::Relu,
                LayerSpec::Pool { size: 2, stride: 2, train: PoolingMode::Stochastic, test: PoolingMode::ProbWeight },
                LayerSpec::Softmax { classes: 3 },
            ],
            init_std: 0.1,
        };
        let net = spec.resolve().unwrap();
        let params = NetParams::init(&net, &mut RngStream::new(4));
        let velocities: Vec<Vec<f64>> = params.entries().iter().map(|(_, v)| v.iter().map(|x| x * 0.5).collect()).collect();
        let mut pooling = RngStream::new(77);
        pooling.set_position(12);
        let ck = Checkpoint {
            spec: spec.clone(),
            params: params.clone(),
            velocities: Some(velocities.clone()),
            epoch: 3,
            total_epochs: 10,
            seed: 9,
            streams: [("pooling".to_string(), pooling)].into_iter().collect(),
            config: None,
            metrics: vec![],
            mean: Some(Tensor4::filled(crate::tensor::Shape4::new(1, 1, 6, 6), 0.25)),
        };
        let dir = tempfile::tempdir().unwrap();
        ck.save(dir.path()).unwrap();
        let back = Checkpoint::load(dir.path()).unwrap();
        assert_eq!(back.spec, spec);
        assert_eq!(back.params, params);
        assert_eq!(back.velocities, Some(velocities));
        assert_eq!((back.epoch, back.total_epochs, back.seed), (3, 10, 9));
        assert_eq!(back.streams["pooling"], pooling);
        assert_eq!(back.mean, ck.mean);
        let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert!(manifest.contains(&format!("spec_hash={:016x}", spec.fingerprint())));
        assert!(manifest.contains("param=layer00_conv_filters"));
    }

    #[test]
    fn tampered_spec_is_rejected() {
        let spec = NetworkSpec {
            input: (1, 4, 4),
            layers: vec![LayerSpec::Softmax { classes: 2 }],
            init_std: 0.1,
        };
        let net = spec.resolve().unwrap();
        let ck = Checkpoint {
            spec: spec.clone(),
            params: NetParams::init(&net, &mut RngStream::new(0)),
            velocities: None,
            epoch: 1,
            total_epochs: 1,
            seed: 0,
            streams: BTreeMap::new(),
            config: None,
            metrics: vec![],
            mean: None,
        };
        let dir = tempfile::tempdir().unwrap();
        ck.save(dir.path()).unwrap();
        let other = NetworkSpec { input: (1, 5, 5), ..spec };
        fs::write(dir.path().join("spec.json"), serde_json::to_string(&other).unwrap()).unwrap();
        assert!(Checkpoint::load(dir.path()).is_err());
    }
}
