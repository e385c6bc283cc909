//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, unknown keys are rejected.
//! Relative paths are resolved against the config file's directory.
//!
//! Regularisers are given per group: `constraint.body` applies to every
//! parameter layer except the last, `constraint.head` to the last, and
//! `constraint.layerK` (1-based) overrides either for one layer. `penalty.*`
//! keys work the same way.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::bounds::BoundParams;
use crate::error::{Error, Result};
use crate::linalg::PowerIteration;
use crate::nn::{parse_architecture, LayerSpec};
use crate::optim::{AdamConfig, LrSchedule, TrainConfig, UpdateRule};
use crate::regularizers::{Constraint, L1Projection, Penalty, Regularization};

/// Which layers a regulariser entry targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LayerGroup {
    Body,
    Head,
    /// 0-based parameter-layer index.
    Layer(usize),
}

impl FromStr for LayerGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "body" => Ok(LayerGroup::Body),
            "head" => Ok(LayerGroup::Head),
            _ => s
                .strip_prefix("layer")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k >= 1)
                .map(|k| LayerGroup::Layer(k - 1))
                .ok_or_else(|| {
                    Error::config(format!("unknown layer group '{s}' (body, head or layerK)"))
                }),
        }
    }
}

/// Expands group entries to per-layer entries; explicit layers win.
pub fn expand_groups<T: Copy>(
    groups: &BTreeMap<LayerGroup, T>,
    layer_count: usize,
) -> Result<BTreeMap<usize, T>> {
    let mut out = BTreeMap::new();
    if layer_count == 0 {
        return Ok(out);
    }
    if let Some(v) = groups.get(&LayerGroup::Body) {
        for j in 0..layer_count - 1 {
            out.insert(j, *v);
        }
    }
    if let Some(v) = groups.get(&LayerGroup::Head) {
        out.insert(layer_count - 1, *v);
    }
    for (g, v) in groups {
        if let LayerGroup::Layer(j) = *g {
            if j >= layer_count {
                return Err(Error::config(format!(
                    "layer{} does not exist; the network has {layer_count} parameter layers",
                    j + 1
                )));
            }
            out.insert(j, *v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Directory with MNIST-style IDX files.
    pub data_dir: PathBuf,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// Per-example input shape; taken from the data when absent.
    pub input: Option<Vec<usize>>,
    /// Required unless `init_checkpoint` provides it.
    pub arch: Option<Vec<LayerSpec>>,
    pub init_checkpoint: Option<PathBuf>,
    pub reinit_head: bool,
    pub train: TrainConfig,
    pub constraints: BTreeMap<LayerGroup, Constraint>,
    pub penalties: BTreeMap<LayerGroup, Penalty>,
    pub bound: BoundParams,
    pub bounds_per_epoch: bool,
    pub output_dir: PathBuf,
    /// First 8 bytes of the SHA-256 of the config text, little-endian.
    pub hash: u64,
}

pub fn config_hash(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("bad value '{v}' for {key}")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(format!(
            "{key} must be true or false, got '{v}'"
        ))),
    }
}

/// `1x28x28`
pub fn parse_shape(s: &str) -> Result<Vec<usize>> {
    let dims: Option<Vec<usize>> = s
        .split('x')
        .map(|d| d.trim().parse().ok().filter(|&d| d > 0))
        .collect();
    dims.filter(|d| !d.is_empty())
        .ok_or_else(|| Error::config(format!("bad shape '{s}', expected e.g. 1x28x28")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::config(format!("line {}: duplicate key {k}", i + 1)));
            }
        }

        let path = |v: &str| base.join(v);
        let mut data_dir = None;
        let mut output_dir = None;
        let mut cfg = RunConfig {
            data_dir: PathBuf::new(),
            train_limit: None,
            test_limit: None,
            input: None,
            arch: None,
            init_checkpoint: None,
            reinit_head: false,
            train: TrainConfig {
                epochs: 15,
                ..TrainConfig::default()
            },
            constraints: BTreeMap::new(),
            penalties: BTreeMap::new(),
            bound: BoundParams::default(),
            bounds_per_epoch: false,
            output_dir: PathBuf::new(),
            hash: config_hash(text),
        };
        let mut optimizer = "adam".to_string();
        let mut adam = AdamConfig::default();
        let mut lr = None;
        let mut decay_factor = None;
        let mut decay_every = None;
        let mut power = PowerIteration::default();

        for (k, v) in &entries {
            let (k, v) = (k.as_str(), v.as_str());
            match k {
                "data_dir" => data_dir = Some(path(v)),
                "train_limit" => cfg.train_limit = Some(value(k, v)?),
                "test_limit" => cfg.test_limit = Some(value(k, v)?),
                "input" => cfg.input = Some(parse_shape(v)?),
                "arch" => cfg.arch = Some(parse_architecture(v)?),
                "init_checkpoint" => cfg.init_checkpoint = Some(path(v)),
                "reinit_head" => cfg.reinit_head = boolean(k, v)?,
                "epochs" => cfg.train.epochs = value(k, v)?,
                "batch_size" => cfg.train.batch_size = value(k, v)?,
                "seed" => cfg.train.seed = value(k, v)?,
                "shuffle" => cfg.train.shuffle = boolean(k, v)?,
                "optimizer" => optimizer = v.to_string(),
                "lr" => lr = Some(value(k, v)?),
                "beta1" => adam.beta1 = value(k, v)?,
                "beta2" => adam.beta2 = value(k, v)?,
                "eps" => adam.eps = value(k, v)?,
                "lr_decay_factor" => decay_factor = Some(value(k, v)?),
                "lr_decay_every" => decay_every = Some(value(k, v)?),
                "projection_inner" => cfg.train.regularization.inner = v.parse::<L1Projection>()?,
                "delta" => cfg.bound.delta = value(k, v)?,
                "rho" => cfg.bound.rho = value(k, v)?,
                "margin" => cfg.bound.margin = value(k, v)?,
                "power_iters" => power.iters = value(k, v)?,
                "bounds_per_epoch" => cfg.bounds_per_epoch = boolean(k, v)?,
                "output_dir" => output_dir = Some(path(v)),
                _ => {
                    if let Some(g) = k.strip_prefix("constraint.") {
                        cfg.constraints.insert(g.parse()?, v.parse()?);
                    } else if let Some(g) = k.strip_prefix("penalty.") {
                        cfg.penalties.insert(g.parse()?, v.parse()?);
                    } else {
                        return Err(Error::config(format!("unknown key '{k}'")));
                    }
                }
            }
        }

        cfg.data_dir = data_dir.ok_or_else(|| Error::config("data_dir is required"))?;
        cfg.output_dir = output_dir.ok_or_else(|| Error::config("output_dir is required"))?;
        if cfg.arch.is_none() && cfg.init_checkpoint.is_none() {
            return Err(Error::config(
                "arch is required when no init_checkpoint is given",
            ));
        }
        if cfg.reinit_head && cfg.init_checkpoint.is_none() {
            return Err(Error::config("reinit_head needs an init_checkpoint"));
        }
        cfg.train.rule = match optimizer.as_str() {
            "adam" => UpdateRule::Adam(AdamConfig {
                lr: lr.unwrap_or(adam.lr),
                ..adam
            }),
            "sgd" => UpdateRule::Sgd {
                lr: lr.unwrap_or(0.01),
            },
            other => {
                return Err(Error::config(format!(
                    "unknown optimizer '{other}' (adam or sgd)"
                )))
            }
        };
        cfg.train.schedule = match (decay_factor, decay_every) {
            (None, None) => LrSchedule::Constant,
            (Some(factor), Some(every)) => LrSchedule::StepDecay { factor, every },
            _ => {
                return Err(Error::config(
                    "lr_decay_factor and lr_decay_every go together",
                ))
            }
        };
        cfg.bound.power = power;
        if !(cfg.bound.delta > 0.0 && cfg.bound.delta < 1.0) {
            return Err(Error::config(format!(
                "delta must lie in (0, 1), got {}",
                cfg.bound.delta
            )));
        }
        if !(cfg.bound.rho > 0.0) || !(cfg.bound.margin > 0.0) {
            return Err(Error::config("rho and margin must be positive"));
        }
        if power.iters == 0 {
            return Err(Error::config("power_iters must be at least 1"));
        }
        // Layer-independent checks; layer references are checked once the
        // network is known.
        cfg.train.validate(usize::MAX)?;
        Ok(cfg)
    }

    /// Per-layer regulariser for a network with `layer_count` parameter layers.
    pub fn regularization(&self, layer_count: usize) -> Result<Regularization> {
        let reg = Regularization {
            constraints: expand_groups(&self.constraints, layer_count)?,
            penalties: expand_groups(&self.penalties, layer_count)?,
            inner: self.train.regularization.inner,
        };
        reg.validate(layer_count)?;
        Ok(reg)
    }
}
