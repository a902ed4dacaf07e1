//! Run configuration, read from a sectioned TOML file.
//!
//! Every key is optional. A top-level `profile` (`full`, `desk` or
//! `synthetic`) supplies the starting values and the sections override
//! them:
//!
//! ```toml
//! profile = "desk"
//!
//! [train]
//! epochs = 30
//! batch_size = 128
//! seeds = [0, 1, 2]
//! out_dir = "runs/desk"
//!
//! [model]
//! family = "plain"          # plain | resnet | wrn
//! n = 1                     # blocks per stage, depth 6n+2
//! width_factor = 4
//! drop_stem = true
//! drop_projections = false
//!
//! [drop]
//! method = "dropfilter"     # none | dropout | dropfilter | scalefilter | droppath
//! rate = 0.9                # retain probability p, or amplitude q for scalefilter
//! schedule = "constant"     # constant | curriculum
//! start = 1.0               # curriculum only
//! end = 0.6
//! granularity = "per_sample"  # per_sample | per_batch
//!
//! [optimizer]
//! lr = 0.1
//! momentum = 0.9
//! weight_decay = 0.0005
//! schedule = "step"         # step | cosine
//! milestones = [15, 23]
//! factor = 0.2
//! lr_min = 0.0              # cosine only
//!
//! [data]
//! dataset = "cifar10"       # cifar10 | cifar100 | synthetic
//! data_dir = "data"
//! augment = true
//! pad = 4
//! hflip_prob = 0.5
//!
//! [data.subset]             # optional class subset of the training split
//! classes = 10
//! per_class = 500
//! seed = 0
//!
//! [data.synthetic]          # dataset = "synthetic" only
//! classes = 4
//! train_per_class = 64
//! test_per_class = 32
//! side = 16
//! seed = 0
//! ```
//!
//! The environment variable `DROPFILTER_DATA_DIR` overrides `data_dir`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::data::{AugmentPolicy, CifarKind};
use crate::error::{Error, Result};
use crate::model::{Family, ModelConfig};
use crate::optim::LrSchedule;
use crate::regularize::{DropMethod, DropSpec, Granularity, RateSchedule};

pub const DATA_DIR_ENV: &str = "DROPFILTER_DATA_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Cifar10,
    Cifar100,
    Synthetic,
}

impl DatasetKind {
    pub fn cifar(self) -> Option<CifarKind> {
        match self {
            DatasetKind::Cifar10 => Some(CifarKind::Cifar10),
            DatasetKind::Cifar100 => Some(CifarKind::Cifar100),
            DatasetKind::Synthetic => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubsetConfig {
    pub classes: usize,
    pub per_class: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub side: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub dataset: DatasetKind,
    pub data_dir: PathBuf,
    /// `None` disables augmentation.
    pub augment: Option<AugmentPolicy>,
    pub subset: Option<SubsetConfig>,
    pub synthetic: SyntheticConfig,
}

impl DataConfig {
    /// `DROPFILTER_DATA_DIR` if set, else the configured directory.
    pub fn resolved_dir(&self) -> PathBuf {
        std::env::var_os(DATA_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| self.data_dir.clone())
    }

    pub fn num_classes(&self) -> usize {
        match (self.dataset, self.subset) {
            (DatasetKind::Synthetic, _) => self.synthetic.classes,
            (_, Some(s)) => s.classes,
            (DatasetKind::Cifar10, None) => 10,
            (DatasetKind::Cifar100, None) => 100,
        }
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        match self.dataset {
            DatasetKind::Synthetic => (3, self.synthetic.side, self.synthetic.side),
            _ => (3, 32, 32),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub profile: String,
    /// `num_classes` and `input_shape` follow the data section; the drop
    /// spec lives in `model.drop`.
    pub model: ModelConfig,
    pub lr_schedule: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub data: DataConfig,
    pub out_dir: Option<PathBuf>,
}

impl TrainConfig {
    /// 200 epochs of ResNet-56 on full CIFAR-10 with the 60/120/160 step
    /// schedule.
    pub fn full() -> Self {
        let data = DataConfig {
            dataset: DatasetKind::Cifar10,
            data_dir: PathBuf::from("data"),
            augment: Some(AugmentPolicy::default()),
            subset: None,
            synthetic: SyntheticConfig {
                classes: 4,
                train_per_class: 64,
                test_per_class: 32,
                side: 16,
                seed: 0,
            },
        };
        TrainConfig {
            profile: "full".into(),
            model: ModelConfig::new(Family::Resnet, 9, 1, 10),
            lr_schedule: LrSchedule::cifar(),
            momentum: 0.9,
            weight_decay: 0.0005,
            epochs: 200,
            batch_size: 128,
            seeds: vec![0],
            data,
            out_dir: None,
        }
    }

    /// 10 classes x 500 images of CIFAR-10, plain-4-8, 30 epochs, LR x0.2
    /// at epochs 15 and 23, three seeds.
    pub fn desk() -> Self {
        let mut cfg = Self::full();
        cfg.profile = "desk".into();
        cfg.model = ModelConfig::new(Family::Plain, 1, 4, 10);
        cfg.epochs = 30;
        cfg.seeds = vec![0, 1, 2];
        cfg.lr_schedule = LrSchedule::Step {
            base_lr: 0.1,
            milestones: vec![15, 23],
            factor: 0.2,
        };
        cfg.data.subset = Some(SubsetConfig {
            classes: 10,
            per_class: 500,
            seed: 0,
        });
        cfg
    }

    /// Small generated dataset for smoke tests: 4 classes of 16x16 images,
    /// plain net of width 1, 5 epochs.
    pub fn synthetic() -> Self {
        let mut cfg = Self::full();
        cfg.profile = "synthetic".into();
        cfg.model = ModelConfig::new(Family::Plain, 1, 1, 4);
        cfg.epochs = 5;
        cfg.batch_size = 32;
        cfg.lr_schedule = LrSchedule::Step {
            base_lr: 0.1,
            milestones: vec![3],
            factor: 0.2,
        };
        cfg.data.dataset = DatasetKind::Synthetic;
        cfg.data.augment = Some(AugmentPolicy {
            pad: 2,
            hflip_prob: 0.0,
        });
        cfg
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "desk" => Ok(Self::desk()),
            "synthetic" => Ok(Self::synthetic()),
            other => Err(Error::Config(format!("unknown profile `{other}`"))),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        raw.resolve()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn drop_spec(&self) -> &DropSpec {
        &self.model.drop
    }

    pub fn optimizer(&self) -> Result<crate::optim::Sgd> {
        crate::optim::Sgd::new(self.lr_schedule.base_lr(), self.momentum, self.weight_decay)
    }

    /// Keeps the model's class count and input shape in line with the data
    /// section.
    fn sync_model(&mut self) {
        self.model.num_classes = self.data.num_classes();
        let (c, h, w) = self.data.input_shape();
        self.model.input_shape = (c, h, w);
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.model.family == Family::TwoPath {
            return Err(Error::Config("two_path is a test fixture, not a trainable model".into()));
        }
        if self.model.n < 1 || self.model.width_factor < 1 {
            return Err(Error::Config("model needs n >= 1 and width_factor >= 1".into()));
        }
        if self.model.drop.method == DropMethod::DropPath && self.model.family == Family::Plain {
            return Err(Error::Config("droppath needs a residual family".into()));
        }
        self.model.drop.validate()?;
        self.lr_schedule.validate()?;
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(Error::Config("momentum must lie in [0, 1) and weight_decay >= 0".into()));
        }
        if let Some(a) = self.data.augment {
            if !(0.0..=1.0).contains(&a.hflip_prob) {
                return Err(Error::Config("hflip_prob must lie in [0, 1]".into()));
            }
        }
        let syn = &self.data.synthetic;
        if self.data.dataset == DatasetKind::Synthetic
            && (syn.classes < 1 || syn.train_per_class < 1 || syn.test_per_class < 1 || syn.side < 4)
        {
            return Err(Error::Config("synthetic data needs classes, counts >= 1 and side >= 4".into()));
        }
        if let Some(s) = self.data.subset {
            if s.classes < 1 || s.per_class < 1 {
                return Err(Error::Config("subset needs classes >= 1 and per_class >= 1".into()));
            }
            if self.data.dataset == DatasetKind::Synthetic {
                return Err(Error::Config("subsets apply to CIFAR datasets only".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    profile: Option<String>,
    #[serde(default)]
    train: RawTrain,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    drop: RawDrop,
    #[serde(default)]
    optimizer: RawOptimizer,
    #[serde(default)]
    data: RawData,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    epochs: Option<usize>,
    batch_size: Option<usize>,
    seeds: Option<Vec<u64>>,
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    family: Option<Family>,
    n: Option<usize>,
    width_factor: Option<usize>,
    drop_stem: Option<bool>,
    drop_projections: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawRateSchedule {
    Constant,
    Curriculum,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrop {
    method: Option<DropMethod>,
    rate: Option<f64>,
    schedule: Option<RawRateSchedule>,
    start: Option<f64>,
    end: Option<f64>,
    granularity: Option<Granularity>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawLrKind {
    Step,
    Cosine,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimizer {
    lr: Option<f64>,
    momentum: Option<f64>,
    weight_decay: Option<f64>,
    schedule: Option<RawLrKind>,
    milestones: Option<Vec<usize>>,
    factor: Option<f64>,
    lr_min: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    dataset: Option<DatasetKind>,
    data_dir: Option<PathBuf>,
    augment: Option<bool>,
    pad: Option<usize>,
    hflip_prob: Option<f64>,
    subset: Option<RawSubset>,
    #[serde(default)]
    synthetic: RawSynthetic,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubset {
    classes: Option<usize>,
    per_class: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynthetic {
    classes: Option<usize>,
    train_per_class: Option<usize>,
    test_per_class: Option<usize>,
    side: Option<usize>,
    seed: Option<u64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RawConfig {
    fn resolve(self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::profile(self.profile.as_deref().unwrap_or("full"))?;

        set(&mut cfg.epochs, self.train.epochs);
        set(&mut cfg.batch_size, self.train.batch_size);
        set(&mut cfg.seeds, self.train.seeds);
        if self.train.out_dir.is_some() {
            cfg.out_dir = self.train.out_dir;
        }

        let m = self.model;
        set(&mut cfg.model.family, m.family);
        set(&mut cfg.model.n, m.n);
        set(&mut cfg.model.width_factor, m.width_factor);
        set(&mut cfg.model.drop_stem, m.drop_stem);
        set(&mut cfg.model.drop_projections, m.drop_projections);

        let d = self.drop;
        let drop = &mut cfg.model.drop;
        if let Some(method) = d.method {
            // a method switch resets the rate to that method's identity point
            *drop = DropSpec::new(method, method.identity_rate());
        }
        set(&mut drop.rate, d.rate);
        set(&mut drop.granularity, d.granularity);
        match d.schedule {
            Some(RawRateSchedule::Curriculum) => {
                drop.schedule = RateSchedule::Curriculum {
                    start: d.start.unwrap_or(1.0),
                    end: d.end.unwrap_or(0.6),
                };
            }
            Some(RawRateSchedule::Constant) => drop.schedule = RateSchedule::Constant,
            None if d.start.is_some() || d.end.is_some() => {
                return Err(Error::Config("drop.start/end need schedule = \"curriculum\"".into()));
            }
            None => {}
        }

        let o = self.optimizer;
        set(&mut cfg.momentum, o.momentum);
        set(&mut cfg.weight_decay, o.weight_decay);
        let base_lr = o.lr.unwrap_or(cfg.lr_schedule.base_lr());
        let kind = o.schedule.unwrap_or(match cfg.lr_schedule {
            LrSchedule::Step { .. } => RawLrKind::Step,
            LrSchedule::Cosine { .. } => RawLrKind::Cosine,
        });
        cfg.lr_schedule = match (kind, &cfg.lr_schedule) {
            (RawLrKind::Step, prev) => {
                let (ms, f) = match prev {
                    LrSchedule::Step { milestones, factor, .. } => (milestones.clone(), *factor),
                    LrSchedule::Cosine { .. } => (vec![], 0.2),
                };
                if o.lr_min.is_some() {
                    return Err(Error::Config("lr_min applies to the cosine schedule only".into()));
                }
                LrSchedule::Step {
                    base_lr,
                    milestones: o.milestones.unwrap_or(ms),
                    factor: o.factor.unwrap_or(f),
                }
            }
            (RawLrKind::Cosine, prev) => {
                if o.milestones.is_some() || o.factor.is_some() {
                    return Err(Error::Config("milestones/factor apply to the step schedule only".into()));
                }
                let lr_min = match prev {
                    LrSchedule::Cosine { lr_min, .. } => *lr_min,
                    LrSchedule::Step { .. } => 0.0,
                };
                LrSchedule::Cosine {
                    base_lr,
                    lr_min: o.lr_min.unwrap_or(lr_min),
                    total_epochs: cfg.epochs,
                }
            }
        };

        let data = self.data;
        set(&mut cfg.data.dataset, data.dataset);
        set(&mut cfg.data.data_dir, data.data_dir);
        let policy = cfg.data.augment.unwrap_or_default();
        let policy = AugmentPolicy {
            pad: data.pad.unwrap_or(policy.pad),
            hflip_prob: data.hflip_prob.unwrap_or(policy.hflip_prob),
        };
        let enabled = data.augment.unwrap_or(cfg.data.augment.is_some());
        cfg.data.augment = enabled.then_some(policy);
        if let Some(s) = data.subset {
            let base = cfg.data.subset.unwrap_or(SubsetConfig {
                classes: 10,
                per_class: 500,
                seed: 0,
            });
            cfg.data.subset = Some(SubsetConfig {
                classes: s.classes.unwrap_or(base.classes),
                per_class: s.per_class.unwrap_or(base.per_class),
                seed: s.seed.unwrap_or(base.seed),
            });
        }
        if cfg.data.dataset == DatasetKind::Synthetic {
            cfg.data.subset = None;
        }
        let s = data.synthetic;
        let syn = &mut cfg.data.synthetic;
        set(&mut syn.classes, s.classes);
        set(&mut syn.train_per_class, s.train_per_class);
        set(&mut syn.test_per_class, s.test_per_class);
        set(&mut syn.side, s.side);
        set(&mut syn.seed, s.seed);

        cfg.sync_model();
        cfg.validate()?;
        Ok(cfg)
    }
}
