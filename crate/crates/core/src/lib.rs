//! Deterministic CNN testbed for comparing feature-map regularizers:
//! dropout, DropFilter, ScaleFilter and DropPath on plain nets,
//! pre-activation ResNets and wide ResNets.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod harness;
pub mod layers;
pub mod model;
pub mod optim;
pub mod regularize;
pub mod rng;
pub mod tensor;
pub mod validation;

pub use config::{DatasetKind, TrainConfig};
pub use data::Dataset;
pub use error::{Error, Result};
pub use harness::{RunMetrics, Summary, SweepTable};
pub use layers::Mode;
pub use model::{DropSite, Family, ForwardCtx, Model, ModelConfig, SiteKind};
pub use optim::{LrSchedule, Sgd};
pub use regularize::{DropMask, DropMethod, DropSpec, Granularity, RateSchedule};
pub use rng::Rng;
pub use tensor::{Shape, Tensor};
