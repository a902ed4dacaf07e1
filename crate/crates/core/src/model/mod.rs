//! Network templates: plain nets, pre-activation ResNets / WRNs, and the
//! single-layer vs. one-path-per-filter fixture.

mod net;
mod two_path;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::regularize::DropSpec;

pub use net::{DropSite, ForwardCtx, Model, SiteKind};
pub use two_path::{build_two_path, channel_mask_to_path_masks, TwoPath};

/// Filter counts of the three stages before widening.
pub const BASE_WIDTHS: [usize; 3] = [16, 32, 64];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Plain,
    Resnet,
    Wrn,
    TwoPath,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Plain => "plain",
            Family::Resnet => "resnet",
            Family::Wrn => "wrn",
            Family::TwoPath => "two_path",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        [Family::Plain, Family::Resnet, Family::Wrn, Family::TwoPath]
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model family `{s}`")))
    }
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: Family,
    /// Blocks per stage.
    pub n: usize,
    pub width_factor: usize,
    pub num_classes: usize,
    /// `(C, H, W)` of one input image.
    pub input_shape: (usize, usize, usize),
    #[serde(default)]
    pub drop: DropSpec,
    /// Attach a drop site to the stem convolution.
    #[serde(default = "default_true")]
    pub drop_stem: bool,
    /// Attach drop sites to 1x1 projection shortcuts.
    #[serde(default)]
    pub drop_projections: bool,
}

impl ModelConfig {
    pub fn new(family: Family, n: usize, width_factor: usize, num_classes: usize) -> Self {
        ModelConfig {
            family,
            n,
            width_factor,
            num_classes,
            input_shape: (3, 32, 32),
            drop: DropSpec::none(),
            drop_stem: true,
            drop_projections: false,
        }
    }

    pub fn with_drop(mut self, drop: DropSpec) -> Self {
        self.drop = drop;
        self
    }

    pub fn with_input_shape(mut self, c: usize, h: usize, w: usize) -> Self {
        self.input_shape = (c, h, w);
        self
    }

    /// Weighted layers of the template: stem + 6n block convs + classifier.
    pub fn depth(&self) -> usize {
        6 * self.n + 2
    }

    pub fn stage_widths(&self) -> [usize; 3] {
        BASE_WIDTHS.map(|w| w * self.width_factor)
    }

    /// `plain-<width>-<depth>`, `resnet-<depth>` or `wrn-<width>-<depth>`.
    pub fn label(&self) -> String {
        match self.family {
            Family::Plain => format!("plain-{}-{}", self.width_factor, self.depth()),
            Family::Resnet if self.width_factor == 1 => format!("resnet-{}", self.depth()),
            Family::Resnet | Family::Wrn => format!("wrn-{}-{}", self.width_factor, self.depth()),
            Family::TwoPath => format!("two_path-{}", BASE_WIDTHS[0] * self.width_factor),
        }
    }
}
