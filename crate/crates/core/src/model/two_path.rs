use crate::error::{shape_err, Error, Result};
use crate::layers::{Conv2d, Mode};
use crate::model::{Family, ModelConfig, BASE_WIDTHS};
use crate::regularize::{dropfilter_apply, droppath_apply, DropMask, DropMethod, DropSpec};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

/// One 3x3 conv layer with `c` filters alongside its `c`-path equivalent:
/// path `i` is a single-filter conv holding a copy of filter `i`, and the
/// path outputs are concatenated along channels.
#[derive(Clone, Debug)]
pub struct TwoPath {
    pub single: Conv2d,
    pub paths: Vec<Conv2d>,
}

/// Builds the fixture with `16 * width_factor` filters over
/// `input_shape.0` input channels (width 4 gives the 64 -> 64 layer).
pub fn build_two_path(cfg: &ModelConfig, rng: &mut Rng) -> Result<TwoPath> {
    if cfg.family != Family::TwoPath {
        return Err(Error::Config(format!("build_two_path called for {}", cfg.family)));
    }
    let filters = BASE_WIDTHS[0] * cfg.width_factor;
    let single = Conv2d::new("layer", cfg.input_shape.0, filters, 3, 1, 1, rng)?;
    TwoPath::from_conv(single)
}

impl TwoPath {
    /// Splits an existing conv layer into one path per filter.
    pub fn from_conv(single: Conv2d) -> Result<Self> {
        let paths = (0..single.out_channels())
            .map(|i| {
                Conv2d::from_parts(
                    &format!("path{i}"),
                    single.in_channels(),
                    1,
                    single.kernel(),
                    single.stride(),
                    single.pad(),
                    single.filter(i).to_vec(),
                    vec![single.bias.value[i]],
                )
            })
            .collect::<Result<_>>()?;
        Ok(TwoPath { single, paths })
    }

    pub fn filters(&self) -> usize {
        self.single.out_channels()
    }

    pub fn forward_single(&self, x: &Tensor) -> Result<Tensor> {
        self.single.forward(x)
    }

    pub fn forward_paths(&self, x: &Tensor) -> Result<Tensor> {
        let outs = self
            .paths
            .iter()
            .map(|p| p.forward(x))
            .collect::<Result<Vec<_>>>()?;
        Tensor::concat_channels(&outs)
    }

    /// Single layer followed by DropFilter with a fixed channel mask.
    pub fn forward_single_masked(&self, x: &Tensor, channel_mask: &DropMask) -> Result<Tensor> {
        channel_mask.apply(&self.forward_single(x)?)
    }

    /// Paths with one fixed DropPath mask each, then concatenated.
    pub fn forward_paths_masked(&self, x: &Tensor, path_masks: &[DropMask]) -> Result<Tensor> {
        if path_masks.len() != self.paths.len() {
            return Err(shape_err!(
                "{} path masks for {} paths",
                path_masks.len(),
                self.paths.len()
            ));
        }
        let outs = self
            .paths
            .iter()
            .zip(path_masks)
            .map(|(p, m)| m.apply(&p.forward(x)?))
            .collect::<Result<Vec<_>>>()?;
        Tensor::concat_channels(&outs)
    }

    /// Single layer through `dropfilter_apply` with a fresh draw.
    pub fn forward_single_dropfilter(
        &self,
        x: &Tensor,
        spec: &DropSpec,
        rng: &mut Rng,
        mode: Mode,
    ) -> Result<(Tensor, Option<DropMask>)> {
        dropfilter_apply(&self.forward_single(x)?, spec, rng, mode)
    }

    /// Paths through `droppath_apply` with a fresh draw.
    pub fn forward_paths_droppath(
        &self,
        x: &Tensor,
        spec: &DropSpec,
        rng: &mut Rng,
        mode: Mode,
    ) -> Result<(Tensor, Vec<DropMask>)> {
        let outs = self
            .paths
            .iter()
            .map(|p| p.forward(x))
            .collect::<Result<Vec<_>>>()?;
        let (dropped, masks) = droppath_apply(&outs, spec, rng, mode)?;
        Ok((Tensor::concat_channels(&dropped)?, masks))
    }
}

/// Splits a `(N|1, C, 1, 1)` DropFilter mask into `C` DropPath masks of
/// shape `(N|1, 1, 1, 1)`.
pub fn channel_mask_to_path_masks(mask: &DropMask) -> Result<Vec<DropMask>> {
    let s = mask.values.shape();
    if (s.h, s.w) != (1, 1) {
        return Err(shape_err!("expected a per-channel mask, got {s}"));
    }
    (0..s.c)
        .map(|c| {
            let vals = (0..s.n).map(|n| mask.values.data()[n * s.c + c]).collect();
            Ok(DropMask {
                method: DropMethod::DropPath,
                values: Tensor::from_vec(Shape::new(s.n, 1, 1, 1), vals)?,
                rate: mask.rate,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularize::draw_mask;

    fn fixture(width: usize, seed: u64) -> (TwoPath, Tensor) {
        let mut rng = Rng::new(seed);
        let cfg = ModelConfig::new(Family::TwoPath, 1, width, 10).with_input_shape(3, 6, 6);
        let tp = build_two_path(&cfg, &mut rng).unwrap();
        let x = Tensor::from_vec((2, 3, 6, 6), (0..216).map(|_| rng.normal()).collect()).unwrap();
        (tp, x)
    }

    #[test]
    fn concat_equals_single_layer() {
        let (tp, x) = fixture(4, 1);
        assert_eq!(tp.filters(), 64);
        let d = tp.forward_single(&x).unwrap().max_abs_diff(&tp.forward_paths(&x).unwrap()).unwrap();
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn single_filter_is_trivially_equal() {
        let mut rng = Rng::new(2);
        let conv = Conv2d::new("c", 2, 1, 3, 1, 1, &mut rng).unwrap();
        let tp = TwoPath::from_conv(conv).unwrap();
        let x = Tensor::new((1, 2, 4, 4), 0.5).unwrap();
        assert!(tp.forward_single(&x).unwrap().bitwise_eq(&tp.forward_paths(&x).unwrap()));
    }

    #[test]
    fn forced_masks_one_zero() {
        let mut rng = Rng::new(3);
        let conv = Conv2d::new("c", 3, 2, 3, 1, 1, &mut rng).unwrap();
        let tp = TwoPath::from_conv(conv).unwrap();
        let x = Tensor::new((1, 3, 4, 4), 1.0).unwrap();
        let mask = DropMask {
            method: DropMethod::DropFilter,
            values: Tensor::from_vec((1, 2, 1, 1), vec![2.0, 0.0]).unwrap(),
            rate: 0.5,
        };
        let single = tp.forward_single_masked(&x, &mask).unwrap();
        let paths = tp
            .forward_paths_masked(&x, &channel_mask_to_path_masks(&mask).unwrap())
            .unwrap();
        assert!(single.max_abs_diff(&paths).unwrap() < 1e-12);
        assert!(single.map(0, 1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_drawn_masks_agree() {
        let (tp, x) = fixture(1, 4);
        let spec = DropSpec::new(DropMethod::DropFilter, 0.5);
        let mut rng = Rng::new(40);
        let mask = draw_mask(&spec, tp.forward_single(&x).unwrap().shape(), &mut rng).unwrap();
        let a = tp.forward_single_masked(&x, &mask).unwrap();
        let b = tp
            .forward_paths_masked(&x, &channel_mask_to_path_masks(&mask).unwrap())
            .unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
    }

    #[test]
    fn wrong_family_and_mask_count() {
        let mut rng = Rng::new(0);
        assert!(build_two_path(&ModelConfig::new(Family::Plain, 1, 1, 10), &mut rng).is_err());
        let (tp, x) = fixture(1, 5);
        assert!(tp.forward_paths_masked(&x, &[]).is_err());
    }
}
