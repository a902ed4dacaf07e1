//! Data-drop regularizers: standard dropout, DropFilter, ScaleFilter and
//! DropPath, plus the retention-rate schedule.
//!
//! All operators use inverted scaling: surviving units are multiplied by
//! `1/p` during training so that evaluation is the identity. ScaleFilter
//! multiplies each feature map by `r ~ Uniform[1-q, 1+q)` and needs no
//! rescale since `E[r] = 1`.
//!
//! | method      | unit dropped      | mask shape (per sample / per batch) |
//! |-------------|-------------------|-------------------------------------|
//! | dropout     | element           | `(N,C,H,W)` / `(1,C,H,W)`           |
//! | dropfilter  | feature map       | `(N,C,1,1)` / `(1,C,1,1)`           |
//! | scalefilter | feature map (scaled) | `(N,C,1,1)` / `(1,C,1,1)`        |
//! | droppath    | branch            | `(N,1,1,1)` / `(1,1,1,1)` per branch |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Error, Result};
use crate::layers::Mode;
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropMethod {
    #[default]
    None,
    Dropout,
    DropFilter,
    ScaleFilter,
    DropPath,
}

impl DropMethod {
    pub const ALL: [DropMethod; 5] = [
        DropMethod::None,
        DropMethod::Dropout,
        DropMethod::DropFilter,
        DropMethod::ScaleFilter,
        DropMethod::DropPath,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DropMethod::None => "none",
            DropMethod::Dropout => "dropout",
            DropMethod::DropFilter => "dropfilter",
            DropMethod::ScaleFilter => "scalefilter",
            DropMethod::DropPath => "droppath",
        }
    }

    /// Rate at which the operator is the identity: `p = 1`, or `q = 0`.
    pub fn identity_rate(self) -> f64 {
        match self {
            DropMethod::ScaleFilter => 0.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for DropMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DropMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DropMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown drop method `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RateSchedule {
    #[default]
    Constant,
    /// Linear from `start` at the first epoch to `end` at the last.
    Curriculum { start: f64, end: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Independent masks for every batch element.
    #[default]
    PerSample,
    /// One mask shared by the whole batch.
    PerBatch,
}

/// Which regularizer to apply and how.
///
/// `rate` is the retain probability `p` for dropout, dropfilter and
/// droppath, and the noise amplitude `q` for scalefilter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropSpec {
    pub method: DropMethod,
    pub rate: f64,
    #[serde(default)]
    pub schedule: RateSchedule,
    #[serde(default)]
    pub granularity: Granularity,
}

impl Default for DropSpec {
    fn default() -> Self {
        DropSpec::none()
    }
}

impl DropSpec {
    pub fn none() -> Self {
        DropSpec {
            method: DropMethod::None,
            rate: 1.0,
            schedule: RateSchedule::Constant,
            granularity: Granularity::PerSample,
        }
    }

    pub fn new(method: DropMethod, rate: f64) -> Self {
        DropSpec {
            method,
            rate,
            ..DropSpec::none()
        }
    }

    pub fn with_rate(self, rate: f64) -> Self {
        DropSpec { rate, ..self }
    }

    pub fn with_granularity(self, granularity: Granularity) -> Self {
        DropSpec {
            granularity,
            ..self
        }
    }

    pub fn with_schedule(self, schedule: RateSchedule) -> Self {
        DropSpec { schedule, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.rate) {
            return Err(param_err!("{} rate {} outside [0, 1]", self.method, self.rate));
        }
        if let RateSchedule::Curriculum { start, end } = self.schedule {
            if !unit.contains(&start) || !unit.contains(&end) {
                return Err(param_err!("curriculum rates ({start}, {end}) outside [0, 1]"));
            }
            if start < end {
                return Err(param_err!(
                    "curriculum must not increase the rate ({start} -> {end})"
                ));
            }
        }
        Ok(())
    }

    /// True when the operator cannot change its input at this rate.
    pub fn is_identity(&self) -> bool {
        self.method == DropMethod::None || self.rate == self.method.identity_rate()
    }
}

/// A drawn mask, kept so backward can multiply by the same factors.
#[derive(Clone, Debug, PartialEq)]
pub struct DropMask {
    pub method: DropMethod,
    /// Multiplicative factors, already scaled by `1/p` where applicable.
    pub values: Tensor,
    pub rate: f64,
}

impl DropMask {
    /// Multiplies `x` by the mask, broadcasting over whatever axes the mask
    /// collapses (elements, feature maps or whole samples).
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        broadcast_mask(x, &self.values)
    }

    /// Gradient through the operator with the mask held fixed.
    pub fn backward(&self, grad_out: &Tensor) -> Result<Tensor> {
        broadcast_mask(grad_out, &self.values)
    }

    /// Fraction of mask entries that are exactly zero.
    pub fn dropped_fraction(&self) -> f64 {
        let v = self.values.data();
        if v.is_empty() {
            return 0.0;
        }
        v.iter().filter(|&&m| m == 0.0).count() as f64 / v.len() as f64
    }
}

fn broadcast_mask(x: &Tensor, m: &Tensor) -> Result<Tensor> {
    let (xs, ms) = (x.shape(), m.shape());
    let batch_ok = ms.n == xs.n || ms.n == 1;
    if !batch_ok {
        return Err(shape_err!("mask {ms} does not fit tensor {xs}"));
    }
    if (ms.c, ms.h, ms.w) == (xs.c, xs.h, xs.w) {
        let mut out = x.clone();
        for n in 0..xs.n {
            let src = m.sample(if ms.n == 1 { 0 } else { n });
            for (v, f) in out.sample_mut(n).iter_mut().zip(src) {
                *v *= f;
            }
        }
        return Ok(out);
    }
    if (ms.h, ms.w) == (1, 1) && ms.c == xs.c {
        return x.broadcast_mul_channels(m);
    }
    if (ms.c, ms.h, ms.w) == (1, 1, 1) {
        let mut out = x.clone();
        for n in 0..xs.n {
            let f = m.data()[if ms.n == 1 { 0 } else { n }];
            out.sample_mut(n).iter_mut().for_each(|v| *v *= f);
        }
        return Ok(out);
    }
    Err(shape_err!("mask {ms} does not fit tensor {xs}"))
}

fn expect_method(spec: &DropSpec, method: DropMethod) -> Result<()> {
    if spec.method != method {
        return Err(param_err!("{method} operator called with a {} spec", spec.method));
    }
    spec.validate()
}

fn mask_batch(n: usize, granularity: Granularity) -> usize {
    match granularity {
        Granularity::PerSample => n,
        Granularity::PerBatch => 1,
    }
}

fn bernoulli_mask(shape: Shape, p: f64, rng: &mut Rng) -> Result<Tensor> {
    if p <= 0.0 {
        return Err(param_err!("retain rate p = {p} leaves no units in training"));
    }
    let scale = 1.0 / p;
    let draws = rng.bernoulli(shape.numel(), p)?;
    Tensor::from_vec(shape, draws.into_iter().map(|r| r * scale).collect())
}

/// Draws the training-mode mask `method` would use for an input of `shape`.
///
/// For droppath `shape` describes one branch.
pub fn draw_mask(spec: &DropSpec, shape: Shape, rng: &mut Rng) -> Result<DropMask> {
    spec.validate()?;
    let n = mask_batch(shape.n, spec.granularity);
    let values = match spec.method {
        DropMethod::None => Tensor::new((1, 1, 1, 1), 1.0)?,
        DropMethod::Dropout => bernoulli_mask(Shape::new(n, shape.c, shape.h, shape.w), spec.rate, rng)?,
        DropMethod::DropFilter => bernoulli_mask(Shape::new(n, shape.c, 1, 1), spec.rate, rng)?,
        DropMethod::DropPath => bernoulli_mask(Shape::new(n, 1, 1, 1), spec.rate, rng)?,
        DropMethod::ScaleFilter => {
            let q = spec.rate;
            let draws = rng.uniform(n * shape.c, 1.0 - q, 1.0 + q)?;
            Tensor::from_vec((n, shape.c, 1, 1), draws)?
        }
    };
    Ok(DropMask {
        method: spec.method,
        values,
        rate: spec.rate,
    })
}

fn apply_single(
    x: &Tensor,
    spec: &DropSpec,
    rng: &mut Rng,
    mode: Mode,
) -> Result<(Tensor, Option<DropMask>)> {
    match mode {
        Mode::Eval => Ok((x.clone(), None)),
        Mode::Train => {
            let mask = draw_mask(spec, x.shape(), rng)?;
            Ok((mask.apply(x)?, Some(mask)))
        }
    }
}

/// Elementwise Bernoulli(p) mask scaled by `1/p`; identity in eval mode.
pub fn dropout_apply(
    x: &Tensor,
    spec: &DropSpec,
    rng: &mut Rng,
    mode: Mode,
) -> Result<(Tensor, Option<DropMask>)> {
    expect_method(spec, DropMethod::Dropout)?;
    apply_single(x, spec, rng, mode)
}

/// One Bernoulli(p) draw per feature map, scaled by `1/p`; identity in eval.
pub fn dropfilter_apply(
    x: &Tensor,
    spec: &DropSpec,
    rng: &mut Rng,
    mode: Mode,
) -> Result<(Tensor, Option<DropMask>)> {
    expect_method(spec, DropMethod::DropFilter)?;
    apply_single(x, spec, rng, mode)
}

/// One `Uniform[1-q, 1+q)` factor per feature map, no rescale; identity in eval.
pub fn scalefilter_apply(
    x: &Tensor,
    spec: &DropSpec,
    rng: &mut Rng,
    mode: Mode,
) -> Result<(Tensor, Option<DropMask>)> {
    expect_method(spec, DropMethod::ScaleFilter)?;
    apply_single(x, spec, rng, mode)
}

/// Drops whole branches: one Bernoulli(p) per branch (per sample under
/// per-sample granularity), survivors scaled by `1/p`.
///
/// Only the droppable branches are passed in; an identity shortcut is never
/// one of them.
pub fn droppath_apply(
    branches: &[Tensor],
    spec: &DropSpec,
    rng: &mut Rng,
    mode: Mode,
) -> Result<(Vec<Tensor>, Vec<DropMask>)> {
    expect_method(spec, DropMethod::DropPath)?;
    let first = branches
        .first()
        .ok_or_else(|| param_err!("droppath needs at least one branch"))?
        .shape();
    if branches.iter().any(|b| b.shape().n != first.n) {
        return Err(shape_err!("droppath branches disagree on batch size"));
    }
    if mode == Mode::Eval {
        return Ok((branches.to_vec(), Vec::new()));
    }
    let mut outs = Vec::with_capacity(branches.len());
    let mut masks = Vec::with_capacity(branches.len());
    for b in branches {
        let mask = draw_mask(spec, b.shape(), rng)?;
        outs.push(mask.apply(b)?);
        masks.push(mask);
    }
    Ok((outs, masks))
}

/// Applies whichever single-tensor operator `spec` names (`none` is the
/// identity). DropPath is structural and is rejected here.
pub fn apply(
    x: &Tensor,
    spec: &DropSpec,
    rng: &mut Rng,
    mode: Mode,
) -> Result<(Tensor, Option<DropMask>)> {
    match spec.method {
        DropMethod::None => Ok((x.clone(), None)),
        DropMethod::Dropout => dropout_apply(x, spec, rng, mode),
        DropMethod::DropFilter => dropfilter_apply(x, spec, rng, mode),
        DropMethod::ScaleFilter => scalefilter_apply(x, spec, rng, mode),
        DropMethod::DropPath => Err(param_err!(
            "droppath acts on branches, use droppath_apply"
        )),
    }
}

/// Effective rate for `epoch` of `total_epochs`, evaluated once per epoch.
pub fn retention_schedule(spec: &DropSpec, epoch: usize, total_epochs: usize) -> Result<f64> {
    if total_epochs == 0 {
        return Err(param_err!("retention schedule needs at least one epoch"));
    }
    if epoch >= total_epochs {
        return Err(param_err!("epoch {epoch} outside 0..{total_epochs}"));
    }
    Ok(match spec.schedule {
        RateSchedule::Constant => spec.rate,
        RateSchedule::Curriculum { start, end } => {
            if total_epochs == 1 {
                return Ok(start);
            }
            let t = epoch as f64 / (total_epochs - 1) as f64;
            // endpoint-exact form
            (1.0 - t) * start + t * end
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::rng::Rng;

    fn ramp(shape: impl Into<Shape>) -> Tensor {
        let shape = shape.into();
        Tensor::from_vec(shape, (0..shape.numel()).map(|i| 1.0 + i as f64).collect()).unwrap()
    }

    fn forced(method: DropMethod, shape: impl Into<Shape>, raw: Vec<f64>, rate: f64) -> DropMask {
        let scale = if method == DropMethod::ScaleFilter { 1.0 } else { 1.0 / rate };
        DropMask {
            method,
            values: Tensor::from_vec(shape, raw.into_iter().map(|r| r * scale).collect()).unwrap(),
            rate,
        }
    }

    #[test]
    fn dropout_p1_is_bitwise_identity() {
        let x = ramp((2, 3, 4, 4));
        let spec = DropSpec::new(DropMethod::Dropout, 1.0);
        let (y, _) = dropout_apply(&x, &spec, &mut Rng::new(0), Mode::Train).unwrap();
        assert!(y.bitwise_eq(&x));
    }

    #[test]
    fn eval_is_identity_for_every_method() {
        let x = ramp((2, 3, 4, 4));
        for method in DropMethod::ALL {
            let spec = DropSpec::new(method, 0.3);
            if method == DropMethod::DropPath {
                let (ys, masks) =
                    droppath_apply(std::slice::from_ref(&x), &spec, &mut Rng::new(1), Mode::Eval).unwrap();
                assert!(ys[0].bitwise_eq(&x));
                assert!(masks.is_empty());
            } else {
                let (y, m) = apply(&x, &spec, &mut Rng::new(1), Mode::Eval).unwrap();
                assert!(y.bitwise_eq(&x), "{method}");
                assert!(m.is_none());
            }
        }
    }

    #[test]
    fn forced_dropout_arithmetic() {
        let x = Tensor::from_vec((1, 1, 1, 2), vec![2.0, 4.0]).unwrap();
        let mask = forced(DropMethod::Dropout, (1, 1, 1, 2), vec![1.0, 0.0], 0.5);
        assert_eq!(mask.apply(&x).unwrap().data(), &[4.0, 0.0]);
    }

    #[test]
    fn forced_dropfilter_arithmetic() {
        let x = Tensor::new((1, 2, 2, 2), 1.0).unwrap();
        let mask = forced(DropMethod::DropFilter, (1, 2, 1, 1), vec![1.0, 0.0], 0.5);
        let y = mask.apply(&x).unwrap();
        assert_eq!(y.map(0, 0), &[2.0; 4]);
        assert_eq!(y.map(0, 1), &[0.0; 4]);
    }

    #[test]
    fn zero_rate_is_rejected_in_training() {
        let x = ramp((1, 2, 2, 2));
        let mut rng = Rng::new(0);
        for method in [DropMethod::Dropout, DropMethod::DropFilter] {
            let spec = DropSpec::new(method, 0.0);
            assert!(matches!(
                apply(&x, &spec, &mut rng, Mode::Train),
                Err(Error::Parameter(_))
            ));
        }
        let spec = DropSpec::new(DropMethod::DropPath, 0.0);
        assert!(droppath_apply(std::slice::from_ref(&x), &spec, &mut rng, Mode::Train).is_err());
    }

    #[test]
    fn method_mismatch_and_bad_rate() {
        let x = ramp((1, 1, 2, 2));
        let mut rng = Rng::new(0);
        let spec = DropSpec::new(DropMethod::ScaleFilter, 0.4);
        assert!(dropout_apply(&x, &spec, &mut rng, Mode::Train).is_err());
        let spec = DropSpec::new(DropMethod::ScaleFilter, 1.4);
        assert!(scalefilter_apply(&x, &spec, &mut rng, Mode::Train).is_err());
        assert!(droppath_apply(&[], &DropSpec::new(DropMethod::DropPath, 0.5), &mut rng, Mode::Train).is_err());
    }

    #[test]
    fn scalefilter_q0_identity_and_range() {
        let x = ramp((2, 4, 3, 3));
        let mut rng = Rng::new(3);
        let spec = DropSpec::new(DropMethod::ScaleFilter, 0.0);
        let (y, _) = scalefilter_apply(&x, &spec, &mut rng, Mode::Train).unwrap();
        assert!(y.bitwise_eq(&x));

        let spec = DropSpec::new(DropMethod::ScaleFilter, 0.4);
        for _ in 0..100 {
            let mask = draw_mask(&spec, x.shape(), &mut rng).unwrap();
            assert!(mask.values.data().iter().all(|&r| (0.6..1.4).contains(&r)));
        }
    }

    #[test]
    fn scalefilter_monte_carlo_mean() {
        let x = Tensor::from_vec((1, 2, 1, 2), vec![1.0, -3.0, 2.5, 10.0]).unwrap();
        let spec = DropSpec::new(DropMethod::ScaleFilter, 0.4);
        let mut rng = Rng::new(8);
        let draws = 10_000;
        let mut acc = Tensor::zeros(x.shape());
        for _ in 0..draws {
            let (y, _) = scalefilter_apply(&x, &spec, &mut rng, Mode::Train).unwrap();
            acc.add_assign(&y).unwrap();
        }
        let mean = acc.scale(1.0 / draws as f64);
        for (m, v) in mean.data().iter().zip(x.data()) {
            assert!((m - v).abs() <= 0.02 * v.abs(), "{m} vs {v}");
        }
    }

    #[test]
    fn dropfilter_zeroes_whole_maps_only() {
        let x = ramp((8, 16, 4, 4));
        let spec = DropSpec::new(DropMethod::DropFilter, 0.7);
        let mut rng = Rng::new(5);
        for _ in 0..50 {
            let (y, _) = dropfilter_apply(&x, &spec, &mut rng, Mode::Train).unwrap();
            for n in 0..8 {
                for c in 0..16 {
                    let (ym, xm) = (y.map(n, c), x.map(n, c));
                    let zero = ym.iter().all(|&v| v == 0.0);
                    let kept = ym.iter().zip(xm).all(|(a, b)| *a == b * (1.0 / 0.7));
                    assert!(zero || kept);
                }
            }
        }
    }

    #[test]
    fn dropfilter_dropped_map_fraction() {
        // 10^5 (sample, channel) slots at p = 0.9; 3 sigma ~= 0.0028
        let x = Tensor::new((1000, 100, 1, 1), 1.0).unwrap();
        let spec = DropSpec::new(DropMethod::DropFilter, 0.9);
        let (y, _) = dropfilter_apply(&x, &spec, &mut Rng::new(12), Mode::Train).unwrap();
        let zeroed = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e5;
        assert!((0.097..=0.103).contains(&zeroed), "{zeroed}");
    }

    #[test]
    fn per_batch_masks_are_shared() {
        let x = Tensor::new((4, 8, 2, 2), 1.0).unwrap();
        let spec = DropSpec::new(DropMethod::DropFilter, 0.5).with_granularity(Granularity::PerBatch);
        let (y, mask) = dropfilter_apply(&x, &spec, &mut Rng::new(2), Mode::Train).unwrap();
        assert_eq!(mask.unwrap().values.shape(), Shape::new(1, 8, 1, 1));
        for n in 1..4 {
            assert_eq!(y.sample(n), y.sample(0));
        }
    }

    #[test]
    fn droppath_p1_and_dropped_residual() {
        let x = ramp((2, 3, 2, 2));
        let branch = ramp((2, 3, 2, 2)).scale(0.5);
        let spec = DropSpec::new(DropMethod::DropPath, 1.0);
        let (ys, _) = droppath_apply(std::slice::from_ref(&branch), &spec, &mut Rng::new(0), Mode::Train).unwrap();
        assert!(ys[0].bitwise_eq(&branch));

        let dropped = forced(DropMethod::DropPath, (2, 1, 1, 1), vec![0.0, 0.0], 0.5);
        let out = x.add(&dropped.apply(&branch).unwrap()).unwrap();
        assert!(out.bitwise_eq(&x));
    }

    #[test]
    fn droppath_masks_are_per_branch_per_sample() {
        let b = Tensor::new((3, 2, 2, 2), 1.0).unwrap();
        let spec = DropSpec::new(DropMethod::DropPath, 0.5);
        let (ys, masks) =
            droppath_apply(&[b.clone(), b.clone()], &spec, &mut Rng::new(9), Mode::Train).unwrap();
        assert_eq!(masks.len(), 2);
        for (y, m) in ys.iter().zip(&masks) {
            assert_eq!(m.values.shape(), Shape::new(3, 1, 1, 1));
            for n in 0..3 {
                let f = m.values.data()[n];
                assert!(f == 0.0 || f == 2.0);
                assert!(y.sample(n).iter().all(|&v| v == f));
            }
        }
    }

    #[test]
    fn curriculum_endpoints_and_midpoint() {
        let spec = DropSpec::new(DropMethod::DropFilter, 0.6)
            .with_schedule(RateSchedule::Curriculum { start: 1.0, end: 0.6 });
        assert_eq!(retention_schedule(&spec, 0, 11).unwrap(), 1.0);
        assert_eq!(retention_schedule(&spec, 10, 11).unwrap(), 0.6);
        assert!((retention_schedule(&spec, 5, 11).unwrap() - 0.8).abs() < 1e-12);
        assert!(retention_schedule(&spec, 0, 0).is_err());
        assert!(retention_schedule(&spec, 11, 11).is_err());
        let constant = DropSpec::new(DropMethod::Dropout, 0.9);
        assert_eq!(retention_schedule(&constant, 3, 5).unwrap(), 0.9);
    }

    #[test]
    fn curriculum_must_decrease() {
        let spec = DropSpec::new(DropMethod::Dropout, 0.6)
            .with_schedule(RateSchedule::Curriculum { start: 0.6, end: 1.0 });
        assert!(spec.validate().is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in DropMethod::ALL {
            assert_eq!(m.name().parse::<DropMethod>().unwrap(), m);
        }
        assert!("blockdrop".parse::<DropMethod>().is_err());
    }

    proptest! {
        #[test]
        fn dropout_mask_values_are_zero_or_inverse_rate(p in 0.05f64..=1.0, seed in 0u64..1000) {
            let spec = DropSpec::new(DropMethod::Dropout, p);
            let mask = draw_mask(&spec, Shape::new(2, 3, 4, 4), &mut Rng::new(seed)).unwrap();
            prop_assert!(mask.values.data().iter().all(|&v| v == 0.0 || v == 1.0 / p));
        }

        #[test]
        fn backward_equals_forward_mask(seed in 0u64..500) {
            let mut rng = Rng::new(seed);
            let spec = DropSpec::new(DropMethod::DropFilter, 0.6);
            let x = ramp((2, 3, 2, 2));
            let (_, mask) = dropfilter_apply(&x, &spec, &mut rng, Mode::Train).unwrap();
            let mask = mask.unwrap();
            let g = ramp((2, 3, 2, 2)).scale(-0.25);
            prop_assert!(mask.backward(&g).unwrap().bitwise_eq(&mask.apply(&g).unwrap()));
        }
    }
}
