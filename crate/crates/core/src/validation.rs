//! Statistical and numerical checks: mask frequencies against binomial
//! bounds, Monte-Carlo expectation preservation, and a central-difference
//! gradient oracle with fixtures for every layer and drop operator.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{param_err, Error, Result};
use crate::layers::{
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, softmax_cross_entropy, BatchNorm2d, Conv2d,
    Linear, Mode,
};
use crate::regularize::{apply, draw_mask, droppath_apply, DropMask, DropMethod, DropSpec};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

pub const MIN_FREQ_TRIALS: usize = 10_000;
pub const MIN_EXPECTATION_DRAWS: usize = 1_000;
pub const GRAD_TOLERANCE: f64 = 1e-5;
pub const GRAD_STEP: f64 = 1e-4;
pub const FIXTURES_PER_CHECK: u64 = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct FreqTestReport {
    pub method: DropMethod,
    pub rate: f64,
    pub n_trials: usize,
    /// Fraction of dropped units; for scalefilter the mean scale factor.
    pub observed_rate: f64,
    pub expected_rate: f64,
    /// Three standard errors of `observed_rate`.
    pub sigma_bound: f64,
    pub pass: bool,
}

fn ones(shape: impl Into<Shape>) -> Result<Tensor> {
    Tensor::new(shape, 1.0)
}

fn zero_fraction(values: impl Iterator<Item = bool>, n: usize) -> f64 {
    values.filter(|&z| z).count() as f64 / n as f64
}

/// Draws `n_trials` units through the operator itself and compares the
/// dropped fraction with `1 - p` (dropout counts elements, dropfilter whole
/// maps, droppath whole branches). Scalefilter drops nothing; its report
/// compares the mean factor with 1 at standard error `q / sqrt(3 n)`.
pub fn check_mask_frequency(method: DropMethod, rate: f64, n_trials: usize, rng: &mut Rng) -> Result<FreqTestReport> {
    if n_trials < MIN_FREQ_TRIALS {
        return Err(param_err!("frequency checks need at least {MIN_FREQ_TRIALS} trials"));
    }
    let spec = DropSpec::new(method, rate);
    let n = n_trials;
    let (observed, expected, sigma) = match method {
        DropMethod::None => (0.0, 0.0, 0.0),
        DropMethod::Dropout => {
            let (y, _) = apply(&ones((1, 1, 1, n))?, &spec, rng, Mode::Train)?;
            let obs = zero_fraction(y.data().iter().map(|&v| v == 0.0), n);
            (obs, 1.0 - rate, (rate * (1.0 - rate) / n as f64).sqrt())
        }
        DropMethod::DropFilter => {
            let (y, _) = apply(&ones((1, n, 2, 2))?, &spec, rng, Mode::Train)?;
            let obs = zero_fraction((0..n).map(|c| y.map(0, c).iter().all(|&v| v == 0.0)), n);
            (obs, 1.0 - rate, (rate * (1.0 - rate) / n as f64).sqrt())
        }
        DropMethod::DropPath => {
            let (ys, _) = droppath_apply(&[ones((n, 1, 1, 1))?], &spec, rng, Mode::Train)?;
            let obs = zero_fraction(ys[0].data().iter().map(|&v| v == 0.0), n);
            (obs, 1.0 - rate, (rate * (1.0 - rate) / n as f64).sqrt())
        }
        DropMethod::ScaleFilter => {
            let (y, _) = apply(&ones((1, n, 1, 1))?, &spec, rng, Mode::Train)?;
            let mean = y.sum() / n as f64;
            (mean, 1.0, rate / (3.0 * n as f64).sqrt())
        }
    };
    let sigma_bound = 3.0 * sigma;
    Ok(FreqTestReport {
        method,
        rate,
        n_trials,
        observed_rate: observed,
        expected_rate: expected,
        sigma_bound,
        pass: (observed - expected).abs() <= sigma_bound,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpectationReport {
    pub method: DropMethod,
    pub rate: f64,
    pub draws: usize,
    /// `max_i |mean(op(x))_i - x_i| / |x_i|`.
    pub max_rel_deviation: f64,
    /// `4 * sqrt(var / draws)` with var `(1-p)/p`, or `q^2/3` for scalefilter.
    pub bound: f64,
    pub pass: bool,
}

/// Per-unit variance of the multiplicative factor.
pub fn factor_variance(method: DropMethod, rate: f64) -> f64 {
    match method {
        DropMethod::None => 0.0,
        DropMethod::ScaleFilter => rate * rate / 3.0,
        _ => (1.0 - rate) / rate,
    }
}

/// Averages `draws` training-mode applications of the operator to `x`.
/// Deviations `op(x) - x` are accumulated directly, so an identity
/// operator reports exactly 0.
pub fn check_expectation_preserved(
    method: DropMethod,
    rate: f64,
    x: &Tensor,
    draws: usize,
    rng: &mut Rng,
) -> Result<ExpectationReport> {
    if draws < MIN_EXPECTATION_DRAWS {
        return Err(param_err!("expectation checks need at least {MIN_EXPECTATION_DRAWS} draws"));
    }
    if x.data().iter().any(|v| v.abs() <= 1e-12 || !v.is_finite()) {
        return Err(param_err!("expectation check needs finite inputs bounded away from 0"));
    }
    let spec = DropSpec::new(method, rate);
    let mut acc = vec![0.0; x.len()];
    for _ in 0..draws {
        let y = match method {
            DropMethod::DropPath => droppath_apply(std::slice::from_ref(x), &spec, rng, Mode::Train)?.0.remove(0),
            _ => apply(x, &spec, rng, Mode::Train)?.0,
        };
        for ((a, yv), xv) in acc.iter_mut().zip(y.data()).zip(x.data()) {
            *a += yv - xv;
        }
    }
    let max_rel_deviation = acc
        .iter()
        .zip(x.data())
        .map(|(a, xv)| (a / draws as f64).abs() / xv.abs())
        .fold(0.0, f64::max);
    let bound = 4.0 * (factor_variance(method, rate) / draws as f64).sqrt();
    Ok(ExpectationReport {
        method,
        rate,
        draws,
        max_rel_deviation,
        bound,
        pass: max_rel_deviation <= bound,
    })
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Coordinate with the largest error.
    pub worst: usize,
}

/// Compares `analytic` with central differences of `f` at `x`.
pub fn gradient_check(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    x: &[f64],
    analytic: &[f64],
    step: f64,
) -> Result<GradCheck> {
    if !(1e-6..=1e-3).contains(&step) {
        return Err(param_err!("finite-difference step {step} outside [1e-6, 1e-3]"));
    }
    if x.len() != analytic.len() {
        return Err(param_err!("{} inputs but {} gradient entries", x.len(), analytic.len()));
    }
    let mut probe = x.to_vec();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst: 0,
    };
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f(&probe)?;
        probe[i] = x[i] - step;
        let down = f(&probe)?;
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * step);
        if !numeric.is_finite() || !analytic[i].is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient at coordinate {i}")));
        }
        let e = relative_error(analytic[i], numeric);
        if e > out.max_rel_error {
            out = GradCheck {
                max_rel_error: e,
                worst: i,
            };
        }
    }
    Ok(out)
}

fn randn(shape: impl Into<Shape>, rng: &mut Rng) -> Tensor {
    let shape = shape.into();
    let data = (0..shape.numel()).map(|_| rng.normal()).collect();
    Tensor::from_vec(shape, data).expect("matching length")
}

fn tensor_like(t: &Tensor, data: &[f64]) -> Result<Tensor> {
    Tensor::from_vec(t.shape(), data.to_vec())
}

/// Projection `sum(r * y)` used as the scalar loss of layer fixtures.
fn dot(r: &Tensor, y: &Tensor) -> f64 {
    r.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}

fn worst(checks: impl IntoIterator<Item = Result<GradCheck>>) -> Result<f64> {
    checks
        .into_iter()
        .try_fold(0.0, |acc: f64, c| Ok(acc.max(c?.max_rel_error)))
}

fn min_abs(t: &Tensor) -> f64 {
    t.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

/// Redraws with derived streams until `ok` accepts the fixture.
fn redraw<T>(rng: &Rng, mut make: impl FnMut(&mut Rng) -> Result<T>, ok: impl Fn(&T) -> bool) -> Result<T> {
    for attempt in 0..1000u64 {
        let candidate = make(&mut rng.derive(&[attempt]))?;
        if ok(&candidate) {
            return Ok(candidate);
        }
    }
    Err(Error::Numeric("no kink-free fixture found".into()))
}

/// Gradient fixtures: each returns the worst relative error over the
/// checked inputs and parameters for one seeded fixture.
pub mod fixtures {
    use super::*;

    pub fn linear(seed: u64) -> Result<f64> {
        let mut rng = Rng::new(seed);
        let (n, i, o) = (3, 7, 4);
        let fc = Linear::new("fc", i, o, &mut rng)?;
        let x = randn((n, i, 1, 1), &mut rng);
        let r = randn((n, o, 1, 1), &mut rng);
        let mut g = fc.clone();
        let gx = g.backward(&x, &r)?;
        worst([
            gradient_check(|v| Ok(dot(&r, &fc.forward(&tensor_like(&x, v)?)?)), x.data(), gx.data(), GRAD_STEP),
            gradient_check(
                |v| {
                    let mut f = fc.clone();
                    f.weight.value = v.to_vec();
                    Ok(dot(&r, &f.forward(&x)?))
                },
                &fc.weight.value,
                &g.weight.grad,
                GRAD_STEP,
            ),
            gradient_check(
                |v| {
                    let mut f = fc.clone();
                    f.bias.value = v.to_vec();
                    Ok(dot(&r, &f.forward(&x)?))
                },
                &fc.bias.value,
                &g.bias.grad,
                GRAD_STEP,
            ),
        ])
    }

    /// (cin, cout, kernel, stride, pad) cycled over seeds.
    const CONV_SHAPES: [(usize, usize, usize, usize, usize); 5] =
        [(2, 3, 3, 1, 1), (3, 2, 3, 2, 1), (2, 4, 1, 1, 0), (1, 2, 3, 1, 0), (3, 3, 1, 2, 0)];

    pub fn conv(seed: u64) -> Result<f64> {
        let mut rng = Rng::new(seed);
        let (cin, cout, k, s, p) = CONV_SHAPES[seed as usize % CONV_SHAPES.len()];
        let conv = Conv2d::new("conv", cin, cout, k, s, p, &mut rng)?;
        let x = randn((2, cin, 5, 5), &mut rng);
        let r = randn(conv.output_shape(x.shape())?, &mut rng);
        let mut g = conv.clone();
        let gx = g.backward(&x, &r)?;
        worst([
            gradient_check(|v| Ok(dot(&r, &conv.forward(&tensor_like(&x, v)?)?)), x.data(), gx.data(), GRAD_STEP),
            gradient_check(
                |v| {
                    let mut c = conv.clone();
                    c.weight.value = v.to_vec();
                    Ok(dot(&r, &c.forward(&x)?))
                },
                &conv.weight.value,
                &g.weight.grad,
                GRAD_STEP,
            ),
            gradient_check(
                |v| {
                    let mut c = conv.clone();
                    c.bias.value = v.to_vec();
                    Ok(dot(&r, &c.forward(&x)?))
                },
                &conv.bias.value,
                &g.bias.grad,
                GRAD_STEP,
            ),
        ])
    }

    fn perturbed_bn(rng: &mut Rng, c: usize) -> BatchNorm2d {
        let mut bn = BatchNorm2d::new("bn", c);
        for v in &mut bn.gamma.value {
            *v = 1.0 + 0.3 * rng.normal();
        }
        for v in &mut bn.beta.value {
            *v = 0.3 * rng.normal();
        }
        bn
    }

    pub fn batchnorm(seed: u64) -> Result<f64> {
        let mut rng = Rng::new(seed);
        let c = 3;
        let bn = perturbed_bn(&mut rng, c);
        let x = randn((3, c, 3, 3), &mut rng).scale(2.0);
        let r = randn(x.shape(), &mut rng);
        let mut g = bn.clone();
        let (_, cache) = g.forward_train(&x)?;
        let gx = g.backward(&cache, &r)?;
        let loss = |b: &BatchNorm2d, x: &Tensor| -> Result<f64> {
            let mut b = b.clone();
            Ok(dot(&r, &b.forward_train(x)?.0))
        };
        worst([
            gradient_check(|v| loss(&bn, &tensor_like(&x, v)?), x.data(), gx.data(), GRAD_STEP),
            gradient_check(
                |v| {
                    let mut b = bn.clone();
                    b.gamma.value = v.to_vec();
                    loss(&b, &x)
                },
                &bn.gamma.value,
                &g.gamma.grad,
                GRAD_STEP,
            ),
            gradient_check(
                |v| {
                    let mut b = bn.clone();
                    b.beta.value = v.to_vec();
                    loss(&b, &x)
                },
                &bn.beta.value,
                &g.beta.grad,
                GRAD_STEP,
            ),
        ])
    }

    pub fn relu_layer(seed: u64) -> Result<f64> {
        let rng = Rng::new(seed);
        let (x, r) = redraw(
            &rng,
            |g| Ok((randn((2, 3, 4, 4), g), randn((2, 3, 4, 4), g))),
            |(x, _)| min_abs(x) >= 10.0 * GRAD_STEP,
        )?;
        let gx = relu_backward(&x, &r)?;
        gradient_check(|v| Ok(dot(&r, &relu(&tensor_like(&x, v)?))), x.data(), gx.data(), GRAD_STEP)
            .map(|c| c.max_rel_error)
    }

    pub fn pool(seed: u64) -> Result<f64> {
        let mut rng = Rng::new(seed);
        let x = randn((2, 3, 4, 5), &mut rng);
        let r = randn((2, 3, 1, 1), &mut rng);
        let gx = global_avg_pool_backward(x.shape(), &r)?;
        gradient_check(
            |v| Ok(dot(&r, &global_avg_pool(&tensor_like(&x, v)?)?)),
            x.data(),
            gx.data(),
            GRAD_STEP,
        )
        .map(|c| c.max_rel_error)
    }

    pub fn cross_entropy(seed: u64) -> Result<f64> {
        let mut rng = Rng::new(seed);
        let logits = randn((4, 5, 1, 1), &mut rng).scale(2.0);
        let labels: Vec<usize> = (0..4).map(|_| rng.below(5)).collect();
        let (_, g) = softmax_cross_entropy(&logits, &labels)?;
        gradient_check(
            |v| Ok(softmax_cross_entropy(&tensor_like(&logits, v)?, &labels)?.0),
            logits.data(),
            g.data(),
            GRAD_STEP,
        )
        .map(|c| c.max_rel_error)
    }

    struct Block {
        conv: Conv2d,
        bn: BatchNorm2d,
        x: Tensor,
        r: Tensor,
    }

    impl Block {
        fn forward(&self, conv: &Conv2d, bn: &BatchNorm2d, x: &Tensor) -> Result<(Tensor, Tensor)> {
            let mut bn = bn.clone();
            let z = bn.forward_train(&conv.forward(x)?)?.0;
            Ok((relu(&z), z))
        }
    }

    /// conv -> BN (train mode) -> ReLU, checked w.r.t. input, conv weights
    /// and BN affine parameters.
    pub fn conv_bn_relu(seed: u64) -> Result<f64> {
        let rng = Rng::new(seed);
        let blk = redraw(
            &rng,
            |g| {
                let conv = Conv2d::new("conv", 2, 3, 3, 1, 1, g)?;
                let bn = perturbed_bn(g, 3);
                let x = randn((2, 2, 4, 4), g);
                let out = conv.output_shape(x.shape())?;
                let r = randn(out, g);
                Ok(Block { conv, bn, x, r })
            },
            |b| {
                b.forward(&b.conv, &b.bn, &b.x)
                    .map(|(_, z)| min_abs(&z) >= 10.0 * GRAD_STEP)
                    .unwrap_or(false)
            },
        )?;
        let (mut conv, mut bn) = (blk.conv.clone(), blk.bn.clone());
        let h = conv.forward(&blk.x)?;
        let (z, cache) = bn.forward_train(&h)?;
        let gz = relu_backward(&z, &blk.r)?;
        let gh = bn.backward(&cache, &gz)?;
        let gx = conv.backward(&blk.x, &gh)?;
        let loss = |c: &Conv2d, b: &BatchNorm2d, x: &Tensor| Ok(dot(&blk.r, &blk.forward(c, b, x)?.0));
        worst([
            gradient_check(|v| loss(&blk.conv, &blk.bn, &tensor_like(&blk.x, v)?), blk.x.data(), gx.data(), GRAD_STEP),
            gradient_check(
                |v| {
                    let mut c = blk.conv.clone();
                    c.weight.value = v.to_vec();
                    loss(&c, &blk.bn, &blk.x)
                },
                &blk.conv.weight.value,
                &conv.weight.grad,
                GRAD_STEP,
            ),
            gradient_check(
                |v| {
                    let mut b = blk.bn.clone();
                    b.gamma.value = v.to_vec();
                    loss(&blk.conv, &b, &blk.x)
                },
                &blk.bn.gamma.value,
                &bn.gamma.grad,
                GRAD_STEP,
            ),
        ])
    }

    /// conv -> drop operator with its mask frozen, w.r.t. input and weights.
    pub fn frozen_mask(method: DropMethod, seed: u64) -> Result<f64> {
        let mut rng = Rng::new(seed);
        let rate = match method {
            DropMethod::ScaleFilter => 0.4,
            _ => 0.7,
        };
        let spec = DropSpec::new(method, rate);
        let conv = Conv2d::new("conv", 2, 4, 3, 1, 1, &mut rng)?;
        let x = randn((3, 2, 4, 4), &mut rng);
        let out_shape = conv.output_shape(x.shape())?;
        let mask: DropMask = draw_mask(&spec, out_shape, &mut rng)?;
        let r = randn(out_shape, &mut rng);
        let mut g = conv.clone();
        let gx = g.backward(&x, &mask.backward(&r)?)?;
        let loss = |c: &Conv2d, x: &Tensor| Ok(dot(&r, &mask.apply(&c.forward(x)?)?));
        worst([
            gradient_check(|v| loss(&conv, &tensor_like(&x, v)?), x.data(), gx.data(), GRAD_STEP),
            gradient_check(
                |v| {
                    let mut c = conv.clone();
                    c.weight.value = v.to_vec();
                    loss(&c, &x)
                },
                &conv.weight.value,
                &g.weight.grad,
                GRAD_STEP,
            ),
        ])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Masks,
    Expectation,
    Gradients,
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Masks => "masks",
            Suite::Expectation => "expectation",
            Suite::Gradients => "gradients",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Suite::Masks, Suite::Expectation, Suite::Gradients, Suite::All]
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub suite: &'static str,
    pub check: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

pub const REPORT_HEADER: &str = "suite,check,value,bound,pass";

pub fn report_csv(rows: &[CheckRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{:e},{:e},{}", r.suite, r.check, r.value, r.bound, r.pass);
    }
    out
}

pub const FREQ_RATES: [f64; 4] = [0.5, 0.8, 0.9, 0.95];
pub const FREQ_TRIALS: usize = 100_000;
pub const EXPECTATION_DRAWS: usize = 10_000;

pub fn mask_rows(seed: u64) -> Result<Vec<CheckRow>> {
    let root = Rng::new(seed);
    let mut rows = Vec::new();
    for (mi, method) in [
        DropMethod::Dropout,
        DropMethod::DropFilter,
        DropMethod::ScaleFilter,
        DropMethod::DropPath,
    ]
    .into_iter()
    .enumerate()
    {
        for rate in FREQ_RATES {
            let mut rng = root.derive(&[mi as u64, rate.to_bits()]);
            let rep = check_mask_frequency(method, rate, FREQ_TRIALS, &mut rng)?;
            rows.push(CheckRow {
                suite: "masks",
                check: format!("{method}@{rate}"),
                value: (rep.observed_rate - rep.expected_rate).abs(),
                bound: rep.sigma_bound,
                pass: rep.pass,
            });
        }
    }
    Ok(rows)
}

pub fn expectation_rows(seed: u64) -> Result<Vec<CheckRow>> {
    let root = Rng::new(seed);
    let cases: [(DropMethod, f64); 9] = [
        (DropMethod::Dropout, 0.8),
        (DropMethod::Dropout, 0.9),
        (DropMethod::DropFilter, 0.8),
        (DropMethod::DropFilter, 0.9),
        (DropMethod::ScaleFilter, 0.2),
        (DropMethod::ScaleFilter, 0.4),
        (DropMethod::ScaleFilter, 0.6),
        (DropMethod::DropPath, 0.8),
        (DropMethod::DropPath, 0.9),
    ];
    let mut x_rng = root.derive(&[u64::MAX]);
    let x = Tensor::from_vec(
        (2, 3, 2, 2),
        (0..24).map(|_| (0.5 + x_rng.next_f64()) * if x_rng.next_f64() < 0.5 { -1.0 } else { 1.0 }).collect(),
    )?;
    cases
        .iter()
        .enumerate()
        .map(|(i, &(method, rate))| {
            let rep = check_expectation_preserved(method, rate, &x, EXPECTATION_DRAWS, &mut root.derive(&[i as u64]))?;
            Ok(CheckRow {
                suite: "expectation",
                check: format!("{method}@{rate}"),
                value: rep.max_rel_deviation,
                bound: rep.bound,
                pass: rep.pass,
            })
        })
        .collect()
}

type Fixture = Box<dyn Fn(u64) -> Result<f64>>;

pub fn gradient_fixtures() -> Vec<(&'static str, Fixture)> {
    let mut v: Vec<(&'static str, Fixture)> = vec![
        ("linear", Box::new(fixtures::linear)),
        ("conv", Box::new(fixtures::conv)),
        ("batchnorm", Box::new(fixtures::batchnorm)),
        ("relu", Box::new(fixtures::relu_layer)),
        ("avg_pool", Box::new(fixtures::pool)),
        ("cross_entropy", Box::new(fixtures::cross_entropy)),
        ("conv_bn_relu", Box::new(fixtures::conv_bn_relu)),
    ];
    for (name, m) in [
        ("dropout", DropMethod::Dropout),
        ("dropfilter", DropMethod::DropFilter),
        ("scalefilter", DropMethod::ScaleFilter),
        ("droppath", DropMethod::DropPath),
    ] {
        v.push((name, Box::new(move |s| fixtures::frozen_mask(m, s))));
    }
    v
}

pub fn gradient_rows(seed: u64) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for (name, f) in gradient_fixtures() {
        for k in 0..FIXTURES_PER_CHECK {
            let err = f(seed.wrapping_mul(FIXTURES_PER_CHECK).wrapping_add(k))?;
            rows.push(CheckRow {
                suite: "gradients",
                check: format!("{name}#{k}"),
                value: err,
                bound: GRAD_TOLERANCE,
                pass: err < GRAD_TOLERANCE,
            });
        }
    }
    Ok(rows)
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<CheckRow>> {
    Ok(match suite {
        Suite::Masks => mask_rows(seed)?,
        Suite::Expectation => expectation_rows(seed)?,
        Suite::Gradients => gradient_rows(seed)?,
        Suite::All => {
            let mut rows = mask_rows(seed)?;
            rows.extend(expectation_rows(seed)?);
            rows.extend(gradient_rows(seed)?);
            rows
        }
    })
}
