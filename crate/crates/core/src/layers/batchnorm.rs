use crate::error::{shape_err, Error, Result};
use crate::layers::{Mode, Param};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
/// Weight kept on the old running statistic: `running = 0.9*running + 0.1*batch`.
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel batch normalization over `(N, H, W)`.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

/// Saved forward state for the train-mode backward pass.
#[derive(Clone, Debug)]
pub struct BnCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
}

impl BnCache {
    /// The normalized input, before gamma/beta.
    pub fn normalized(&self) -> &Tensor {
        &self.x_hat
    }
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm2d {
            gamma: Param::new(format!("{name}.gamma"), vec![1.0; channels], false),
            beta: Param::new(format!("{name}.beta"), vec![0.0; channels], false),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.shape().c != self.channels() {
            return Err(shape_err!(
                "batchnorm has {} channels, input is {}",
                self.channels(),
                x.shape()
            ));
        }
        Ok(())
    }

    /// Dispatches on `mode`; the cache is present only in train mode.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, Option<BnCache>)> {
        match mode {
            Mode::Train => self.forward_train(x).map(|(y, c)| (y, Some(c))),
            Mode::Eval => self.forward_eval(x).map(|y| (y, None)),
        }
    }

    /// Normalizes with batch statistics and updates the running averages.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, BnCache)> {
        self.check(x)?;
        let s = x.shape();
        let count = s.n * s.map_len();
        if count <= 1 {
            return Err(Error::DegenerateVariance(format!(
                "batchnorm needs more than one value per channel, input is {s}"
            )));
        }
        let mut x_hat = Tensor::zeros(s);
        let mut out = Tensor::zeros(s);
        let mut inv_std = vec![0.0; s.c];
        for (c, slot) in inv_std.iter_mut().enumerate() {
            let mean = (0..s.n).map(|n| x.map(n, c).iter().sum::<f64>()).sum::<f64>()
                / count as f64;
            let var = (0..s.n)
                .map(|n| x.map(n, c).iter().map(|v| (v - mean).powi(2)).sum::<f64>())
                .sum::<f64>()
                / count as f64;
            let istd = 1.0 / (var + self.eps).sqrt();
            *slot = istd;
            let (g, b) = (self.gamma.value[c], self.beta.value[c]);
            for n in 0..s.n {
                let src = x.map(n, c);
                for (i, v) in src.iter().enumerate() {
                    let xh = (v - mean) * istd;
                    x_hat.map_mut(n, c)[i] = xh;
                    out.map_mut(n, c)[i] = g * xh + b;
                }
            }
            // running variance tracks the unbiased estimate
            let unbiased = var * count as f64 / (count - 1) as f64;
            self.running_mean[c] = self.momentum * self.running_mean[c] + (1.0 - self.momentum) * mean;
            self.running_var[c] = self.momentum * self.running_var[c] + (1.0 - self.momentum) * unbiased;
        }
        Ok((out, BnCache { x_hat, inv_std }))
    }

    /// Normalizes with running statistics only.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let s = x.shape();
        let mut out = x.clone();
        for c in 0..s.c {
            let istd = 1.0 / (self.running_var[c] + self.eps).sqrt();
            let (mean, g, b) = (self.running_mean[c], self.gamma.value[c], self.beta.value[c]);
            for n in 0..s.n {
                out.map_mut(n, c)
                    .iter_mut()
                    .for_each(|v| *v = g * ((*v - mean) * istd) + b);
            }
        }
        Ok(out)
    }

    /// Train-mode backward; accumulates gamma/beta grads.
    pub fn backward(&mut self, cache: &BnCache, grad_out: &Tensor) -> Result<Tensor> {
        let s = grad_out.shape();
        if s != cache.x_hat.shape() {
            return Err(shape_err!(
                "batchnorm backward: grad {s} vs cached {}",
                cache.x_hat.shape()
            ));
        }
        let m = (s.n * s.map_len()) as f64;
        let mut grad_x = Tensor::zeros(s);
        for c in 0..s.c {
            let mut sum_dy = 0.0;
            let mut sum_dy_xh = 0.0;
            for n in 0..s.n {
                for (dy, xh) in grad_out.map(n, c).iter().zip(cache.x_hat.map(n, c)) {
                    sum_dy += dy;
                    sum_dy_xh += dy * xh;
                }
            }
            self.gamma.grad[c] += sum_dy_xh;
            self.beta.grad[c] += sum_dy;
            let scale = self.gamma.value[c] * cache.inv_std[c] / m;
            for n in 0..s.n {
                let dst = grad_x.map_mut(n, c);
                for ((d, dy), xh) in dst
                    .iter_mut()
                    .zip(grad_out.map(n, c))
                    .zip(cache.x_hat.map(n, c))
                {
                    *d = scale * (m * dy - sum_dy - xh * sum_dy_xh);
                }
            }
        }
        Ok(grad_x)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.gamma, &mut self.beta]
    }
}
