use crate::error::{param_err, shape_err, Result};
use crate::layers::Param;
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

/// 2-D cross-correlation with square kernels and zero padding.
///
/// `weight` is laid out `(C_out, C_in, k, k)`; filter `i` is the contiguous
/// slice `weight[i * C_in * k * k..]`.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl Conv2d {
    /// He-initialized weights (std `sqrt(2 / (k*k*C_in))`), zero bias.
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let fan_in = (kernel * kernel * in_channels) as f64;
        let std = (2.0 / fan_in).sqrt();
        let weights = (0..out_channels * in_channels * kernel * kernel)
            .map(|_| std * rng.normal())
            .collect();
        Self::from_parts(
            name,
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            weights,
            vec![0.0; out_channels],
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if kernel == 0 || stride == 0 {
            return Err(param_err!("conv {name}: kernel and stride must be >= 1"));
        }
        if weights.len() != out_channels * in_channels * kernel * kernel {
            return Err(shape_err!(
                "conv {name}: {} weights for ({out_channels}, {in_channels}, {kernel}, {kernel})",
                weights.len()
            ));
        }
        if bias.len() != out_channels {
            return Err(shape_err!(
                "conv {name}: {} biases for {out_channels} filters",
                bias.len()
            ));
        }
        Ok(Conv2d {
            weight: Param::new(format!("{name}.weight"), weights, true),
            bias: Param::new(format!("{name}.bias"), bias, true),
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    /// Weights of filter `i` as a `(C_in, k, k)` slice.
    pub fn filter(&self, i: usize) -> &[f64] {
        let len = self.in_channels * self.kernel * self.kernel;
        &self.weight.value[i * len..(i + 1) * len]
    }

    fn out_dim(&self, size: usize) -> Option<usize> {
        let padded = size + 2 * self.pad;
        if padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if input.c != self.in_channels {
            return Err(shape_err!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                input.c
            ));
        }
        match (self.out_dim(input.h), self.out_dim(input.w)) {
            (Some(h), Some(w)) if h >= 1 && w >= 1 => {
                Ok(Shape::new(input.n, self.out_channels, h, w))
            }
            _ => Err(shape_err!(
                "conv output for input {input} with k={} pad={} is empty",
                self.kernel,
                self.pad
            )),
        }
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// Unfolds one image into a `(C_in*k*k, H'*W')` row-major matrix.
    fn im2col(&self, image: &[f64], ins: Shape, outs: Shape, cols: &mut [f64]) {
        let (k, s, p) = (self.kernel, self.stride, self.pad as isize);
        let positions = outs.h * outs.w;
        for c in 0..ins.c {
            let plane = &image[c * ins.h * ins.w..(c + 1) * ins.h * ins.w];
            for u in 0..k {
                for v in 0..k {
                    let row = (c * k + u) * k + v;
                    let dst = &mut cols[row * positions..(row + 1) * positions];
                    for oh in 0..outs.h {
                        let ih = (oh * s + u) as isize - p;
                        let line = &mut dst[oh * outs.w..(oh + 1) * outs.w];
                        if ih < 0 || ih >= ins.h as isize {
                            line.fill(0.0);
                            continue;
                        }
                        let src = &plane[ih as usize * ins.w..(ih as usize + 1) * ins.w];
                        for (ow, d) in line.iter_mut().enumerate() {
                            let iw = (ow * s + v) as isize - p;
                            *d = if iw < 0 || iw >= ins.w as isize {
                                0.0
                            } else {
                                src[iw as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds a column matrix back onto an image gradient.
    fn col2im(&self, cols: &[f64], ins: Shape, outs: Shape, image: &mut [f64]) {
        let (k, s, p) = (self.kernel, self.stride, self.pad as isize);
        let positions = outs.h * outs.w;
        for c in 0..ins.c {
            let plane = &mut image[c * ins.h * ins.w..(c + 1) * ins.h * ins.w];
            for u in 0..k {
                for v in 0..k {
                    let row = (c * k + u) * k + v;
                    let src = &cols[row * positions..(row + 1) * positions];
                    for oh in 0..outs.h {
                        let ih = (oh * s + u) as isize - p;
                        if ih < 0 || ih >= ins.h as isize {
                            continue;
                        }
                        let dst = &mut plane[ih as usize * ins.w..(ih as usize + 1) * ins.w];
                        for ow in 0..outs.w {
                            let iw = (ow * s + v) as isize - p;
                            if iw >= 0 && iw < ins.w as isize {
                                dst[iw as usize] += src[oh * outs.w + ow];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let ins = x.shape();
        let outs = self.output_shape(ins)?;
        let (m, kk, n) = (self.out_channels, self.patch_len(), outs.h * outs.w);
        let mut out = Tensor::zeros(outs);
        let mut cols = vec![0.0; kk * n];
        for b in 0..ins.n {
            self.im2col(x.sample(b), ins, outs, &mut cols);
            let dst = out.sample_mut(b);
            for (i, row) in dst.chunks_exact_mut(n).enumerate() {
                row.fill(self.bias.value[i]);
            }
            // out_b (m x n) += W (m x kk) * cols (kk x n)
            unsafe {
                matrixmultiply::dgemm(
                    m,
                    kk,
                    n,
                    1.0,
                    self.weight.value.as_ptr(),
                    kk as isize,
                    1,
                    cols.as_ptr(),
                    n as isize,
                    1,
                    1.0,
                    dst.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        }
        Ok(out)
    }

    /// Returns dL/dx and accumulates dL/dw, dL/db into the parameter grads.
    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let ins = x.shape();
        let outs = self.output_shape(ins)?;
        if grad_out.shape() != outs {
            return Err(shape_err!(
                "conv backward: grad {} but forward output is {outs}",
                grad_out.shape()
            ));
        }
        let (m, kk, n) = (self.out_channels, self.patch_len(), outs.h * outs.w);
        let mut grad_x = Tensor::zeros(ins);
        let mut cols = vec![0.0; kk * n];
        let mut grad_cols = vec![0.0; kk * n];
        for b in 0..ins.n {
            let g = grad_out.sample(b);
            for (i, row) in g.chunks_exact(n).enumerate() {
                self.bias.grad[i] += row.iter().sum::<f64>();
            }
            self.im2col(x.sample(b), ins, outs, &mut cols);
            unsafe {
                // dW (m x kk) += G (m x n) * cols^T (n x kk)
                matrixmultiply::dgemm(
                    m,
                    n,
                    kk,
                    1.0,
                    g.as_ptr(),
                    n as isize,
                    1,
                    cols.as_ptr(),
                    1,
                    n as isize,
                    1.0,
                    self.weight.grad.as_mut_ptr(),
                    kk as isize,
                    1,
                );
                // dcols (kk x n) = W^T (kk x m) * G (m x n)
                matrixmultiply::dgemm(
                    kk,
                    m,
                    n,
                    1.0,
                    self.weight.value.as_ptr(),
                    1,
                    kk as isize,
                    g.as_ptr(),
                    n as isize,
                    1,
                    0.0,
                    grad_cols.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
            self.col2im(&grad_cols, ins, outs, grad_x.sample_mut(b));
        }
        Ok(grad_x)
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Naive 6-loop cross-correlation, kept independent of im2col/GEMM.
    fn conv_oracle(layer: &Conv2d, x: &Tensor) -> Tensor {
        let ins = x.shape();
        let outs = layer.output_shape(ins).unwrap();
        let (k, s, p) = (layer.kernel, layer.stride, layer.pad as isize);
        let mut out = Tensor::zeros(outs);
        for n in 0..outs.n {
            for i in 0..outs.c {
                for oh in 0..outs.h {
                    for ow in 0..outs.w {
                        let mut acc = layer.bias.value[i];
                        for c in 0..ins.c {
                            for u in 0..k {
                                for v in 0..k {
                                    let ih = (oh * s + u) as isize - p;
                                    let iw = (ow * s + v) as isize - p;
                                    if ih < 0 || iw < 0 || ih >= ins.h as isize || iw >= ins.w as isize
                                    {
                                        continue;
                                    }
                                    let w = layer.weight.value[((i * ins.c + c) * k + u) * k + v];
                                    acc += w * x.at(n, c, ih as usize, iw as usize);
                                }
                            }
                        }
                        out.set(n, i, oh, ow, acc);
                    }
                }
            }
        }
        out
    }

    fn random_tensor(shape: Shape, rng: &mut Rng) -> Tensor {
        let data = (0..shape.numel()).map(|_| rng.normal()).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn scalar_convolution() {
        let layer = Conv2d::from_parts("c", 1, 1, 1, 1, 0, vec![2.0], vec![0.0]).unwrap();
        let x = Tensor::new((1, 1, 1, 1), 3.0).unwrap();
        assert_eq!(layer.forward(&x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn all_ones_padded_overlap_counts() {
        let layer = Conv2d::from_parts("c", 1, 1, 3, 1, 1, vec![1.0; 9], vec![0.0]).unwrap();
        let x = Tensor::new((1, 1, 3, 3), 1.0).unwrap();
        let out = layer.forward(&x).unwrap();
        assert_eq!(out.at(0, 0, 1, 1), 9.0);
        for (h, w) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(out.at(0, 0, h, w), 4.0);
        }
        assert_eq!(out.at(0, 0, 0, 1), 6.0);
        assert!(out.max_abs_diff(&conv_oracle(&layer, &x)).unwrap() == 0.0);
    }

    #[test]
    fn strided_output_shape() {
        let mut rng = Rng::new(0);
        let layer = Conv2d::new("c", 16, 32, 3, 2, 1, &mut rng).unwrap();
        let s = layer.output_shape(Shape::new(2, 16, 32, 32)).unwrap();
        assert_eq!(s, Shape::new(2, 32, 16, 16));
    }

    #[test]
    fn shape_errors() {
        let mut rng = Rng::new(0);
        let layer = Conv2d::new("c", 3, 4, 3, 1, 0, &mut rng).unwrap();
        assert!(layer.forward(&Tensor::zeros((1, 2, 5, 5))).is_err());
        assert!(layer.forward(&Tensor::zeros((1, 3, 2, 2))).is_err());
        assert!(Conv2d::new("c", 3, 4, 0, 1, 0, &mut rng).is_err());
        assert!(Conv2d::new("c", 3, 4, 3, 0, 0, &mut rng).is_err());
        let x = Tensor::zeros((1, 3, 5, 5));
        let mut layer = layer;
        assert!(layer.backward(&x, &Tensor::zeros((1, 4, 5, 5))).is_err());
    }

    #[test]
    fn matches_loop_oracle() {
        let mut rng = Rng::new(17);
        for (cin, cout, hw, k, s, p) in [
            (1, 1, 4, 3, 1, 1),
            (3, 4, 5, 3, 2, 1),
            (2, 3, 4, 1, 2, 0),
            (4, 2, 6, 3, 1, 0),
            (2, 2, 3, 2, 1, 1),
        ] {
            let layer = Conv2d::new("c", cin, cout, k, s, p, &mut rng).unwrap();
            let x = random_tensor(Shape::new(2, cin, hw, hw), &mut rng);
            let fast = layer.forward(&x).unwrap();
            let slow = conv_oracle(&layer, &x);
            assert!(fast.max_abs_diff(&slow).unwrap() < 1e-12);
        }
    }

    #[test]
    fn scalar_backward() {
        let mut layer = Conv2d::from_parts("c", 1, 1, 1, 1, 0, vec![2.0], vec![0.0]).unwrap();
        let x = Tensor::new((1, 1, 1, 1), 3.0).unwrap();
        let g = Tensor::new((1, 1, 1, 1), 1.0).unwrap();
        let gx = layer.backward(&x, &g).unwrap();
        assert_eq!(gx.data(), &[2.0]);
        assert_eq!(layer.weight.grad, vec![3.0]);
        assert_eq!(layer.bias.grad, vec![1.0]);
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut rng = Rng::new(2);
        let mut layer = Conv2d::new("c", 2, 3, 3, 1, 1, &mut rng).unwrap();
        let x = random_tensor(Shape::new(2, 2, 4, 4), &mut rng);
        let gx = layer.backward(&x, &Tensor::zeros((2, 3, 4, 4))).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(layer.weight.grad.iter().all(|&v| v == 0.0));
        assert!(layer.bias.grad.iter().all(|&v| v == 0.0));
    }
}
