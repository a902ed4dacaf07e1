//! Dense rank-4 tensors in (batch, channel, height, width) layout.
//!
//! Storage is a contiguous row-major `Vec<f64>`, so the feature map at a
//! fixed `(n, c)` is one contiguous slice of length `h * w`.

use std::fmt;

use crate::error::{shape_err, Error, Result};

/// Tensor shape `(N, C, H, W)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    /// Element count, or `None` when the product overflows.
    pub fn checked_numel(&self) -> Option<usize> {
        self.n
            .checked_mul(self.c)?
            .checked_mul(self.h)?
            .checked_mul(self.w)
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    /// Elements in one feature map.
    pub fn map_len(&self) -> usize {
        self.h * self.w
    }

    /// Elements in one batch item.
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl From<(usize, usize, usize, usize)> for Shape {
    fn from((n, c, h, w): (usize, usize, usize, usize)) -> Self {
        Shape { n, c, h, w }
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor{:?} ", self.shape)?;
        let head: Vec<_> = self.data.iter().take(PREVIEW).collect();
        if self.data.len() > PREVIEW {
            write!(f, "{head:?}..")
        } else {
            write!(f, "{head:?}")
        }
    }
}

/// Largest element count we are willing to allocate (bytes must fit `isize`).
const MAX_ELEMENTS: usize = isize::MAX as usize / std::mem::size_of::<f64>();

impl Tensor {
    /// Tensor of `shape` with every element equal to `fill`.
    pub fn new(shape: impl Into<Shape>, fill: f64) -> Result<Self> {
        let shape = shape.into();
        let len = shape
            .checked_numel()
            .filter(|&len| len <= MAX_ELEMENTS)
            .ok_or_else(|| Error::Size(format!("shape {shape} exceeds addressable size")))?;
        Ok(Tensor {
            shape,
            data: vec![fill; len],
        })
    }

    /// Panics if the shape overflows; for internally computed shapes only.
    pub fn zeros(shape: impl Into<Shape>) -> Self {
        Self::new(shape, 0.0).expect("tensor shape overflow")
    }

    pub fn from_vec(shape: impl Into<Shape>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        match shape.checked_numel() {
            Some(len) if len == data.len() => Ok(Tensor { shape, data }),
            _ => Err(shape_err!(
                "shape {shape} does not match data length {}",
                data.len()
            )),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let s = &self.shape;
        debug_assert!(n < s.n && c < s.c && h < s.h && w < s.w);
        ((n * s.c + c) * s.h + h) * s.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.offset(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, value: f64) {
        let i = self.offset(n, c, h, w);
        self.data[i] = value;
    }

    /// The feature map at `(n, c)`.
    pub fn map(&self, n: usize, c: usize) -> &[f64] {
        let len = self.shape.map_len();
        let start = (n * self.shape.c + c) * len;
        &self.data[start..start + len]
    }

    pub fn map_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let len = self.shape.map_len();
        let start = (n * self.shape.c + c) * len;
        &mut self.data[start..start + len]
    }

    /// All channels of batch item `n`.
    pub fn sample(&self, n: usize) -> &[f64] {
        let len = self.shape.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f64] {
        let len = self.shape.sample_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn reshape(self, shape: impl Into<Shape>) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Tensor {
        self.map_values(|v| a * v)
    }

    fn zip_with(&self, other: &Tensor, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(shape_err!("{op}: {} vs {}", self.shape, other.shape));
        }
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err!("add_assign: {} vs {}", self.shape, other.shape));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// `out[n,c,h,w] = x[n,c,h,w] * m[n,c,0,0]`.
    ///
    /// `m` must be `(N, C, 1, 1)`; a batch dimension of 1 is broadcast over
    /// every sample (batch-shared masks).
    pub fn broadcast_mul_channels(&self, m: &Tensor) -> Result<Tensor> {
        let (xs, ms) = (self.shape, m.shape);
        if ms.h != 1 || ms.w != 1 || ms.c != xs.c || (ms.n != xs.n && ms.n != 1) {
            return Err(shape_err!(
                "broadcast_mul_channels: x {xs} cannot take per-channel factors {ms}"
            ));
        }
        let mut out = self.clone();
        for n in 0..xs.n {
            let mn = if ms.n == 1 { 0 } else { n };
            for c in 0..xs.c {
                let factor = m.data[mn * ms.c + c];
                out.map_mut(n, c).iter_mut().for_each(|v| *v *= factor);
            }
        }
        Ok(out)
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err!("concat_channels: no inputs"))?
            .shape;
        let mut channels = 0;
        for p in parts {
            let s = p.shape;
            if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
                return Err(shape_err!("concat_channels: {s} vs {first}"));
            }
            channels += s.c;
        }
        let mut data = Vec::with_capacity(first.n * channels * first.map_len());
        for n in 0..first.n {
            for p in parts {
                data.extend_from_slice(p.sample(n));
            }
        }
        Tensor::from_vec((first.n, channels, first.h, first.w), data)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(shape_err!("max_abs_diff: {} vs {}", self.shape, other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// True when both tensors have the same shape and bit patterns.
    pub fn bitwise_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fill_semantics() {
        let t = Tensor::new((1, 1, 2, 2), 0.0).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
        let t = Tensor::new((2, 3, 4, 4), 1.0).unwrap();
        assert_eq!(t.len(), 96);
        assert!(t.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_dimension_is_empty() {
        let t = Tensor::new((1, 0, 5, 5), 7.0).unwrap();
        assert_eq!(t.len(), 0);
        assert!(t.is_empty());
    }

    #[test]
    fn overflowing_shape_is_size_error() {
        let err = Tensor::new((usize::MAX, 2, 1, 1), 0.0).unwrap_err();
        assert!(matches!(err, Error::Size(_)));
        let err = Tensor::new((1 << 20, 1 << 20, 1 << 20, 1), 0.0).unwrap_err();
        assert!(matches!(err, Error::Size(_)));
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec((1, 1, 2, 2), vec![0.0; 3]).is_err());
    }

    #[test]
    fn broadcast_drops_channel() {
        let x = Tensor::new((1, 2, 2, 2), 1.0).unwrap();
        let m = Tensor::from_vec((1, 2, 1, 1), vec![1.0, 0.0]).unwrap();
        let out = x.broadcast_mul_channels(&m).unwrap();
        assert_eq!(out.map(0, 0), &[1.0; 4]);
        assert_eq!(out.map(0, 1), &[0.0; 4]);
    }

    #[test]
    fn broadcast_identity_and_scalar() {
        let x = Tensor::from_vec((2, 2, 1, 3), (0..12).map(f64::from).collect()).unwrap();
        let ones = Tensor::new((2, 2, 1, 1), 1.0).unwrap();
        assert!(x.broadcast_mul_channels(&ones).unwrap().bitwise_eq(&x));

        let x = Tensor::new((1, 1, 1, 1), 3.0).unwrap();
        let m = Tensor::new((1, 1, 1, 1), 2.0).unwrap();
        assert_eq!(x.broadcast_mul_channels(&m).unwrap().data(), &[6.0]);
    }

    #[test]
    fn broadcast_rejects_mismatch() {
        let x = Tensor::zeros((2, 3, 2, 2));
        assert!(x.broadcast_mul_channels(&Tensor::zeros((2, 2, 1, 1))).is_err());
        assert!(x.broadcast_mul_channels(&Tensor::zeros((3, 3, 1, 1))).is_err());
        assert!(x.broadcast_mul_channels(&Tensor::zeros((2, 3, 2, 1))).is_err());
        // batch-shared factors broadcast
        assert!(x.broadcast_mul_channels(&Tensor::zeros((1, 3, 1, 1))).is_ok());
    }

    #[test]
    fn concat_interleaves_per_sample() {
        let a = Tensor::from_vec((2, 1, 1, 1), vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_vec((2, 2, 1, 1), vec![10.0, 11.0, 20.0, 21.0]).unwrap();
        let out = Tensor::concat_channels(&[a, b]).unwrap();
        assert_eq!(out.shape(), Shape::new(2, 3, 1, 1));
        assert_eq!(out.data(), &[1.0, 10.0, 11.0, 2.0, 20.0, 21.0]);
    }

    proptest! {
        #[test]
        fn broadcast_is_linear_in_x(
            vals in prop::collection::vec(-10.0f64..10.0, 2 * 3 * 4),
            mask in prop::collection::vec(-2.0f64..2.0, 2 * 3),
            a in -5.0f64..5.0,
        ) {
            let x = Tensor::from_vec((2, 3, 2, 2), vals).unwrap();
            let m = Tensor::from_vec((2, 3, 1, 1), mask).unwrap();
            let lhs = x.scale(a).broadcast_mul_channels(&m).unwrap();
            let rhs = x.broadcast_mul_channels(&m).unwrap().scale(a);
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12);
        }
    }
}
