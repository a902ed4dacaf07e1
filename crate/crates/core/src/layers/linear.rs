use crate::error::{shape_err, Result};
use crate::layers::Param;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Fully connected layer; `weight` is row-major `(out, in)`.
///
/// Inputs are batches of vectors: any tensor whose per-sample length equals
/// `in_features`. Outputs are `(N, out_features, 1, 1)`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    in_features: usize,
    out_features: usize,
}

impl Linear {
    /// Uniform init in `±1/sqrt(in)`, zero bias.
    pub fn new(name: &str, in_features: usize, out_features: usize, rng: &mut Rng) -> Result<Self> {
        let bound = 1.0 / (in_features.max(1) as f64).sqrt();
        let weights = rng.uniform(in_features * out_features, -bound, bound)?;
        Self::from_parts(name, in_features, out_features, weights, vec![0.0; out_features])
    }

    pub fn from_parts(
        name: &str,
        in_features: usize,
        out_features: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != in_features * out_features || bias.len() != out_features {
            return Err(shape_err!(
                "linear {name}: {} weights / {} biases for {in_features} -> {out_features}",
                weights.len(),
                bias.len()
            ));
        }
        Ok(Linear {
            weight: Param::new(format!("{name}.weight"), weights, true),
            bias: Param::new(format!("{name}.bias"), bias, true),
            in_features,
            out_features,
        })
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.shape().sample_len() != self.in_features {
            return Err(shape_err!(
                "linear expects {} inputs per sample, got {}",
                self.in_features,
                x.shape()
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let batch = x.shape().n;
        let mut out = Vec::with_capacity(batch * self.out_features);
        for n in 0..batch {
            let row = x.sample(n);
            for o in 0..self.out_features {
                let w = &self.weight.value[o * self.in_features..(o + 1) * self.in_features];
                let dot: f64 = w.iter().zip(row).map(|(a, b)| a * b).sum();
                out.push(dot + self.bias.value[o]);
            }
        }
        Tensor::from_vec((batch, self.out_features, 1, 1), out)
    }

    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let batch = x.shape().n;
        if grad_out.shape().n != batch || grad_out.shape().sample_len() != self.out_features {
            return Err(shape_err!("linear backward: grad {}", grad_out.shape()));
        }
        let fin = self.in_features;
        let mut grad_x = Tensor::zeros(x.shape());
        for n in 0..batch {
            let row = x.sample(n);
            let g = grad_out.sample(n);
            let gx = grad_x.sample_mut(n);
            for (o, &go) in g.iter().enumerate() {
                self.bias.grad[o] += go;
                let w = &self.weight.value[o * fin..(o + 1) * fin];
                let gw = &mut self.weight.grad[o * fin..(o + 1) * fin];
                for i in 0..fin {
                    gw[i] += go * row[i];
                    gx[i] += go * w[i];
                }
            }
        }
        Ok(grad_x)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vecs(batch: usize, v: Vec<f64>) -> Tensor {
        let len = v.len() / batch;
        Tensor::from_vec((batch, len, 1, 1), v).unwrap()
    }

    #[test]
    fn identity_weights() {
        let l = Linear::from_parts("fc", 2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 2]).unwrap();
        assert_eq!(l.forward(&vecs(1, vec![3.0, -4.0])).unwrap().data(), &[3.0, -4.0]);
    }

    #[test]
    fn zero_weights_give_bias() {
        let l = Linear::from_parts("fc", 3, 2, vec![0.0; 6], vec![1.0, 2.0]).unwrap();
        assert_eq!(l.forward(&vecs(1, vec![5.0, 6.0, 7.0])).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn dot_product() {
        let l = Linear::from_parts("fc", 2, 1, vec![1.0, 1.0], vec![0.0]).unwrap();
        assert_eq!(l.forward(&vecs(1, vec![2.0, 3.0])).unwrap().data(), &[5.0]);
    }

    #[test]
    fn length_mismatch() {
        let l = Linear::from_parts("fc", 2, 1, vec![1.0, 1.0], vec![0.0]).unwrap();
        assert!(l.forward(&vecs(1, vec![1.0, 2.0, 3.0])).is_err());
    }
}
