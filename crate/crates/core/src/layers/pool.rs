use crate::error::{shape_err, Result};
use crate::tensor::{Shape, Tensor};

/// Spatial mean per `(n, c)`: `(N, C, H, W) -> (N, C, 1, 1)`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.map_len() == 0 {
        return Err(shape_err!("global_avg_pool on empty spatial extent {s}"));
    }
    let inv = 1.0 / s.map_len() as f64;
    let mut data = Vec::with_capacity(s.n * s.c);
    for n in 0..s.n {
        for c in 0..s.c {
            data.push(x.map(n, c).iter().sum::<f64>() * inv);
        }
    }
    Tensor::from_vec((s.n, s.c, 1, 1), data)
}

pub fn global_avg_pool_backward(input: Shape, grad_out: &Tensor) -> Result<Tensor> {
    let g = grad_out.shape();
    if g != Shape::new(input.n, input.c, 1, 1) || input.map_len() == 0 {
        return Err(shape_err!("pool backward: grad {g} for input {input}"));
    }
    let inv = 1.0 / input.map_len() as f64;
    let mut out = Tensor::zeros(input);
    for n in 0..input.n {
        for c in 0..input.c {
            let v = grad_out.data()[n * input.c + c] * inv;
            out.map_mut(n, c).fill(v);
        }
    }
    Ok(out)
}
