use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    x.map_values(|v| if v > 0.0 { v } else { 0.0 })
}

/// Gradient of relu at `x`; the subgradient at exactly 0 is taken as 0.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if x.shape() != grad_out.shape() {
        return Err(shape_err!(
            "relu backward: input {} vs grad {}",
            x.shape(),
            grad_out.shape()
        ));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(x.shape(), data)
}
