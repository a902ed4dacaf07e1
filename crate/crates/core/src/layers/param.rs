/// A trainable parameter with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    /// Whether the optimizer applies weight decay (false for BN gamma/beta).
    pub decay: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Vec<f64>, decay: bool) -> Self {
        let grad = vec![0.0; value.len()];
        Param {
            name: name.into(),
            value,
            grad,
            decay,
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}
