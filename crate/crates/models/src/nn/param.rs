use ndarray::ArrayD;

/// A named trainable tensor with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: ArrayD<f32>,
    pub grad: ArrayD<f32>,
    /// Whether weight decay applies (weights yes, biases no).
    pub decay: bool,
    /// `false` for state such as running statistics, which optimisers skip.
    pub trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, value: ArrayD<f32>, decay: bool) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Self { name: name.into(), value, grad, decay, trainable: true }
    }

    /// Non-trainable state that is still saved and checksummed.
    pub fn buffer(name: impl Into<String>, value: ArrayD<f32>) -> Self {
        Self { trainable: false, ..Self::new(name, value, false) }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}
