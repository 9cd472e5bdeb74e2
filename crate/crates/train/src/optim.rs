use mcld_models::nn::Param;
use mcld_models::NamedTensor;
use ndarray::ArrayD;

use crate::error::{Result, TrainError};

/// SGD with heavy-ball momentum and coupled L2 weight decay:
/// `v = m * v + (g + wd * w)`, `w -= lr * v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    buffers: Vec<(String, ArrayD<f32>)>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self { momentum, weight_decay, buffers: Vec::new() }
    }

    pub fn step(&mut self, params: Vec<&mut Param>, lr: f64) {
        if self.buffers.is_empty() {
            self.buffers = params.iter().map(|p| (p.name.clone(), ArrayD::zeros(p.value.raw_dim()))).collect();
        }
        let (m, lr) = (self.momentum as f32, lr as f32);
        for (p, (name, buf)) in params.into_iter().zip(&mut self.buffers) {
            debug_assert_eq!(&p.name, name);
            let wd = if p.decay { self.weight_decay as f32 } else { 0.0 };
            ndarray::Zip::from(&mut p.value).and(buf).and(&p.grad).for_each(|w, v, &g| {
                *v = m * *v + g + wd * *w;
                *w -= lr * *v;
            });
        }
    }

    pub fn state(&self) -> Vec<NamedTensor> {
        self.buffers
            .iter()
            .map(|(name, b)| NamedTensor {
                name: name.clone(),
                shape: b.shape().to_vec(),
                data: b.iter().copied().collect(),
            })
            .collect()
    }

    /// Restores momentum buffers; they must line up with `params`.
    pub fn load_state(&mut self, params: &[&Param], state: &[NamedTensor]) -> Result<()> {
        if state.is_empty() {
            self.buffers.clear();
            return Ok(());
        }
        if state.len() != params.len() {
            return Err(TrainError::Incompatible(format!(
                "{} momentum buffers for {} parameters",
                state.len(),
                params.len()
            )));
        }
        let mut buffers = Vec::with_capacity(state.len());
        for (p, t) in params.iter().zip(state) {
            if p.name != t.name || p.value.shape() != t.shape.as_slice() {
                return Err(TrainError::Incompatible(format!(
                    "momentum buffer {} {:?} does not match parameter {} {:?}",
                    t.name,
                    t.shape,
                    p.name,
                    p.value.shape()
                )));
            }
            let b = ArrayD::from_shape_vec(t.shape.clone(), t.data.clone())
                .map_err(|e| TrainError::Checkpoint(e.to_string()))?;
            buffers.push((t.name.clone(), b));
        }
        self.buffers = buffers;
        Ok(())
    }
}
