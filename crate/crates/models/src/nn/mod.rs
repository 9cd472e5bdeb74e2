//! A deliberately small set of layers with hand-written backward passes.
//!
//! Everything is `f32`, NCHW, single-threaded and deterministic: the same
//! parameters and input always produce bit-identical outputs.

mod conv;
mod layers;
mod norm;
mod param;
mod residual;

pub use conv::Conv2d;
pub use layers::{GlobalAvgPool, Linear, MaxPool2, Relu};
pub use norm::BatchNorm2d;
pub use param::Param;
pub use residual::ResidualBlock;

use ndarray::Array4;

/// A layer on 4-D activations. `forward` with `train = true` caches whatever
/// `backward` needs; `backward` consumes the cache, accumulates parameter
/// gradients and returns the gradient with respect to the input.
pub trait Layer: Send {
    fn forward(&mut self, x: Array4<f32>, train: bool) -> Array4<f32>;
    fn backward(&mut self, grad: Array4<f32>) -> Array4<f32>;
    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
}
