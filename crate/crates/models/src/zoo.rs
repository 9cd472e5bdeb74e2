//! Teacher/student model families.
//!
//! Every network is `body → global average pool → linear head`; the pooled
//! vector is the penultimate feature used for probing and visualisation.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array4, ArrayD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, GlobalAvgPool, Layer, Linear, MaxPool2, Param, Relu, ResidualBlock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// `depth` stages of conv3×3 → batch norm → relu → maxpool; channels `width · 2^stage`.
    PlainConv,
    /// Conv stem then three stages of `depth` residual blocks with
    /// `width`, `2·width`, `4·width` channels, pooled between stages.
    #[serde(rename = "resnet")]
    ResNet,
    /// Same layout as `ResNet` with channels `8·width·2^stage` (`width` is
    /// the widening factor).
    #[serde(rename = "wide_resnet")]
    WideResNet,
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain_conv" | "plain" => Ok(Self::PlainConv),
            "resnet" | "res_net" => Ok(Self::ResNet),
            "wide_resnet" | "wrn" | "wide_res_net" => Ok(Self::WideResNet),
            other => Err(Error::UnknownArchitecture(other.to_string())),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PlainConv => "plain_conv",
            Self::ResNet => "resnet",
            Self::WideResNet => "wide_resnet",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub depth: usize,
    pub width: usize,
    pub num_classes: usize,
    #[serde(default = "default_in_channels")]
    pub in_channels: usize,
}

fn default_in_channels() -> usize {
    3
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 {
            return Err(Error::InvalidSpec("depth and width must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidSpec("need at least 2 classes".into()));
        }
        if self.in_channels == 0 {
            return Err(Error::InvalidSpec("in_channels must be positive".into()));
        }
        Ok(())
    }

    fn stage_widths(&self) -> Vec<usize> {
        match self.architecture {
            Architecture::PlainConv => (0..self.depth).map(|s| self.width << s).collect(),
            Architecture::ResNet => (0..3).map(|s| self.width << s).collect(),
            Architecture::WideResNet => (0..3).map(|s| (8 * self.width) << s).collect(),
        }
    }

    /// Width of the penultimate (pooled) feature vector.
    pub fn feature_dim(&self) -> usize {
        *self.stage_widths().last().expect("at least one stage")
    }
}

/// Output of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub features: Array2<f32>,
    pub logits: Array2<f32>,
}

/// A tensor flattened for persistence.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub struct Network {
    spec: ModelSpec,
    body: Vec<Box<dyn Layer>>,
    pool: GlobalAvgPool,
    head: Linear,
    frozen: bool,
}

/// Deterministically initialised network for `spec`.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<Network> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths = spec.stage_widths();
    let mut body: Vec<Box<dyn Layer>> = Vec::new();
    match spec.architecture {
        Architecture::PlainConv => {
            let mut c = spec.in_channels;
            for (s, &w) in widths.iter().enumerate() {
                body.push(Box::new(Conv2d::new(&format!("stage{s}.conv"), c, w, 3, 1.0, &mut rng)));
                body.push(Box::new(BatchNorm2d::new(&format!("stage{s}.bn"), w)));
                body.push(Box::new(Relu::default()));
                body.push(Box::new(MaxPool2::default()));
                c = w;
            }
        }
        Architecture::ResNet | Architecture::WideResNet => {
            body.push(Box::new(Conv2d::new("stem", spec.in_channels, widths[0], 3, 1.0, &mut rng)));
            body.push(Box::new(BatchNorm2d::new("stem.bn", widths[0])));
            body.push(Box::new(Relu::default()));
            let mut c = widths[0];
            for (s, &w) in widths.iter().enumerate() {
                if s > 0 {
                    body.push(Box::new(MaxPool2::default()));
                }
                for b in 0..spec.depth {
                    body.push(Box::new(ResidualBlock::new(&format!("stage{s}.block{b}"), c, w, &mut rng)));
                    c = w;
                }
            }
        }
    }
    let head = Linear::new("head", spec.feature_dim(), spec.num_classes, &mut rng);
    Ok(Network { spec: spec.clone(), body, pool: GlobalAvgPool::default(), head, frozen: false })
}

impl Network {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Runs the network. With `train` set (and the model not frozen) the
    /// activations needed by [`Network::backward`] are cached.
    pub fn forward(&mut self, images: &Array4<f32>, train: bool) -> ForwardOutput {
        let train = train && !self.frozen;
        assert_eq!(images.dim().1, self.spec.in_channels, "input channels");
        let mut x = images.clone();
        for layer in &mut self.body {
            x = layer.forward(x, train);
        }
        let pooled = self.pool.forward(x, train);
        let b = pooled.dim().0;
        let features = pooled.into_shape_with_order((b, self.spec.feature_dim())).expect("pooled features");
        let logits = self.head.forward(&features, train);
        ForwardOutput { features, logits }
    }

    /// Backpropagates `d loss / d logits` from the last training forward pass,
    /// accumulating into parameter gradients.
    pub fn backward(&mut self, grad_logits: &Array2<f32>) -> Result<()> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        let g = self.head.backward(grad_logits);
        let (b, f) = g.dim();
        let mut g = self.pool.backward(g.into_shape_with_order((b, f, 1, 1)).expect("grad"));
        for layer in self.body.iter_mut().rev() {
            g = layer.backward(g);
        }
        Ok(())
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = self.body.iter().flat_map(|l| l.params()).collect();
        v.extend(self.head.params());
        v
    }

    /// Trainable parameters in optimiser order, regardless of freezing.
    pub fn trainable_params(&self) -> Vec<&Param> {
        self.params().into_iter().filter(|p| p.trainable).collect()
    }

    /// Parameters an optimiser may update; empty for a frozen model.
    pub fn trainable_params_mut(&mut self) -> Vec<&mut Param> {
        if self.frozen {
            return Vec::new();
        }
        let mut v: Vec<&mut Param> = self.body.iter_mut().flat_map(|l| l.params_mut()).collect();
        v.extend(self.head.params_mut());
        v.retain(|p| p.trainable);
        v
    }

    pub fn zero_grad(&mut self) {
        for p in self.trainable_params_mut() {
            p.zero_grad();
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// SHA-256 over parameter names, shapes and little-endian values.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in self.params() {
            h.update(p.name.as_bytes());
            for &d in p.value.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for v in p.value.iter() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn state(&self) -> Vec<NamedTensor> {
        self.params()
            .into_iter()
            .map(|p| NamedTensor {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                data: p.value.iter().copied().collect(),
            })
            .collect()
    }

    /// Overwrites parameters from `state`; every parameter must be present
    /// with a matching shape. Works on frozen models too.
    pub fn load_state(&mut self, state: &[NamedTensor]) -> Result<()> {
        let mut params: Vec<&mut Param> = self.body.iter_mut().flat_map(|l| l.params_mut()).collect();
        params.extend(self.head.params_mut());
        if params.len() != state.len() {
            return Err(Error::Shape(format!("model has {} tensors, state has {}", params.len(), state.len())));
        }
        for p in params {
            let t = state
                .iter()
                .find(|t| t.name == p.name)
                .ok_or_else(|| Error::Shape(format!("missing tensor {}", p.name)))?;
            if t.shape != p.value.shape() {
                return Err(Error::Shape(format!(
                    "tensor {}: expected {:?}, got {:?}",
                    p.name,
                    p.value.shape(),
                    t.shape
                )));
            }
            p.value =
                ArrayD::from_shape_vec(t.shape.clone(), t.data.clone()).map_err(|e| Error::Shape(e.to_string()))?;
        }
        Ok(())
    }
}
