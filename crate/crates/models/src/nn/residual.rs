use ndarray::Array4;
use rand::Rng;

use super::{BatchNorm2d, Conv2d, Layer, Param, Relu};

/// `relu(bn(conv(relu(bn(conv(x))))) + shortcut(x))`, with a 1×1 projection
/// on the shortcut when the channel count changes.
pub struct ResidualBlock {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    relu1: Relu,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    projection: Option<Conv2d>,
    out_relu: Relu,
}

impl ResidualBlock {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, rng: &mut impl Rng) -> Self {
        let conv1 = Conv2d::new(&format!("{name}.conv1"), in_channels, out_channels, 3, 1.0, rng);
        let conv2 = Conv2d::new(&format!("{name}.conv2"), out_channels, out_channels, 3, 1.0, rng);
        let projection = (in_channels != out_channels)
            .then(|| Conv2d::new(&format!("{name}.proj"), in_channels, out_channels, 1, 1.0, rng));
        Self {
            conv1,
            bn1: BatchNorm2d::new(&format!("{name}.bn1"), out_channels),
            relu1: Relu::default(),
            conv2,
            bn2: BatchNorm2d::new(&format!("{name}.bn2"), out_channels),
            projection,
            out_relu: Relu::default(),
        }
    }
}

impl Layer for ResidualBlock {
    fn forward(&mut self, x: Array4<f32>, train: bool) -> Array4<f32> {
        let shortcut = match &mut self.projection {
            Some(p) => p.forward(x.clone(), train),
            None => x.clone(),
        };
        let h = self.conv1.forward(x, train);
        let h = self.bn1.forward(h, train);
        let h = self.relu1.forward(h, train);
        let h = self.conv2.forward(h, train);
        let h = self.bn2.forward(h, train) + shortcut;
        self.out_relu.forward(h, train)
    }

    fn backward(&mut self, grad: Array4<f32>) -> Array4<f32> {
        let g = self.out_relu.backward(grad);
        let skip = match &mut self.projection {
            Some(p) => p.backward(g.clone()),
            None => g.clone(),
        };
        let h = self.bn2.backward(g);
        let h = self.conv2.backward(h);
        let h = self.relu1.backward(h);
        let h = self.bn1.backward(h);
        self.conv1.backward(h) + skip
    }

    fn params(&self) -> Vec<&Param> {
        let mut v = self.conv1.params();
        v.extend(self.bn1.params());
        v.extend(self.conv2.params());
        v.extend(self.bn2.params());
        if let Some(p) = &self.projection {
            v.extend(p.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.conv1.params_mut();
        v.extend(self.bn1.params_mut());
        v.extend(self.conv2.params_mut());
        v.extend(self.bn2.params_mut());
        if let Some(p) = &mut self.projection {
            v.extend(p.params_mut());
        }
        v
    }
}
