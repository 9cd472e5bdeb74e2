use ndarray::{Array1, Array2, Array4, ArrayD, Axis, Ix1, Ix2};
use rand::Rng;

use super::{Layer, Param};

#[derive(Default)]
pub struct Relu {
    mask: Option<Array4<bool>>,
}

impl Layer for Relu {
    fn forward(&mut self, mut x: Array4<f32>, train: bool) -> Array4<f32> {
        if train {
            self.mask = Some(x.mapv(|v| v > 0.0));
        }
        x.mapv_inplace(|v| v.max(0.0));
        x
    }

    fn backward(&mut self, mut grad: Array4<f32>) -> Array4<f32> {
        let mask = self.mask.take().expect("relu backward without cached forward");
        grad.zip_mut_with(&mask, |g, &m| {
            if !m {
                *g = 0.0;
            }
        });
        grad
    }
}

/// 2×2 max pooling with stride 2. Odd trailing rows/columns are dropped.
#[derive(Default)]
pub struct MaxPool2 {
    cache: Option<(Vec<usize>, [usize; 4])>,
}

impl Layer for MaxPool2 {
    fn forward(&mut self, x: Array4<f32>, train: bool) -> Array4<f32> {
        let (b, c, h, w) = x.dim();
        let (oh, ow) = (h / 2, w / 2);
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let mut out = Array4::<f32>::zeros((b, c, oh, ow));
        let mut arg = vec![0usize; b * c * oh * ow];
        let os = out.as_slice_mut().expect("fresh array");
        for plane in 0..b * c {
            let base = plane * h * w;
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = base + 2 * y * w + 2 * xx;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = base + (2 * y + dy) * w + 2 * xx + dx;
                        if xs[i] > xs[best] {
                            best = i;
                        }
                    }
                    let o = (plane * oh + y) * ow + xx;
                    os[o] = xs[best];
                    arg[o] = best;
                }
            }
        }
        if train {
            self.cache = Some((arg, [b, c, h, w]));
        }
        out
    }

    fn backward(&mut self, grad: Array4<f32>) -> Array4<f32> {
        let (arg, [b, c, h, w]) = self.cache.take().expect("pool backward without cached forward");
        let mut dx = Array4::<f32>::zeros((b, c, h, w));
        let ds = dx.as_slice_mut().expect("fresh array");
        let grad = grad.as_standard_layout();
        for (g, &i) in grad.iter().zip(&arg) {
            ds[i] += g;
        }
        dx
    }
}

/// Mean over the spatial dimensions, producing `(B, C, 1, 1)`.
#[derive(Default)]
pub struct GlobalAvgPool {
    dims: Option<[usize; 4]>,
}

impl Layer for GlobalAvgPool {
    fn forward(&mut self, x: Array4<f32>, train: bool) -> Array4<f32> {
        let (b, c, h, w) = x.dim();
        if train {
            self.dims = Some([b, c, h, w]);
        }
        let flat = x.as_standard_layout().into_owned().into_shape_with_order((b, c, h * w)).expect("pool input");
        let mean = flat.sum_axis(Axis(2)) / (h * w) as f32;
        mean.into_shape_with_order((b, c, 1, 1)).expect("pool output")
    }

    fn backward(&mut self, grad: Array4<f32>) -> Array4<f32> {
        let [b, c, h, w] = self.dims.take().expect("pool backward without cached forward");
        let scale = 1.0 / (h * w) as f32;
        let g = grad.into_shape_with_order((b, c)).expect("pool grad");
        Array4::from_shape_fn((b, c, h, w), |(i, j, _, _)| g[[i, j]] * scale)
    }
}

/// Fully connected layer on `(B, in)` matrices.
pub struct Linear {
    weight: Param,
    bias: Param,
    input: Option<Array2<f32>>,
}

impl Linear {
    pub fn new(name: &str, inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs as f32).sqrt();
        let w = ArrayD::from_shape_fn(vec![outputs, inputs], |_| rng.random_range(-bound..bound));
        Self {
            weight: Param::new(format!("{name}.weight"), w, true),
            bias: Param::new(format!("{name}.bias"), ArrayD::zeros(vec![outputs]), false),
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Array2<f32>, train: bool) -> Array2<f32> {
        let w = self.weight.value.view().into_dimensionality::<Ix2>().expect("2-D weight");
        let b = self.bias.value.view().into_dimensionality::<Ix1>().expect("1-D bias");
        let y = x.dot(&w.t()) + b;
        if train {
            self.input = Some(x.clone());
        }
        y
    }

    pub fn backward(&mut self, grad: &Array2<f32>) -> Array2<f32> {
        let x = self.input.take().expect("linear backward without cached forward");
        let dw = grad.t().dot(&x);
        let db: Array1<f32> = grad.sum_axis(Axis(0));
        {
            let mut gw = self.weight.grad.view_mut().into_dimensionality::<Ix2>().expect("2-D");
            gw += &dw;
            let mut gb = self.bias.grad.view_mut().into_dimensionality::<Ix1>().expect("1-D");
            gb += &db;
        }
        let w = self.weight.value.view().into_dimensionality::<Ix2>().expect("2-D weight");
        grad.dot(&w)
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}
