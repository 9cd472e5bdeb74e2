use ndarray::{Array1, Array2, Array4, ArrayD, Axis, Ix1, Ix2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Layer, Param};

/// Stride-1 "same" convolution with an odd square kernel, computed as
/// im2col followed by a single matrix product over the whole batch.
pub struct Conv2d {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    weight: Param,
    bias: Param,
    cache: Option<(Array2<f32>, [usize; 4])>,
}

impl Conv2d {
    /// He-normal initialisation scaled by `gain`.
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        gain: f32,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(kernel % 2 == 1, "kernel size must be odd");
        let fan_in = in_channels * kernel * kernel;
        let std = gain * (2.0 / fan_in as f32).sqrt();
        let normal = Normal::new(0.0f32, std).expect("finite std");
        let w = ArrayD::from_shape_fn(vec![out_channels, fan_in], |_| normal.sample(rng));
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: Param::new(format!("{name}.weight"), w, true),
            bias: Param::new(format!("{name}.bias"), ArrayD::zeros(vec![out_channels]), false),
            cache: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    fn im2col(&self, x: &Array4<f32>) -> Array2<f32> {
        let (b, c, h, w) = x.dim();
        let k = self.kernel;
        let pad = k / 2;
        let hw = h * w;
        let mut cols = Array2::<f32>::zeros((c * k * k, b * hw));
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let cs = cols.as_slice_mut().expect("fresh array");
        let ncols = b * hw;
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let out = &mut cs[row * ncols..(row + 1) * ncols];
                    for bi in 0..b {
                        let plane = &xs[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
                        for y in 0..h {
                            let sy = y as isize + ky as isize - pad as isize;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                            let dst = &mut out[bi * hw + y * w..bi * hw + (y + 1) * w];
                            let shift = kx as isize - pad as isize;
                            for xi in 0..w {
                                let sx = xi as isize + shift;
                                if sx >= 0 && sx < w as isize {
                                    dst[xi] = src[sx as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &Array2<f32>, dims: [usize; 4]) -> Array4<f32> {
        let [b, c, h, w] = dims;
        let k = self.kernel;
        let pad = k / 2;
        let hw = h * w;
        let ncols = b * hw;
        let mut x = Array4::<f32>::zeros((b, c, h, w));
        let xs = x.as_slice_mut().expect("fresh array");
        let cols = cols.as_standard_layout();
        let cs = cols.as_slice().expect("standard layout");
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src_row = &cs[row * ncols..(row + 1) * ncols];
                    for bi in 0..b {
                        let plane = &mut xs[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
                        for y in 0..h {
                            let sy = y as isize + ky as isize - pad as isize;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let src = &src_row[bi * hw + y * w..bi * hw + (y + 1) * w];
                            let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                            let shift = kx as isize - pad as isize;
                            for xi in 0..w {
                                let sx = xi as isize + shift;
                                if sx >= 0 && sx < w as isize {
                                    dst[sx as usize] += src[xi];
                                }
                            }
                        }
                    }
                }
            }
        }
        x
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: Array4<f32>, train: bool) -> Array4<f32> {
        let (b, c, h, w) = x.dim();
        assert_eq!(c, self.in_channels, "conv input channels");
        let cols = self.im2col(&x);
        let weight = self.weight.value.view().into_dimensionality::<Ix2>().expect("2-D weight");
        let bias = self.bias.value.view().into_dimensionality::<Ix1>().expect("1-D bias");
        let mut y = weight.dot(&cols);
        for (mut row, &bv) in y.axis_iter_mut(Axis(0)).zip(bias.iter()) {
            row += bv;
        }
        if train {
            self.cache = Some((cols, [b, c, h, w]));
        }
        // (O, B·H·W) -> (B, O, H, W)
        let y = y.into_shape_with_order((self.out_channels, b, h, w)).expect("conv output shape");
        y.permuted_axes([1, 0, 2, 3]).as_standard_layout().into_owned()
    }

    fn backward(&mut self, grad: Array4<f32>) -> Array4<f32> {
        let (cols, dims) = self.cache.take().expect("conv backward without cached forward");
        let [b, _, h, w] = dims;
        let g = grad
            .permuted_axes([1, 0, 2, 3])
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((self.out_channels, b * h * w))
            .expect("conv grad shape");
        let dw = g.dot(&cols.t());
        let db: Array1<f32> = g.sum_axis(Axis(1));
        {
            let mut gw = self.weight.grad.view_mut().into_dimensionality::<Ix2>().expect("2-D");
            gw += &dw;
            let mut gb = self.bias.grad.view_mut().into_dimensionality::<Ix1>().expect("1-D");
            gb += &db;
        }
        let weight = self.weight.value.view().into_dimensionality::<Ix2>().expect("2-D weight");
        let dcols = weight.t().dot(&g);
        self.col2im(&dcols, dims)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}
