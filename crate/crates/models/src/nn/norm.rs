use ndarray::{Array1, Array4, ArrayD, Axis, Ix1};

use super::{Layer, Param};

const EPS: f32 = 1e-5;
const MOMENTUM: f32 = 0.1;

/// Per-channel batch normalisation. Training uses batch statistics and
/// updates running estimates; inference uses the running estimates.
pub struct BatchNorm2d {
    gamma: Param,
    beta: Param,
    running_mean: Param,
    running_var: Param,
    cache: Option<(Array4<f32>, Array1<f32>)>,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), ArrayD::ones(vec![channels]), false),
            beta: Param::new(format!("{name}.beta"), ArrayD::zeros(vec![channels]), false),
            running_mean: Param::buffer(format!("{name}.running_mean"), ArrayD::zeros(vec![channels])),
            running_var: Param::buffer(format!("{name}.running_var"), ArrayD::ones(vec![channels])),
            cache: None,
        }
    }

    fn vec(p: &Param) -> ndarray::ArrayView1<'_, f32> {
        p.value.view().into_dimensionality::<Ix1>().expect("1-d")
    }
}

fn channel_view(v: &Array1<f32>) -> ndarray::ArrayView4<'_, f32> {
    v.view().insert_axis(Axis(0)).insert_axis(Axis(2)).insert_axis(Axis(3))
}

impl Layer for BatchNorm2d {
    fn forward(&mut self, x: Array4<f32>, train: bool) -> Array4<f32> {
        let (b, c, h, w) = x.dim();
        let n = (b * h * w) as f32;
        let gamma = Self::vec(&self.gamma).to_owned();
        let beta = Self::vec(&self.beta).to_owned();
        let (mean, var) = if train {
            let mut mean = Array1::<f32>::zeros(c);
            let mut var = Array1::<f32>::zeros(c);
            for ch in 0..c {
                let plane = x.index_axis(Axis(1), ch);
                let m = plane.sum() / n;
                let v = plane.fold(0.0f32, |a, &t| a + (t - m) * (t - m)) / n;
                mean[ch] = m;
                var[ch] = v;
            }
            let unbiased = n / (n - 1.0).max(1.0);
            let rm = self.running_mean.value.view_mut().into_dimensionality::<Ix1>().expect("1-d");
            ndarray::Zip::from(rm).and(&mean).for_each(|r, &m| *r = (1.0 - MOMENTUM) * *r + MOMENTUM * m);
            let rv = self.running_var.value.view_mut().into_dimensionality::<Ix1>().expect("1-d");
            ndarray::Zip::from(rv).and(&var).for_each(|r, &v| *r = (1.0 - MOMENTUM) * *r + MOMENTUM * v * unbiased);
            (mean, var)
        } else {
            (Self::vec(&self.running_mean).to_owned(), Self::vec(&self.running_var).to_owned())
        };
        let inv_std = var.mapv(|v| 1.0 / (v + EPS).sqrt());
        let xhat = (x - channel_view(&mean)) * channel_view(&inv_std);
        let y = &xhat * &channel_view(&gamma) + channel_view(&beta);
        if train {
            self.cache = Some((xhat, inv_std));
        }
        y
    }

    fn backward(&mut self, grad: Array4<f32>) -> Array4<f32> {
        let (xhat, inv_std) = self.cache.take().expect("batch norm backward without cached forward");
        let (b, _, h, w) = grad.dim();
        let n = (b * h * w) as f32;
        let sum_axes = |a: Array4<f32>| a.sum_axis(Axis(3)).sum_axis(Axis(2)).sum_axis(Axis(0));
        let dbeta = sum_axes(grad.clone());
        let dgamma = sum_axes(&grad * &xhat);
        self.beta.grad += &dbeta.view().into_dyn();
        self.gamma.grad += &dgamma.view().into_dyn();
        let gamma = Self::vec(&self.gamma).to_owned();
        let scale = &gamma * &inv_std / n;
        let centered = grad * n - channel_view(&dbeta) - &(xhat * channel_view(&dgamma));
        centered * channel_view(&scale)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta, &mut self.running_mean, &mut self.running_var]
    }
}
