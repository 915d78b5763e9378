use std::sync::{RwLock, RwLockReadGuard};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::functional as F;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Train/eval switch. Only batch normalization behaves differently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Train,
    Eval,
}

/// A learnable tensor. Frozen parameters are leaves without `requires_grad`,
/// so the tape never produces a gradient for them.
#[derive(Debug, Clone)]
pub struct Param<T: Element> {
    value: Tensor<T>,
    trainable: bool,
}

impl<T: Element> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        Param {
            value: value.requires_grad(true),
            trainable: true,
        }
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn data(&self) -> &[T] {
        self.value.data()
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.value.grad_vec()
    }

    pub fn zero_grad(&self) {
        self.value.zero_grad();
    }

    /// Replaces the values, dropping any accumulated gradient.
    pub fn set_data(&mut self, data: Vec<T>) -> Result<()> {
        let t = Tensor::from_vec(data, self.value.shape())?;
        self.value = t.requires_grad(self.trainable);
        Ok(())
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        if trainable != self.trainable {
            self.trainable = trainable;
            self.value = self.value.detach().requires_grad(trainable);
        }
    }
}

/// Non-learnable state such as running statistics. Interior mutability lets
/// a train-mode forward update it through `&self`.
#[derive(Debug)]
pub struct Buffer<T: Element> {
    shape: Vec<usize>,
    data: RwLock<Vec<T>>,
}

impl<T: Element> Clone for Buffer<T> {
    fn clone(&self) -> Self {
        Buffer {
            shape: self.shape.clone(),
            data: RwLock::new(self.read().clone()),
        }
    }
}

impl<T: Element> Buffer<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Buffer {
            shape: shape.to_vec(),
            data: RwLock::new(data),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Vec<T>> {
        self.data.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.read().clone()
    }

    pub fn set(&self, data: Vec<T>) -> Result<()> {
        if data.len() != self.read().len() {
            return Err(Error::shape("buffer", "length differs from buffer shape"));
        }
        *self.data.write().unwrap_or_else(|e| e.into_inner()) = data;
        Ok(())
    }

    fn update(&self, f: impl FnOnce(&mut Vec<T>)) {
        f(&mut self.data.write().unwrap_or_else(|e| e.into_inner()));
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// A layer or composition of layers.
///
/// Parameters and buffers are reported through the `collect_*` visitors with
/// path-like names (`stage3.block2.conv1.weight`). The order is the
/// construction order and is stable across builds.
pub trait Module<T: Element>: Send + Sync {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>>;

    fn collect_params<'a>(&'a self, _prefix: &str, _out: &mut Vec<(String, &'a Param<T>)>) {}

    fn collect_params_mut<'a>(&'a mut self, _prefix: &str, _out: &mut Vec<(String, &'a mut Param<T>)>) {}

    fn collect_buffers<'a>(&'a self, _prefix: &str, _out: &mut Vec<(String, &'a Buffer<T>)>) {}

    fn set_mode(&mut self, _mode: Mode) {}

    fn named_parameters(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        self.collect_params("", &mut out);
        out
    }

    fn named_parameters_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        self.collect_params_mut("", &mut out);
        out
    }

    fn named_buffers(&self) -> Vec<(String, &Buffer<T>)> {
        let mut out = Vec::new();
        self.collect_buffers("", &mut out);
        out
    }

    /// Total number of learnable scalars.
    fn parameter_count(&self) -> usize {
        self.named_parameters().iter().map(|(_, p)| p.data().len()).sum()
    }

    fn zero_grad(&self) {
        for (_, p) in self.named_parameters() {
            p.zero_grad();
        }
    }
}

/// Uniform Kaiming (He) initialization for ReLU networks:
/// `U(-b, b)` with `b = sqrt(6 / fan_in)`.
pub fn kaiming_uniform<T: Element>(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    uniform(shape, bound, rng)
}

fn uniform<T: Element>(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.gen_range(-bound..=bound))).collect();
    Tensor::from_vec(data, shape).expect("length matches shape")
}

#[derive(Debug, Clone)]
pub struct Conv2d<T: Element> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Element> Conv2d<T> {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        let weight = Param::new(kaiming_uniform(&[out_ch, in_ch, kernel, kernel], fan_in, rng));
        let bias = bias.then(|| Param::new(uniform(&[out_ch], 1.0 / (fan_in as f64).sqrt(), rng)));
        Conv2d {
            weight,
            bias,
            stride,
            padding,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }
}

impl<T: Element> Module<T> for Conv2d<T> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        F::conv2d(
            x,
            self.weight.tensor(),
            self.bias.as_ref().map(Param::tensor),
            self.stride,
            self.padding,
        )
    }

    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        out.push((join(prefix, "weight"), &self.weight));
        if let Some(b) = &self.bias {
            out.push((join(prefix, "bias"), b));
        }
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        if let Some(b) = &mut self.bias {
            out.push((join(prefix, "bias"), b));
        }
    }
}

/// Batch normalization over `[N,C,...]` inputs.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T: Element> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub running_mean: Buffer<T>,
    pub running_var: Buffer<T>,
    pub eps: f64,
    /// Weight of the newest batch in the running average.
    pub momentum: f64,
    pub mode: Mode,
}

impl<T: Element> BatchNorm2d<T> {
    pub const DEFAULT_EPS: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.1;

    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            weight: Param::new(Tensor::ones(&[channels])),
            bias: Param::new(Tensor::zeros(&[channels])),
            running_mean: Buffer::new(&[channels], vec![T::zero(); channels]),
            running_var: Buffer::new(&[channels], vec![T::one(); channels]),
            eps: Self::DEFAULT_EPS,
            momentum: Self::DEFAULT_MOMENTUM,
            mode: Mode::Train,
        }
    }

    pub fn channels(&self) -> usize {
        self.weight.data().len()
    }
}

impl<T: Element> Module<T> for BatchNorm2d<T> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self.mode {
            Mode::Eval => F::batch_norm_eval(
                x,
                self.weight.tensor(),
                self.bias.tensor(),
                &self.running_mean.read(),
                &self.running_var.read(),
                self.eps,
            ),
            Mode::Train => {
                let (y, stats) = F::batch_norm_train(x, self.weight.tensor(), self.bias.tensor(), self.eps)?;
                let m = T::from_f64(self.momentum);
                let keep = T::one() - m;
                // running variance tracks the unbiased estimate
                let correction = if stats.count > 1 {
                    T::from_f64(stats.count as f64 / (stats.count - 1) as f64)
                } else {
                    T::one()
                };
                self.running_mean.update(|rm| {
                    rm.iter_mut().zip(&stats.mean).for_each(|(r, &b)| *r = keep * *r + m * b)
                });
                self.running_var.update(|rv| {
                    rv.iter_mut()
                        .zip(&stats.var)
                        .for_each(|(r, &b)| *r = keep * *r + m * b * correction)
                });
                Ok(y)
            }
        }
    }

    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }

    fn collect_buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Buffer<T>)>) {
        out.push((join(prefix, "running_mean"), &self.running_mean));
        out.push((join(prefix, "running_var"), &self.running_var));
    }

    fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Relu;

impl<T: Element> Module<T> for Relu {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.relu()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Element> Module<T> for MaxPool2d {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        F::max_pool2d(x, self.kernel, self.stride, self.padding)
    }
}

/// Global average pooling to `[N,C,1,1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct AdaptiveAvgPool2d;

impl<T: Element> Module<T> for AdaptiveAvgPool2d {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        F::adaptive_avg_pool2d(x)
    }
}

#[derive(Debug, Clone)]
pub struct Linear<T: Element> {
    /// `[out, in]`
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Element> Linear<T> {
    pub fn new(in_features: usize, out_features: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = Param::new(kaiming_uniform(&[out_features, in_features], in_features, rng));
        let bias = Param::new(uniform(&[out_features], 1.0 / (in_features as f64).sqrt(), rng));
        Linear { weight, bias }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }
}

impl<T: Element> Module<T> for Linear<T> {
    /// Accepts `[N, in]`, or any `[N, ...]` whose trailing extents multiply to `in`.
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = *x.shape().first().ok_or_else(|| Error::shape("linear", "scalar input"))?;
        let flat = if x.ndim() == 2 {
            x.clone()
        } else {
            x.reshape(&[n, x.numel().checked_div(n).unwrap_or(0)])?
        };
        if flat.shape()[1] != self.in_features() {
            return Err(Error::shape(
                "linear",
                format!("expected {} input features, got {}", self.in_features(), flat.shape()[1]),
            ));
        }
        F::linear(&flat, self.weight.tensor(), Some(self.bias.tensor()))
    }

    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}

/// Row-wise softmax over `[N,C]`. Used as an inference head only; training
/// goes through [`F::cross_entropy`] on raw logits.
#[derive(Debug, Clone, Copy, Default)]
pub struct Softmax;

impl<T: Element> Module<T> for Softmax {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        F::softmax(x)
    }
}

/// Named children applied in order.
#[derive(Default)]
pub struct Sequential<T: Element> {
    layers: Vec<(String, Box<dyn Module<T>>)>,
}

impl<T: Element> Sequential<T> {
    pub fn new() -> Self {
        Sequential { layers: Vec::new() }
    }

    pub fn push(mut self, name: &str, layer: impl Module<T> + 'static) -> Self {
        self.layers.push((name.to_string(), Box::new(layer)));
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

impl<T: Element> Module<T> for Sequential<T> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for (_, layer) in &self.layers {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        for (name, layer) in &self.layers {
            layer.collect_params(&join(prefix, name), out);
        }
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        for (name, layer) in &mut self.layers {
            layer.collect_params_mut(&join(prefix, name), out);
        }
    }

    fn collect_buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Buffer<T>)>) {
        for (name, layer) in &self.layers {
            layer.collect_buffers(&join(prefix, name), out);
        }
    }

    fn set_mode(&mut self, mode: Mode) {
        for (_, layer) in &mut self.layers {
            layer.set_mode(mode);
        }
    }
}
