use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::Module;
use crate::tensor::Element;

pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_WEIGHT_DECAY: f64 = 1e-2;

/// One momentum-SGD update on raw slices:
/// `v <- momentum * v + grad + wd * param`, then `param <- param - lr * v`.
pub fn sgd_update<T: Element>(param: &mut [T], grad: &[T], velocity: &mut [T], lr: f64, momentum: f64, weight_decay: f64) {
    let (lr, mu, wd) = (T::from_f64(lr), T::from_f64(momentum), T::from_f64(weight_decay));
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = mu * *v + g + wd * *p;
        *p = *p - lr * *v;
    }
}

/// Stochastic gradient descent with heavy-ball momentum and L2 weight decay.
///
/// Velocity is kept per parameter name and only for trainable parameters;
/// freezing a parameter discards its velocity.
#[derive(Debug, Clone)]
pub struct Sgd<T: Element> {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: BTreeMap<String, Vec<T>>,
}

impl<T: Element> Default for Sgd<T> {
    fn default() -> Self {
        Sgd::new(DEFAULT_MOMENTUM, DEFAULT_WEIGHT_DECAY)
    }
}

impl<T: Element> Sgd<T> {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: BTreeMap::new(),
        }
    }

    pub fn velocity(&self, name: &str) -> Option<&[T]> {
        self.velocity.get(name).map(Vec::as_slice)
    }

    /// Names that currently hold optimizer state.
    pub fn state_names(&self) -> Vec<&str> {
        self.velocity.keys().map(String::as_str).collect()
    }

    /// Updates every trainable parameter of `model` using its accumulated
    /// gradient. `lr_for` gives the learning rate by parameter name.
    ///
    /// Fails before touching anything if a trainable parameter has no
    /// gradient. Gradients are left in place; clearing them is the caller's job.
    pub fn step<M: Module<T> + ?Sized>(&mut self, model: &mut M, lr_for: impl Fn(&str) -> f64) -> Result<()> {
        let mut params = model.named_parameters_mut();
        params.retain(|(_, p)| p.trainable());
        let grads = params
            .iter()
            .map(|(name, p)| {
                p.grad()
                    .ok_or_else(|| Error::contract(format!("trainable parameter `{name}` has no gradient")))
            })
            .collect::<Result<Vec<_>>>()?;

        let live: std::collections::HashSet<&str> = params.iter().map(|(n, _)| n.as_str()).collect();
        self.velocity.retain(|k, _| live.contains(k.as_str()));

        for ((name, p), g) in params.iter_mut().zip(grads) {
            let v = self
                .velocity
                .entry(name.clone())
                .or_insert_with(|| vec![T::zero(); g.len()]);
            let mut data = p.data().to_vec();
            sgd_update(&mut data, &g, v, lr_for(name), self.momentum, self.weight_decay);
            p.set_data(data)?;
        }
        Ok(())
    }
}
