//! Minimal layer library with explicit forward/backward passes.
//!
//! Layers never hold activation caches; callers keep whatever the backward
//! pass needs, so one set of parameters can be applied several times in a
//! single graph (the autoencoder is recalled twice per cycle) and the
//! gradients of every application accumulate into the same [`Param`].

pub mod activation;
pub mod conv;
pub mod linear;
pub mod norm;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::tensor::Tensor;

pub use conv::{Conv2d, ConvTranspose2d};
pub use linear::Linear;

/// Standard deviation of the zero-mean normal weight initialisation.
pub const INIT_STD: f32 = 0.02;

/// A named trainable parameter with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
}

impl Param {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Param { name: name.into(), shape: shape.to_vec(), value: vec![0.0; len], grad: vec![0.0; len] }
    }

    pub fn normal<R: Rng>(name: impl Into<String>, shape: &[usize], std: f32, rng: &mut R) -> Self {
        let mut p = Param::zeros(name, shape);
        let dist = Normal::new(0.0f32, std).expect("positive std");
        for v in &mut p.value {
            *v = dist.sample(rng);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Anything that owns trainable parameters, visited in a stable order.
pub trait Module {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// A parameterised spatial layer with an explicit backward pass.
pub trait SpatialLayer {
    fn forward(&self, x: &Tensor) -> Result<Tensor>;

    /// Back-propagates `dy` given the forward input `x`; see
    /// [`Conv2d::backward`].
    fn backward(&mut self, x: &Tensor, dy: &Tensor, param_grads: bool, input_grad: bool) -> Option<Tensor>;
}

impl SpatialLayer for Conv2d {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Conv2d::forward(self, x)
    }
    fn backward(&mut self, x: &Tensor, dy: &Tensor, param_grads: bool, input_grad: bool) -> Option<Tensor> {
        Conv2d::backward(self, x, dy, param_grads, input_grad)
    }
}

impl SpatialLayer for ConvTranspose2d {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ConvTranspose2d::forward(self, x)
    }
    fn backward(&mut self, x: &Tensor, dy: &Tensor, param_grads: bool, input_grad: bool) -> Option<Tensor> {
        ConvTranspose2d::backward(self, x, dy, param_grads, input_grad)
    }
}
