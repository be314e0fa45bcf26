use rand::Rng;

use super::{Module, Param, INIT_STD};
use crate::tensor::gemm;

/// Fully connected layer over row-major `(batch, in)` matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    in_features: usize,
    out_features: usize,
}

impl Linear {
    pub fn new<R: Rng>(name: &str, in_features: usize, out_features: usize, rng: &mut R) -> Self {
        Linear {
            weight: Param::normal(format!("{name}.weight"), &[out_features, in_features], INIT_STD, rng),
            bias: Param::zeros(format!("{name}.bias"), &[out_features]),
            in_features,
            out_features,
        }
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn forward(&self, x: &[f32], batch: usize) -> Vec<f32> {
        assert_eq!(x.len(), batch * self.in_features);
        let mut out = vec![0.0; batch * self.out_features];
        for row in out.chunks_mut(self.out_features) {
            row.copy_from_slice(&self.bias.value);
        }
        gemm(batch, self.in_features, self.out_features, x, false, &self.weight.value, true, 1.0, &mut out);
        out
    }

    pub fn backward(&mut self, x: &[f32], dy: &[f32], batch: usize, param_grads: bool) -> Vec<f32> {
        if param_grads {
            gemm(self.out_features, batch, self.in_features, dy, true, x, false, 1.0, &mut self.weight.grad);
            for row in dy.chunks(self.out_features) {
                for (g, d) in self.bias.grad.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
        let mut dx = vec![0.0; batch * self.in_features];
        gemm(batch, self.out_features, self.in_features, dy, false, &self.weight.value, false, 0.0, &mut dx);
        dx
    }
}

impl Module for Linear {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}
