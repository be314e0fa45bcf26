//! Instance normalisation without affine parameters. Statistics are always
//! per sample and per channel, so training and evaluation behave identically.

use crate::tensor::Tensor;

pub const EPS: f32 = 1e-5;

/// Normalised output plus the per-plane inverse standard deviations needed
/// by the backward pass.
pub struct Normalized {
    pub output: Tensor,
    pub inv_std: Vec<f32>,
}

pub fn instance_norm(x: &Tensor) -> Normalized {
    let plane = x.plane_len();
    let mut output = x.clone();
    let mut inv_std = Vec::with_capacity(x.batch() * x.channels());
    for chunk in output.data_mut().chunks_mut(plane) {
        let n = plane as f32;
        let mean = chunk.iter().sum::<f32>() / n;
        let var = chunk.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
        let inv = 1.0 / (var + EPS).sqrt();
        chunk.iter_mut().for_each(|v| *v = (*v - mean) * inv);
        inv_std.push(inv);
    }
    Normalized { output, inv_std }
}

/// `dx = inv_std * (dy - mean(dy) - y * mean(dy * y))` per plane, where `y`
/// is the normalised forward output.
pub fn instance_norm_backward(norm: &Normalized, dy: &Tensor) -> Tensor {
    let plane = dy.plane_len();
    let mut dx = dy.clone();
    for ((g, y), &inv) in dx.data_mut().chunks_mut(plane).zip(norm.output.data().chunks(plane)).zip(&norm.inv_std) {
        let n = plane as f32;
        let mean_g = g.iter().sum::<f32>() / n;
        let mean_gy = g.iter().zip(y).map(|(a, b)| a * b).sum::<f32>() / n;
        for (gv, &yv) in g.iter_mut().zip(y) {
            *gv = inv * (*gv - mean_g - yv * mean_gy);
        }
    }
    dx
}
