use rand::Rng;

use super::{Module, Param, INIT_STD};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

/// Geometry of a square-kernel convolution over one input plane stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn new(channels: usize, height: usize, width: usize, kernel: usize, stride: usize, pad: usize) -> Option<Self> {
        let span_h = height + 2 * pad;
        let span_w = width + 2 * pad;
        if span_h < kernel || span_w < kernel {
            return None;
        }
        Some(Geometry {
            channels,
            height,
            width,
            kernel,
            stride,
            pad,
            out_h: (span_h - kernel) / stride + 1,
            out_w: (span_w - kernel) / stride + 1,
        })
    }

    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds one `(C, H, W)` sample into a `(C*k*k, OH*OW)` patch matrix.
fn im2col(g: &Geometry, input: &[f32], cols: &mut [f32]) {
    let ncols = g.col_cols();
    for c in 0..g.channels {
        let plane = &input[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let out_row = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        out_row.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.width as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters a patch matrix back onto `(C, H, W)`.
fn col2im(g: &Geometry, cols: &[f32], output: &mut [f32]) {
    let ncols = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut output[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let in_row = &src[oy * g.out_w..(oy + 1) * g.out_w];
                    for (ox, &v) in in_row.iter().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Valid output-column range `[lo, hi)` for kernel column `kj` at stride 1.
fn valid_cols(g: &Geometry, kj: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kj);
    let hi = (g.width + g.pad).saturating_sub(kj).min(g.out_w);
    (lo, hi.max(lo))
}

/// Direct stride-1 convolution of one sample, accumulated row by row. For a
/// handful of output channels this beats the patch-matrix route, whose
/// unfolded matrix would be `C*k*k` times the image.
fn direct_forward(g: &Geometry, weight: &[f32], out_channels: usize, input: &[f32], out: &mut [f32]) {
    let k = g.kernel;
    let plane_in = g.height * g.width;
    let plane_out = g.out_h * g.out_w;
    for o in 0..out_channels {
        let dst = &mut out[o * plane_out..(o + 1) * plane_out];
        for c in 0..g.channels {
            let src = &input[c * plane_in..(c + 1) * plane_in];
            for ki in 0..k {
                for kj in 0..k {
                    let w = weight[((o * g.channels + c) * k + ki) * k + kj];
                    let (lo, hi) = valid_cols(g, kj);
                    for oy in 0..g.out_h {
                        let iy = (oy + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.height as isize {
                            continue;
                        }
                        let start = iy as usize * g.width + lo + kj - g.pad;
                        let row_in = &src[start..start + (hi - lo)];
                        let row_out = &mut dst[oy * g.out_w + lo..oy * g.out_w + hi];
                        for (o, &i) in row_out.iter_mut().zip(row_in) {
                            *o += w * i;
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn direct_backward(
    g: &Geometry,
    weight: &[f32],
    weight_grad: Option<&mut [f32]>,
    out_channels: usize,
    input: &[f32],
    dy: &[f32],
    mut dx: Option<&mut [f32]>,
) {
    let k = g.kernel;
    let plane_in = g.height * g.width;
    let plane_out = g.out_h * g.out_w;
    let mut weight_grad = weight_grad;
    for o in 0..out_channels {
        let go = &dy[o * plane_out..(o + 1) * plane_out];
        for c in 0..g.channels {
            for ki in 0..k {
                for kj in 0..k {
                    let widx = ((o * g.channels + c) * k + ki) * k + kj;
                    let w = weight[widx];
                    let (lo, hi) = valid_cols(g, kj);
                    let mut acc = 0.0f32;
                    for oy in 0..g.out_h {
                        let iy = (oy + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.height as isize {
                            continue;
                        }
                        let start = c * plane_in + iy as usize * g.width + lo + kj - g.pad;
                        let grow = &go[oy * g.out_w + lo..oy * g.out_w + hi];
                        if weight_grad.is_some() {
                            acc += dot(grow, &input[start..start + (hi - lo)]);
                        }
                        if let Some(dx) = dx.as_deref_mut() {
                            for (d, &gv) in dx[start..start + (hi - lo)].iter_mut().zip(grow) {
                                *d += w * gv;
                            }
                        }
                    }
                    if let Some(wg) = weight_grad.as_deref_mut() {
                        wg[widx] += acc;
                    }
                }
            }
        }
    }
}

/// Eight-lane dot product (lets the compiler vectorise the reduction).
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    lanes.iter().sum::<f32>() + tail
}

/// Output-channel count at or below which stride-1 convolutions use the
/// direct kernel.
const DIRECT_MAX_OUT: usize = 2;

fn add_bias(out: &mut [f32], bias: &[f32], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn accumulate_bias_grad(grad: &mut [f32], dy: &[f32], plane: usize) {
    for (g, chunk) in grad.iter_mut().zip(dy.chunks(plane)) {
        *g += chunk.iter().sum::<f32>();
    }
}

/// 2-D convolution with a square kernel and symmetric zero padding.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        Conv2d {
            weight: Param::normal(
                format!("{name}.weight"),
                &[out_channels, in_channels, kernel, kernel],
                INIT_STD,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[out_channels]),
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    fn geometry(&self, x: &Tensor) -> Result<Geometry> {
        if x.channels() != self.in_channels {
            return Err(Error::shape(format!(
                "{} expects {} input channels, got {:?}",
                self.weight.name,
                self.in_channels,
                x.shape()
            )));
        }
        Geometry::new(self.in_channels, x.height(), x.width(), self.kernel, self.stride, self.pad)
            .ok_or_else(|| Error::shape(format!("input {:?} too small for {}", x.shape(), self.weight.name)))
    }

    fn use_direct(&self) -> bool {
        self.stride == 1 && self.out_channels <= DIRECT_MAX_OUT
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let g = self.geometry(x)?;
        let (k, p) = (g.col_rows(), g.col_cols());
        let mut out = Tensor::zeros([x.batch(), self.out_channels, g.out_h, g.out_w]);
        if self.use_direct() {
            for n in 0..x.batch() {
                let dst = out.sample_mut(n);
                direct_forward(&g, &self.weight.value, self.out_channels, x.sample(n), dst);
                add_bias(dst, &self.bias.value, p);
            }
            return Ok(out);
        }
        let mut cols = vec![0.0; k * p];
        for n in 0..x.batch() {
            im2col(&g, x.sample(n), &mut cols);
            let dst = out.sample_mut(n);
            gemm(self.out_channels, k, p, &self.weight.value, false, &cols, false, 0.0, dst);
            add_bias(dst, &self.bias.value, p);
        }
        Ok(out)
    }

    /// Back-propagates `dy` given the forward input `x`. Parameter gradients
    /// accumulate when `param_grads` is set; the input gradient is returned
    /// when `input_grad` is set.
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor, param_grads: bool, input_grad: bool) -> Option<Tensor> {
        let g = self.geometry(x).expect("backward called with the forward input");
        let (k, p) = (g.col_rows(), g.col_cols());
        let mut dx = input_grad.then(|| Tensor::zeros(x.shape()));
        if self.use_direct() {
            for n in 0..x.batch() {
                let dyn_ = dy.sample(n);
                let wg = param_grads.then_some(&mut self.weight.grad[..]);
                let dxs = dx.as_mut().map(|d| d.sample_mut(n));
                direct_backward(&g, &self.weight.value, wg, self.out_channels, x.sample(n), dyn_, dxs);
                if param_grads {
                    accumulate_bias_grad(&mut self.bias.grad, dyn_, p);
                }
            }
            return dx;
        }
        let mut cols = vec![0.0; k * p];
        for n in 0..x.batch() {
            let dyn_ = dy.sample(n);
            if param_grads {
                im2col(&g, x.sample(n), &mut cols);
                gemm(self.out_channels, p, k, dyn_, false, &cols, true, 1.0, &mut self.weight.grad);
                accumulate_bias_grad(&mut self.bias.grad, dyn_, p);
            }
            if let Some(dx) = dx.as_mut() {
                gemm(k, self.out_channels, p, &self.weight.value, true, dyn_, false, 0.0, &mut cols);
                col2im(&g, &cols, dx.sample_mut(n));
            }
        }
        dx
    }
}

impl Module for Conv2d {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Transposed 2-D convolution (the adjoint of [`Conv2d`] in its input),
/// weights laid out `(in, out, k, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTranspose2d {
    pub weight: Param,
    pub bias: Param,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        ConvTranspose2d {
            weight: Param::normal(
                format!("{name}.weight"),
                &[in_channels, out_channels, kernel, kernel],
                INIT_STD,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[out_channels]),
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
        }
    }

    /// Geometry of the equivalent forward convolution, whose input is this
    /// layer's output.
    fn geometry(&self, x: &Tensor) -> Result<Geometry> {
        if x.channels() != self.in_channels {
            return Err(Error::shape(format!(
                "{} expects {} input channels, got {:?}",
                self.weight.name,
                self.in_channels,
                x.shape()
            )));
        }
        let out_h = (x.height() - 1) * self.stride + self.kernel;
        let out_w = (x.width() - 1) * self.stride + self.kernel;
        if out_h <= 2 * self.pad || out_w <= 2 * self.pad {
            return Err(Error::shape(format!("input {:?} too small for {}", x.shape(), self.weight.name)));
        }
        let g = Geometry::new(
            self.out_channels,
            out_h - 2 * self.pad,
            out_w - 2 * self.pad,
            self.kernel,
            self.stride,
            self.pad,
        )
        .expect("valid transposed geometry");
        debug_assert_eq!((g.out_h, g.out_w), (x.height(), x.width()));
        Ok(g)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let g = self.geometry(x)?;
        let (k, p) = (g.col_rows(), g.col_cols());
        let mut out = Tensor::zeros([x.batch(), self.out_channels, g.height, g.width]);
        let mut cols = vec![0.0; k * p];
        for n in 0..x.batch() {
            gemm(k, self.in_channels, p, &self.weight.value, true, x.sample(n), false, 0.0, &mut cols);
            let dst = out.sample_mut(n);
            col2im(&g, &cols, dst);
            add_bias(dst, &self.bias.value, g.height * g.width);
        }
        Ok(out)
    }

    pub fn backward(&mut self, x: &Tensor, dy: &Tensor, param_grads: bool, input_grad: bool) -> Option<Tensor> {
        let g = self.geometry(x).expect("backward called with the forward input");
        let (k, p) = (g.col_rows(), g.col_cols());
        let mut cols = vec![0.0; k * p];
        let mut dx = input_grad.then(|| Tensor::zeros(x.shape()));
        for n in 0..x.batch() {
            let dyn_ = dy.sample(n);
            im2col(&g, dyn_, &mut cols);
            if param_grads {
                gemm(self.in_channels, p, k, x.sample(n), false, &cols, true, 1.0, &mut self.weight.grad);
                accumulate_bias_grad(&mut self.bias.grad, dyn_, g.height * g.width);
            }
            if let Some(dx) = dx.as_mut() {
                gemm(self.in_channels, k, p, &self.weight.value, false, &cols, false, 0.0, dx.sample_mut(n));
            }
        }
        dx
    }
}

impl Module for ConvTranspose2d {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}
