//! Dense NCHW `f32` tensors and the matrix-multiply primitive the layers
//! are built on.

use crate::error::{Error, Result};

/// A dense 4-D tensor in (batch, channels, height, width) layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor { shape, data: vec![0.0; shape.iter().product()] }
    }

    pub fn full(shape: [usize; 4], value: f32) -> Self {
        Tensor { shape, data: vec![value; shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::shape(format!(
                "{} values cannot fill a tensor of shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Stacks single-channel `h x w` images into an `(n, 1, h, w)` batch.
    pub fn stack_images(images: &[&[f32]], height: usize, width: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(images.len() * height * width);
        for img in images {
            if img.len() != height * width {
                return Err(Error::shape(format!(
                    "image of {} pixels does not match {height}x{width}",
                    img.len()
                )));
            }
            data.extend_from_slice(img);
        }
        Tensor::from_vec([images.len(), 1, height, width], data)
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }
    pub fn batch(&self) -> usize {
        self.shape[0]
    }
    pub fn channels(&self) -> usize {
        self.shape[1]
    }
    pub fn height(&self) -> usize {
        self.shape[2]
    }
    pub fn width(&self) -> usize {
        self.shape[3]
    }
    pub fn numel(&self) -> usize {
        self.data.len()
    }
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }
    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn sample(&self, n: usize) -> &[f32] {
        let len = self.sample_len();
        &self.data[n * len..(n + 1) * len]
    }
    pub fn sample_mut(&mut self, n: usize) -> &mut [f32] {
        let len = self.sample_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    /// Returns `self * scale` as a new tensor.
    pub fn scaled(&self, scale: f32) -> Tensor {
        self.map(|v| v * scale)
    }

    /// Concatenates `extra` after `self` along the channel axis.
    pub fn concat_channels(&self, extra: &Tensor) -> Result<Tensor> {
        let [n, c1, h, w] = self.shape;
        let [n2, c2, h2, w2] = extra.shape;
        if n != n2 || h != h2 || w != w2 {
            return Err(Error::shape(format!(
                "cannot concatenate {:?} with {:?} along channels",
                self.shape, extra.shape
            )));
        }
        let mut out = Tensor::zeros([n, c1 + c2, h, w]);
        let a = c1 * h * w;
        for s in 0..n {
            let dst = out.sample_mut(s);
            dst[..a].copy_from_slice(self.sample(s));
            dst[a..].copy_from_slice(extra.sample(s));
        }
        Ok(out)
    }

    /// Splits off the first `channels` channels, returning `(head, tail)`.
    pub fn split_channels(&self, channels: usize) -> (Tensor, Tensor) {
        let [n, c, h, w] = self.shape;
        assert!(channels <= c);
        let mut head = Tensor::zeros([n, channels, h, w]);
        let mut tail = Tensor::zeros([n, c - channels, h, w]);
        let a = channels * h * w;
        for s in 0..n {
            let src = self.sample(s);
            head.sample_mut(s).copy_from_slice(&src[..a]);
            tail.sample_mut(s).copy_from_slice(&src[a..]);
        }
        (head, tail)
    }

    /// Selects a subset of batch entries, in the given order.
    pub fn select(&self, indices: &[usize]) -> Tensor {
        let [_, c, h, w] = self.shape;
        let mut data = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Tensor { shape: [indices.len(), c, h, w], data }
    }
}

/// `c = beta * c + op(a) * op(b)` for row-major matrices, where `op(a)` is
/// `m x k` and `op(b)` is `k x n`. `trans_a` means `a` is stored as `k x m`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    trans_a: bool,
    b: &[f32],
    trans_b: bool,
    beta: f32,
    c: &mut [f32],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover exactly the strided extents described above.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
