use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f32 = 0.2;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Gradient of ReLU given its output.
pub fn relu_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let data = y.data().iter().zip(dy.data()).map(|(&y, &g)| if y > 0.0 { g } else { 0.0 }).collect();
    Tensor::from_vec(y.shape(), data).expect("same shape")
}

pub fn leaky_relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v })
}

/// Gradient of leaky ReLU given its output (the sign is preserved).
pub fn leaky_relu_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let data =
        y.data().iter().zip(dy.data()).map(|(&y, &g)| if y > 0.0 { g } else { LEAKY_SLOPE * g }).collect();
    Tensor::from_vec(y.shape(), data).expect("same shape")
}

pub fn tanh(x: &Tensor) -> Tensor {
    x.map(f32::tanh)
}

/// Gradient of tanh given its output.
pub fn tanh_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let data = y.data().iter().zip(dy.data()).map(|(&y, &g)| g * (1.0 - y * y)).collect();
    Tensor::from_vec(y.shape(), data).expect("same shape")
}
