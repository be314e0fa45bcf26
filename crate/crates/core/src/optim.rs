use crate::error::{Error, Result};
use crate::nn::Param;

pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam state for one parameter group. Moments are stored in the same
/// order as the parameters passed to [`Adam::step`].
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub first: Vec<Vec<f32>>,
    pub second: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, params: &[&Param]) -> Self {
        Adam {
            lr,
            beta1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            step: 0,
            first: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    /// Applies one bias-corrected update from the accumulated gradients.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::shape(format!(
                "optimizer tracks {} tensors, got {}",
                self.first.len(),
                params.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let step_size = (self.lr / c1) as f32;
        let c2_sqrt = c2.sqrt() as f32;
        let eps = self.eps as f32;
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            for (((w, &g), m), v) in p.value.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= step_size * *m / ((*v).sqrt() / c2_sqrt + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_each_weight_by_about_lr() {
        let mut p = Param::zeros("w", &[3]);
        p.grad = vec![0.5, -2.0, 1e-3];
        let mut opt = Adam::new(0.1, 0.5, &[&p]);
        opt.step(&mut [&mut p]).unwrap();
        for (w, g) in p.value.iter().zip([0.5f32, -2.0, 1e-3]) {
            assert!((w + 0.1 * g.signum()).abs() < 1e-4, "{w}");
        }
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn mismatched_group_is_rejected() {
        let p = Param::zeros("w", &[3]);
        let mut q = Param::zeros("q", &[3]);
        let mut opt = Adam::new(0.1, 0.5, &[&p, &p]);
        assert!(opt.step(&mut [&mut q]).is_err());
    }
}
