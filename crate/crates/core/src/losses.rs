//! Training objectives. Every loss returns its value together with the
//! analytic gradient, and is generic over the float type so the same code
//! runs in `f32` during training and in `f64` under finite-difference checks.
//!
//! All L1-style terms are means over every element (pixels and batch).

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modality::ModalityCode;

/// A scalar loss and its gradient w.r.t. the first (or only) input.
#[derive(Clone, Debug, PartialEq)]
pub struct Loss<T> {
    pub value: T,
    pub grad: Vec<T>,
}

/// Discriminator adversarial loss with gradients for both score maps.
#[derive(Clone, Debug, PartialEq)]
pub struct AdversarialD<T> {
    pub value: T,
    pub grad_real: Vec<T>,
    pub grad_fake: Vec<T>,
}

fn same_len<T>(a: &[T], b: &[T], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("{what}: {} vs {} elements", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::shape(format!("{what}: empty input")));
    }
    Ok(())
}

fn cast<T: Float>(v: f64) -> T {
    T::from(v).expect("representable constant")
}

/// Mean absolute difference; the gradient is w.r.t. `a` (w.r.t. `b` it is
/// the negation). The subgradient at zero difference is 0.
fn mean_abs_diff<T: Float>(a: &[T], b: &[T], what: &str) -> Result<Loss<T>> {
    same_len(a, b, what)?;
    let n = cast::<T>(a.len() as f64);
    let mut sum = T::zero();
    let mut grad = Vec::with_capacity(a.len());
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        sum = sum + d.abs();
        let s = if d > T::zero() {
            T::one()
        } else if d < T::zero() {
            -T::one()
        } else {
            T::zero()
        };
        grad.push(s / n);
    }
    Ok(Loss { value: sum / n, grad })
}

/// `|x̃_y − x_y|` averaged over all pixels.
pub fn translation_l1<T: Float>(translated: &[T], target: &[T]) -> Result<Loss<T>> {
    mean_abs_diff(translated, target, "translation_l1")
}

/// `|x̃_x − x|` where `x̃_x` comes from recalling the same autoencoder
/// conditioned on the input modality.
pub fn cycle_reconstruction_loss<T: Float>(reconstructed: &[T], input: &[T]) -> Result<Loss<T>> {
    mean_abs_diff(reconstructed, input, "cycle_reconstruction_loss")
}

/// `|Enc(x̃_y) − Enc(x)|` averaged over all feature elements. The gradient
/// is w.r.t. `z_fake`; w.r.t. `z_real` it is the negation, and both flow.
pub fn disentanglement_loss<T: Float>(z_fake: &[T], z_real: &[T]) -> Result<Loss<T>> {
    mean_abs_diff(z_fake, z_real, "disentanglement_loss")
}

/// `log(1 + e^x)` without overflow.
fn softplus<T: Float>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `−[mean log σ(real) + mean log(1 − σ(fake))]` on raw realism scores,
/// evaluated as `mean softplus(−real) + mean softplus(fake)`.
pub fn adversarial_loss_d<T: Float>(real_scores: &[T], fake_scores: &[T]) -> Result<AdversarialD<T>> {
    same_len(real_scores, fake_scores, "adversarial_loss_d")?;
    let nr = cast::<T>(real_scores.len() as f64);
    let nf = cast::<T>(fake_scores.len() as f64);
    let mut real_sum = T::zero();
    let mut grad_real = Vec::with_capacity(real_scores.len());
    for &s in real_scores {
        real_sum = real_sum + softplus(-s);
        grad_real.push((sigmoid(s) - T::one()) / nr);
    }
    let mut fake_sum = T::zero();
    let mut grad_fake = Vec::with_capacity(fake_scores.len());
    for &s in fake_scores {
        fake_sum = fake_sum + softplus(s);
        grad_fake.push(sigmoid(s) / nf);
    }
    Ok(AdversarialD { value: real_sum / nr + fake_sum / nf, grad_real, grad_fake })
}

/// Generator adversarial objective form.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GanMode {
    /// `−mean log σ(fake)`.
    #[default]
    NonSaturating,
    /// `+mean log(1 − σ(fake))`, the literal min-max form (non-positive).
    Minimax,
}

impl std::str::FromStr for GanMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonsaturating" => Ok(GanMode::NonSaturating),
            "minimax" => Ok(GanMode::Minimax),
            other => Err(Error::InvalidArgument(format!("unknown gan mode {other:?}"))),
        }
    }
}

pub fn adversarial_loss_g<T: Float>(fake_scores: &[T], mode: GanMode) -> Result<Loss<T>> {
    if fake_scores.is_empty() {
        return Err(Error::shape("adversarial_loss_g: empty input"));
    }
    let n = cast::<T>(fake_scores.len() as f64);
    let mut sum = T::zero();
    let mut grad = Vec::with_capacity(fake_scores.len());
    for &s in fake_scores {
        match mode {
            GanMode::NonSaturating => {
                sum = sum + softplus(-s);
                grad.push((sigmoid(s) - T::one()) / n);
            }
            GanMode::Minimax => {
                sum = sum - softplus(s);
                grad.push(-sigmoid(s) / n);
            }
        }
    }
    Ok(Loss { value: sum / n, grad })
}

/// Batch-mean cross-entropy `−log softmax(logits)[target]`. `logits` is
/// row-major `(batch, M)` with one target code per row.
pub fn modality_classification_loss<T: Float>(logits: &[T], targets: &[ModalityCode]) -> Result<Loss<T>> {
    let batch = targets.len();
    if batch == 0 || !logits.len().is_multiple_of(batch) {
        return Err(Error::shape(format!("{} logits for {batch} targets", logits.len())));
    }
    let m = logits.len() / batch;
    let n = cast::<T>(batch as f64);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (row, target) in logits.chunks(m).zip(targets) {
        let target = ModalityCode::from_bits(target.bits().to_vec())?;
        if target.count() != m {
            return Err(Error::InvalidCode(target.bits().to_vec()));
        }
        let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let sum_exp = row.iter().fold(T::zero(), |a, &l| a + (l - max).exp());
        let log_z = max + sum_exp.ln();
        total = total + (log_z - row[target.index()]);
        for (k, &l) in row.iter().enumerate() {
            let p = (l - log_z).exp();
            let y = if k == target.index() { T::one() } else { T::zero() };
            grad.push((p - y) / n);
        }
    }
    Ok(Loss { value: total / n, grad })
}

/// Weights of the composite objectives plus the switches that select the
/// objective variants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Cycle reconstruction.
    pub alpha: f64,
    /// Generator adversarial term.
    pub beta: f64,
    /// Generator modality classification.
    pub lambda1: f64,
    /// Discriminator modality classification.
    pub lambda2: f64,
    /// Encoder disentanglement.
    pub w_disen: f64,
    /// Ablation: drop the disentanglement term from the generator total.
    pub disen_off: bool,
    pub gan_mode: GanMode,
    /// Train the discriminator's classifier on translated images too.
    pub dmc_on_fakes: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 0.5,
            lambda1: 1.0,
            lambda2: 1.0,
            w_disen: 1.0,
            disen_off: false,
            gan_mode: GanMode::NonSaturating,
            dmc_on_fakes: true,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("w_disen", self.w_disen),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config {
                    path: format!("weights.{name}"),
                    message: format!("weight must be finite and >= 0, got {v}"),
                });
            }
        }
        Ok(())
    }

    /// Weight actually applied to the disentanglement term.
    pub fn effective_disen(&self) -> f64 {
        if self.disen_off {
            0.0
        } else {
            self.w_disen
        }
    }
}

/// Per-term generator losses and their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l1_translation: f64,
    pub l1_cycle: f64,
    pub adv: f64,
    pub mc: f64,
    pub disen: f64,
    pub total: f64,
}

/// `l1 + α·cycle + β·adv + λ1·mc + w_disen·disen`; the disentanglement term
/// is still reported but contributes nothing when `disen_off` is set.
pub fn generator_objective(parts: LossBreakdown, w: &LossWeights) -> LossBreakdown {
    let total = parts.l1_translation
        + w.alpha * parts.l1_cycle
        + w.beta * parts.adv
        + w.lambda1 * parts.mc
        + w.effective_disen() * parts.disen;
    LossBreakdown { total, ..parts }
}

/// `adv_d + λ2·mc`, where `adv_d` already carries the minimisation sign.
pub fn discriminator_objective(adv_d: f64, mc_real_fake: f64, w: &LossWeights) -> f64 {
    adv_d + w.lambda2 * mc_real_fake
}
