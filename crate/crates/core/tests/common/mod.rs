//! Reference implementations and fixtures shared by the integration tests.
//! The oracles are written straight from the metric definitions and share
//! no code with the library.

#![allow(dead_code)]

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ucdmt::data::{generate_phantom_dataset, DatasetManifest, PhantomSpec};
use ucdmt::training::TrainConfig;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-1.0f32..=1.0)).collect()
}

/// Mean |a − b| in 0..255 intensity units for images stored in [−1, 1].
pub fn oracle_l1_byte(a: &[f32], b: &[f32]) -> f64 {
    let mut total = 0.0;
    for i in 0..a.len() {
        let pa = (a[i] as f64 + 1.0) * 127.5;
        let pb = (b[i] as f64 + 1.0) * 127.5;
        total += (pa - pb).abs();
    }
    total / a.len() as f64
}

/// PSNR in dB for images in [0, 1].
pub fn oracle_psnr(a: &[f64], b: &[f64]) -> f64 {
    let mut sq = 0.0;
    for i in 0..a.len() {
        sq += (a[i] - b[i]).powi(2);
    }
    let mse = sq / a.len() as f64;
    if mse < 1e-10 {
        100.0
    } else {
        20.0 * (1.0 / mse.sqrt()).log10()
    }
}

/// SSIM with an explicit 2-D Gaussian window evaluated at every valid
/// position; weighted moments are accumulated directly.
pub fn oracle_ssim(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    const N: usize = 11;
    let sigma: f64 = 1.5;
    let mut win = [[0.0f64; N]; N];
    let mut norm = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            norm += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut sum = 0.0;
    let mut count = 0;
    for y in 0..=h - N {
        for x in 0..=w - N {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..N {
                for j in 0..N {
                    let g = win[i][j] / norm;
                    ma += g * a[(y + i) * w + x + j];
                    mb += g * b[(y + i) * w + x + j];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..N {
                for j in 0..N {
                    let g = win[i][j] / norm;
                    let da = a[(y + i) * w + x + j] - ma;
                    let db = b[(y + i) * w + x + j] - mb;
                    va += g * da * da;
                    vb += g * db * db;
                    cov += g * da * db;
                }
            }
            sum += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}

/// Inception score with one split: exp of the mean KL(p(y|x) || p(y)).
pub fn oracle_inception_score(probs: &[Vec<f64>]) -> f64 {
    let classes = probs[0].len();
    let n = probs.len() as f64;
    let marginal: Vec<f64> = (0..classes).map(|k| probs.iter().map(|p| p[k]).sum::<f64>() / n).collect();
    let mut kl = 0.0;
    for p in probs {
        for k in 0..classes {
            if p[k] > 0.0 {
                kl += p[k] * (p[k].ln() - marginal[k].ln());
            }
        }
    }
    (kl / n).exp()
}

pub fn random_distribution(rng: &mut ChaCha8Rng, classes: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..classes).map(|_| rng.random_range(0.01..1.0f64).powi(3)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Central finite difference of `f` at `x` for every coordinate.
pub fn numeric_gradient(x: &[f64], eps: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Largest `|a − n| / max(|a|, |n|)` over the coordinates, with
/// differences below `1e-12` counted as exact.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let diff = (a - n).abs();
            if diff < 1e-12 {
                0.0
            } else {
                diff / a.abs().max(n.abs())
            }
        })
        .fold(0.0, f64::max)
}

/// A small phantom cohort: `subjects` subjects of 16x16x`slices`.
pub fn tiny_phantom(root: &Path, subjects: usize, slices: usize) -> DatasetManifest {
    let spec = PhantomSpec { n_subjects: subjects, image_size: 16, slices_per_subject: slices, ..PhantomSpec::default() };
    generate_phantom_dataset(&spec, root).expect("phantom")
}

/// A training config sized for seconds-long runs on [`tiny_phantom`].
pub fn tiny_config(epochs: u64) -> TrainConfig {
    TrainConfig { batch_size: 8, epochs, log_every: 1, checkpoint_every: 0, ..TrainConfig::default() }
}

/// Max relative error between analytic and central-difference gradients
/// for every loss, on double-precision 4x4 inputs.
pub fn loss_gradient_errors() -> Vec<(String, f64)> {
    use ucdmt::losses::*;
    use ucdmt::ModalityCode;

    const EPS: f64 = 1e-6;
    let mut r = rng(41);
    let mut out = Vec::new();
    let a: Vec<f64> = (0..16).map(|_| r.random_range(-1.0..1.0)).collect();
    // Keep every difference well away from the kink of |.|.
    let b: Vec<f64> = a
        .iter()
        .map(|&v| v + if r.random_bool(0.5) { 1.0 } else { -1.0 } * r.random_range(0.05..0.5))
        .collect();

    type L1Fn = fn(&[f64], &[f64]) -> ucdmt::Result<Loss<f64>>;
    let l1_losses: [(&str, L1Fn); 3] = [
        ("translation_l1", translation_l1),
        ("cycle_reconstruction_loss", cycle_reconstruction_loss),
        ("disentanglement_loss", disentanglement_loss),
    ];
    for (name, f) in l1_losses {
        let analytic = f(&a, &b).unwrap().grad;
        let numeric = numeric_gradient(&a, EPS, |x| f(x, &b).unwrap().value);
        out.push((format!("{name} d/dfirst"), max_relative_error(&analytic, &numeric)));
        let negated: Vec<f64> = analytic.iter().map(|g| -g).collect();
        let numeric = numeric_gradient(&b, EPS, |y| f(&a, y).unwrap().value);
        out.push((format!("{name} d/dsecond"), max_relative_error(&negated, &numeric)));
    }

    let real: Vec<f64> = (0..16).map(|_| r.random_range(-3.0..3.0)).collect();
    let fake: Vec<f64> = (0..16).map(|_| r.random_range(-3.0..3.0)).collect();
    let d = adversarial_loss_d(&real, &fake).unwrap();
    let numeric = numeric_gradient(&real, EPS, |x| adversarial_loss_d(x, &fake).unwrap().value);
    out.push(("adversarial_loss_d d/dreal".into(), max_relative_error(&d.grad_real, &numeric)));
    let numeric = numeric_gradient(&fake, EPS, |x| adversarial_loss_d(&real, x).unwrap().value);
    out.push(("adversarial_loss_d d/dfake".into(), max_relative_error(&d.grad_fake, &numeric)));

    for mode in [GanMode::NonSaturating, GanMode::Minimax] {
        let g = adversarial_loss_g(&fake, mode).unwrap();
        let numeric = numeric_gradient(&fake, EPS, |x| adversarial_loss_g(x, mode).unwrap().value);
        out.push((format!("adversarial_loss_g {mode:?}"), max_relative_error(&g.grad, &numeric)));
    }

    let logits: Vec<f64> = (0..16).map(|_| r.random_range(-2.0..2.0)).collect();
    let targets: Vec<ModalityCode> = [2, 0, 3, 1].iter().map(|&k| ModalityCode::one_hot(k, 4).unwrap()).collect();
    let mc = modality_classification_loss(&logits, &targets).unwrap();
    let numeric = numeric_gradient(&logits, EPS, |x| modality_classification_loss(x, &targets).unwrap().value);
    out.push(("modality_classification_loss".into(), max_relative_error(&mc.grad, &numeric)));
    out
}
