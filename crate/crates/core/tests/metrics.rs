mod common;

use rand::seq::SliceRandom;
use rand::Rng;
use ucdmt::metrics::*;

const SIDE: usize = 16;

fn pair(rng: &mut rand_chacha::ChaCha8Rng) -> (Vec<f32>, Vec<f32>) {
    let a = common::random_image(rng, SIDE * SIDE);
    // Correlated partner so SSIM covers more than the near-zero regime.
    let b = a.iter().map(|v| (0.6 * v + rng.random_range(-0.4f32..0.4)).clamp(-1.0, 1.0)).collect();
    (a, b)
}

#[test]
fn metrics_agree_with_oracles() {
    let mut rng = common::rng(3);
    for _ in 0..100 {
        let (a, b) = pair(&mut rng);
        let (ua, ub) = (to_unit_range(&a), to_unit_range(&b));
        assert!((metric_l1(&a, &b, L1Scale::Byte).unwrap() - common::oracle_l1_byte(&a, &b)).abs() <= 1e-6);
        assert!((metric_psnr(&ua, &ub).unwrap() - common::oracle_psnr(&ua, &ub)).abs() <= 1e-6);
        assert!((metric_ssim(&ua, &ub, SIDE, SIDE).unwrap() - common::oracle_ssim(&ua, &ub, SIDE, SIDE)).abs() <= 1e-6);
    }
}

#[test]
fn inception_score_agrees_with_oracle() {
    let mut rng = common::rng(5);
    for _ in 0..100 {
        let n = rng.random_range(2..40);
        let probs: Vec<Vec<f64>> = (0..n).map(|_| common::random_distribution(&mut rng, 4)).collect();
        let (mean, sd) = inception_score_from_probabilities(&probs, 1).unwrap();
        assert!((mean - common::oracle_inception_score(&probs)).abs() <= 1e-6);
        assert_eq!(sd, 0.0);
    }
}

#[test]
fn inception_score_splits_average_chunks() {
    let mut rng = common::rng(6);
    let probs: Vec<Vec<f64>> = (0..30).map(|_| common::random_distribution(&mut rng, 4)).collect();
    let parts: Vec<f64> = probs.chunks(10).map(common::oracle_inception_score).collect();
    let mean = parts.iter().sum::<f64>() / 3.0;
    let sd = (parts.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
    let (m, s) = inception_score_from_probabilities(&probs, 3).unwrap();
    assert!((m - mean).abs() < 1e-12 && (s - sd).abs() < 1e-12);
}

#[test]
fn pixelwise_metrics_ignore_pixel_order() {
    let mut rng = common::rng(8);
    let (a, b) = pair(&mut rng);
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.shuffle(&mut rng);
    let pa: Vec<f32> = order.iter().map(|&i| a[i]).collect();
    let pb: Vec<f32> = order.iter().map(|&i| b[i]).collect();
    let l1 = metric_l1(&a, &b, L1Scale::Byte).unwrap();
    assert!((l1 - metric_l1(&pa, &pb, L1Scale::Byte).unwrap()).abs() < 1e-9);
    let psnr = metric_psnr(&to_unit_range(&a), &to_unit_range(&b)).unwrap();
    assert!((psnr - metric_psnr(&to_unit_range(&pa), &to_unit_range(&pb)).unwrap()).abs() < 1e-9);
}

#[test]
fn byte_scale_is_unit_scale_times_255() {
    let mut rng = common::rng(9);
    let (a, b) = pair(&mut rng);
    let unit = metric_l1(&a, &b, L1Scale::Unit).unwrap();
    assert!((metric_l1(&a, &b, L1Scale::Byte).unwrap() - 255.0 * unit).abs() < 1e-9);
}

#[test]
fn ssim_is_symmetric_and_bounded() {
    let mut rng = common::rng(10);
    for _ in 0..10 {
        let (a, b) = pair(&mut rng);
        let (ua, ub) = (to_unit_range(&a), to_unit_range(&b));
        let s = metric_ssim(&ua, &ub, SIDE, SIDE).unwrap();
        assert!((s - metric_ssim(&ub, &ua, SIDE, SIDE).unwrap()).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&s));
    }
}

#[test]
fn psnr_is_capped_for_identical_images() {
    let a = vec![0.25; 64];
    assert_eq!(metric_psnr(&a, &a).unwrap(), 100.0);
}
