mod common;

use ucdmt::losses::*;
use ucdmt::ModalityCode;

#[test]
fn analytic_gradients_match_finite_differences() {
    for (name, err) in common::loss_gradient_errors() {
        assert!(err <= 1e-4, "{name}: relative error {err:e}");
    }
}

#[test]
fn generator_total_is_the_weighted_sum() {
    let parts = LossBreakdown { l1_translation: 0.3, l1_cycle: 0.2, adv: 0.7, mc: 1.1, disen: 0.05, total: 0.0 };
    let w = LossWeights::default();
    let expected = 0.3 + 1.0 * 0.2 + 0.5 * 0.7 + 1.0 * 1.1 + 1.0 * 0.05;
    assert!((generator_objective(parts, &w).total - expected).abs() < 1e-12);

    let off = LossWeights { disen_off: true, ..w };
    let total = generator_objective(parts, &off);
    assert!((total.total - (expected - 0.05)).abs() < 1e-12);
    assert_eq!(total.disen, 0.05);
}

#[test]
fn discriminator_loss_at_chance() {
    let zeros = [0.0f64; 16];
    let d = adversarial_loss_d(&zeros, &zeros).unwrap();
    assert!((d.value - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);

    let codes: Vec<ModalityCode> = (0..4).map(|k| ModalityCode::one_hot(k, 4).unwrap()).collect();
    let mc = modality_classification_loss(&zeros, &codes).unwrap();
    assert!((mc.value - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn extreme_scores_stay_finite() {
    let big = [1e4f32, -1e4, 80.0, -80.0];
    let d = adversarial_loss_d(&big, &big).unwrap();
    assert!(d.value.is_finite() && d.grad_real.iter().chain(&d.grad_fake).all(|g| g.is_finite()));
    for mode in [GanMode::NonSaturating, GanMode::Minimax] {
        let g = adversarial_loss_g(&big, mode).unwrap();
        assert!(g.value.is_finite() && g.grad.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn mismatched_lengths_are_rejected() {
    assert!(translation_l1(&[0.0f64; 4], &[0.0; 3]).is_err());
    assert!(adversarial_loss_d(&[0.0f64; 4], &[]).is_err());
    let code = ModalityCode::one_hot(0, 4).unwrap();
    assert!(modality_classification_loss(&[0.0f64; 3], &[code]).is_err());
}
