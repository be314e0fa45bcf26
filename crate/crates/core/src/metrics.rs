//! Image quality metrics and dataset evaluation.
//!
//! Model outputs live in `[-1, 1]`. [`metric_l1`] takes such images and
//! rescales them itself; [`metric_ssim`] and [`metric_psnr`] take images
//! already mapped to `[0, 1]` (see [`to_unit_range`]).
//!
//! The inception score here uses a small modality classifier trained on
//! real images of the dataset, not an ImageNet network, so its values are
//! only comparable between runs of this tool.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::sampler::sample_training_batch;
use crate::data::{build_paired_index, DatasetManifest, PairedIndex, Split};
use crate::error::{Error, Result};
use crate::losses::modality_classification_loss;
use crate::modality::{modality_name, ModalityCode};
use crate::models::{ConditionalAutoencoder, Discriminator, ModelBundle, ModelConfig};
use crate::nn::Module;
use crate::optim::Adam;
use crate::tensor::Tensor;
use crate::training::forward_cycle;

pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const PSNR_CAP: f64 = 100.0;
/// Below this MSE, PSNR reports the cap.
pub const PSNR_MIN_MSE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum L1Scale {
    /// Intensities in `[0, 1]`.
    Unit,
    /// Intensities in `[0, 255]`.
    #[default]
    Byte,
}

impl std::str::FromStr for L1Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(L1Scale::Unit),
            "byte" => Ok(L1Scale::Byte),
            other => Err(Error::InvalidArgument(format!("unknown L1 scale {other:?} (unit or byte)"))),
        }
    }
}

/// Maps `[-1, 1]` to `[0, 1]`.
pub fn to_unit_range(image: &[f32]) -> Vec<f64> {
    image.iter().map(|&v| (v as f64 + 1.0) / 2.0).collect()
}

fn same_shape(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("{what}: {a} vs {b} pixels")));
    }
    if a == 0 {
        return Err(Error::shape(format!("{what}: empty image")));
    }
    Ok(())
}

/// Mean absolute difference of two `[-1, 1]` images after rescaling.
pub fn metric_l1(translated: &[f32], truth: &[f32], scale: L1Scale) -> Result<f64> {
    same_shape(translated.len(), truth.len(), "metric_l1")?;
    let range = match scale {
        L1Scale::Unit => 1.0,
        L1Scale::Byte => 255.0,
    };
    let sum: f64 = translated.iter().zip(truth).map(|(&a, &b)| ((a as f64 - b as f64) / 2.0).abs()).sum();
    Ok(range * sum / translated.len() as f64)
}

/// PSNR in dB of two `[0, 1]` images, data range 1.
pub fn metric_psnr(a: &[f64], b: &[f64]) -> Result<f64> {
    same_shape(a.len(), b.len(), "metric_psnr")?;
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse < PSNR_MIN_MSE {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW).map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering with the 1-D kernel `k`.
fn filter_valid(img: &[f64], height: usize, width: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (height - n + 1, width - n + 1);
    let mut rows = vec![0.0; height * ow];
    for y in 0..height {
        let src = &img[y * width..(y + 1) * width];
        for x in 0..ow {
            rows[y * ow + x] = src[x..x + n].iter().zip(k).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| rows[(y + i) * ow + x] * k[i]).sum();
        }
    }
    out
}

/// Single-scale SSIM of two `[0, 1]` images (row-major `height x width`):
/// 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, data range 1,
/// averaged over every position where the window fits.
pub fn metric_ssim(a: &[f64], b: &[f64], height: usize, width: usize) -> Result<f64> {
    same_shape(a.len(), b.len(), "metric_ssim")?;
    if a.len() != height * width {
        return Err(Error::shape(format!("metric_ssim: {} pixels for {height}x{width}", a.len())));
    }
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(Error::ImageTooSmall { height, width, window: SSIM_WINDOW });
    }
    let k = gaussian_window();
    let product = |f: fn(f64, f64) -> f64| -> Vec<f64> { a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect() };
    let mu_a = filter_valid(a, height, width, &k);
    let mu_b = filter_valid(b, height, width, &k);
    let aa = filter_valid(&product(|x, _| x * x), height, width, &k);
    let bb = filter_valid(&product(|_, y| y * y), height, width, &k);
    let ab = filter_valid(&product(|x, y| x * y), height, width, &k);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// A classifier that yields class posteriors `p(y|x)` for a batch of images.
pub trait ProbabilityModel: Sync {
    fn classes(&self) -> usize;
    fn predict(&self, images: &Tensor) -> Result<Vec<Vec<f64>>>;
}

/// Mean and standard deviation over `splits` contiguous chunks of
/// `exp(mean_x KL(p(y|x) || p(y)))`.
pub fn inception_score_from_probabilities(probs: &[Vec<f64>], splits: usize) -> Result<(f64, f64)> {
    if probs.is_empty() {
        return Err(Error::EmptySet("inception score of no images".into()));
    }
    if splits == 0 || splits > probs.len() {
        return Err(Error::InvalidArgument(format!("{splits} splits for {} images", probs.len())));
    }
    let classes = probs[0].len();
    for p in probs {
        let sum: f64 = p.iter().sum();
        if p.len() != classes || p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (sum - 1.0).abs() > 1e-5 {
            return Err(Error::InvalidDistribution(format!("{p:?} (sum {sum})")));
        }
    }
    let n = probs.len();
    let scores: Vec<f64> = (0..splits)
        .map(|s| {
            let part = &probs[s * n / splits..(s + 1) * n / splits];
            let mut marginal = vec![0.0; classes];
            for p in part {
                for (m, v) in marginal.iter_mut().zip(p) {
                    *m += v / part.len() as f64;
                }
            }
            let kl: f64 = part
                .iter()
                .map(|p| p.iter().zip(&marginal).filter(|(v, _)| **v > 0.0).map(|(v, m)| v * (v / m).ln()).sum::<f64>())
                .sum::<f64>()
                / part.len() as f64;
            kl.exp()
        })
        .collect();
    let mean = scores.iter().sum::<f64>() / splits as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / splits as f64;
    Ok((mean, var.sqrt()))
}

pub fn inception_score(images: &Tensor, classifier: &dyn ProbabilityModel, splits: usize) -> Result<(f64, f64)> {
    if images.batch() == 0 {
        return Err(Error::EmptySet("inception score of no images".into()));
    }
    inception_score_from_probabilities(&classifier.predict(images)?, splits)
}

/// Modality classifier with the discriminator's trunk and classification head.
#[derive(Clone, Debug)]
pub struct ModalityClassifier {
    net: Discriminator,
    modalities: usize,
}

pub const CLASSIFIER_STEPS: usize = 150;
const CLASSIFIER_BATCH_PER_MODALITY: usize = 4;
const CLASSIFIER_LR: f64 = 1e-3;

impl ModalityClassifier {
    /// Trains on real images of `index` with cross-entropy, deterministically.
    pub fn train(index: &PairedIndex, steps: usize, seed: u64) -> Result<Self> {
        if index.is_empty() {
            return Err(Error::EmptySet("classifier training set has no slices".into()));
        }
        let cfg = ModelConfig { modalities: index.modalities, ..ModelConfig::for_image(index.height, index.width) };
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Discriminator::with_prefix("iscls", &cfg, &mut rng);
        let mut opt = Adam::new(CLASSIFIER_LR, 0.5, &net.params());
        let batch_size = CLASSIFIER_BATCH_PER_MODALITY * index.modalities;
        for _ in 0..steps {
            let batch = sample_training_batch(index, batch_size, &mut rng)?;
            net.zero_grad();
            let (out, trace) = net.forward(&batch.x)?;
            let loss = modality_classification_loss(&out.modality_logits, &batch.source_codes)?;
            net.backward(&trace, None, Some(&loss.grad), true, false);
            opt.step(&mut net.params_mut())?;
        }
        Ok(ModalityClassifier { net, modalities: index.modalities })
    }
}

impl ProbabilityModel for ModalityClassifier {
    fn classes(&self) -> usize {
        self.modalities
    }

    fn predict(&self, images: &Tensor) -> Result<Vec<Vec<f64>>> {
        let (out, _) = self.net.forward(images)?;
        Ok(out
            .modality_logits
            .chunks(self.modalities)
            .map(|row| {
                let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b as f64));
                let e: Vec<f64> = row.iter().map(|&l| (l as f64 - max).exp()).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|v| v / s).collect()
            })
            .collect())
    }
}

/// Anything that can produce modality `target` from modality `source`
/// images. `truth` is offered for reference translators only.
pub trait DirectionTranslator: Sync {
    fn translate_direction(&self, x: &Tensor, source: usize, target: usize, truth: &Tensor) -> Result<Tensor>;
}

impl DirectionTranslator for ModelBundle {
    fn translate_direction(&self, x: &Tensor, _source: usize, target: usize, _truth: &Tensor) -> Result<Tensor> {
        let code = ModalityCode::one_hot(target, self.config.modalities)?;
        let z = self.encode(x)?;
        self.decode(&z, &vec![code; x.batch()])
    }
}

/// The copy-input baseline `x̃ := x`.
pub struct CopyInput;

impl DirectionTranslator for CopyInput {
    fn translate_direction(&self, x: &Tensor, _: usize, _: usize, _: &Tensor) -> Result<Tensor> {
        Ok(x.clone())
    }
}

/// Returns the ground truth; an upper bound for every metric.
pub struct PerfectTranslator;

impl DirectionTranslator for PerfectTranslator {
    fn translate_direction(&self, _: &Tensor, _: usize, _: usize, truth: &Tensor) -> Result<Tensor> {
        Ok(truth.clone())
    }
}

/// Mean with its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub se: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Stat::default();
        }
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
        } else {
            0.0
        };
        Stat { mean, se }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionMetrics {
    pub l1: Stat,
    pub ssim: Stat,
    pub psnr: Stat,
    /// Mean and spread over splits.
    pub is: Stat,
    pub n: usize,
}

/// Per-direction values and the aggregate over cross-modality directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    /// Keyed `"<source>→<target>"`.
    pub directions: BTreeMap<String, DirectionMetrics>,
    pub aggregate: DirectionMetrics,
    /// Aggregate over self-directions when they were evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_aggregate: Option<DirectionMetrics>,
}

/// Cycle statistics of a model on the evaluated slices (model units,
/// means over cross-modality directions).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    /// `|x̃_y − x_y|`.
    pub translation_l1: f64,
    /// `|Dec(Enc(x̃_y), m_x) − x|`.
    pub cycle_l1: f64,
    /// `|Enc(x̃_y) − Enc(x)|`.
    pub latent_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub include_self: bool,
    pub l1_scale: L1Scale,
    pub is_splits: usize,
    pub classifier_steps: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { include_self: false, l1_scale: L1Scale::Byte, is_splits: 1, classifier_steps: CLASSIFIER_STEPS, seed: 7 }
    }
}

/// Settings echoed into the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalEcho {
    pub split: Split,
    #[serde(flatten)]
    pub options: EvalOptions,
    pub classifier_train_split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub model: DirectionSet,
    pub baseline: DirectionSet,
    pub consistency: Consistency,
    pub n_samples: usize,
    pub checkpoint_hash: Option<String>,
    pub config: EvalEcho,
}

fn direction_name(source: usize, target: usize, m: usize) -> String {
    format!("{}→{}", modality_name(source, m), modality_name(target, m))
}

fn directions(m: usize, include_self: bool) -> Vec<(usize, usize)> {
    (0..m).flat_map(|s| (0..m).map(move |t| (s, t))).filter(|(s, t)| include_self || s != t).collect()
}

fn modality_tensor(index: &PairedIndex, modality: usize) -> Result<Tensor> {
    let images: Vec<&[f32]> = index.slices.iter().map(|s| s.image(modality)).collect();
    Tensor::stack_images(&images, index.height, index.width)
}

struct DirectionResult {
    l1: Vec<f64>,
    ssim: Vec<f64>,
    psnr: Vec<f64>,
    probs: Vec<Vec<f64>>,
}

fn summarise(r: &DirectionResult, splits: usize) -> Result<DirectionMetrics> {
    let (is_mean, is_sd) = inception_score_from_probabilities(&r.probs, splits.min(r.probs.len()))?;
    Ok(DirectionMetrics {
        l1: Stat::of(&r.l1),
        ssim: Stat::of(&r.ssim),
        psnr: Stat::of(&r.psnr),
        is: Stat { mean: is_mean, se: is_sd },
        n: r.l1.len(),
    })
}

fn pooled(results: &[&DirectionResult], splits: usize) -> Result<DirectionMetrics> {
    let merged = DirectionResult {
        l1: results.iter().flat_map(|r| r.l1.iter().copied()).collect(),
        ssim: results.iter().flat_map(|r| r.ssim.iter().copied()).collect(),
        psnr: results.iter().flat_map(|r| r.psnr.iter().copied()).collect(),
        probs: results.iter().flat_map(|r| r.probs.iter().cloned()).collect(),
    };
    summarise(&merged, splits)
}

/// Scores `translator` on every direction over all slices of `index`.
/// Directions are processed in parallel on the current rayon pool and
/// collected in a fixed order, so results do not depend on worker count.
pub fn evaluate_translator(
    translator: &dyn DirectionTranslator,
    index: &PairedIndex,
    classifier: &dyn ProbabilityModel,
    options: &EvalOptions,
) -> Result<DirectionSet> {
    if index.is_empty() {
        return Err(Error::EmptySet("evaluation split has no slices".into()));
    }
    let m = index.modalities;
    let (h, w) = (index.height, index.width);
    let inputs: Vec<Tensor> = (0..m).map(|k| modality_tensor(index, k)).collect::<Result<_>>()?;
    let pairs = directions(m, options.include_self);
    let results: Vec<DirectionResult> = pairs
        .par_iter()
        .map(|&(s, t)| {
            let out = translator.translate_direction(&inputs[s], s, t, &inputs[t])?;
            if out.shape() != inputs[t].shape() {
                return Err(Error::shape(format!("translator returned {:?}", out.shape())));
            }
            let mut r = DirectionResult { l1: vec![], ssim: vec![], psnr: vec![], probs: classifier.predict(&out)? };
            for n in 0..out.batch() {
                let (a, b) = (out.sample(n), inputs[t].sample(n));
                r.l1.push(metric_l1(a, b, options.l1_scale)?);
                let (ua, ub) = (to_unit_range(a), to_unit_range(b));
                r.ssim.push(metric_ssim(&ua, &ub, h, w)?);
                r.psnr.push(metric_psnr(&ua, &ub)?);
            }
            Ok(r)
        })
        .collect::<Result<_>>()?;

    let mut set = DirectionSet { directions: BTreeMap::new(), aggregate: empty_metrics(), self_aggregate: None };
    for (&(s, t), r) in pairs.iter().zip(&results) {
        set.directions.insert(direction_name(s, t, m), summarise(r, options.is_splits)?);
    }
    let cross: Vec<&DirectionResult> = pairs.iter().zip(&results).filter(|((s, t), _)| s != t).map(|(_, r)| r).collect();
    set.aggregate = pooled(&cross, options.is_splits)?;
    if options.include_self {
        let own: Vec<&DirectionResult> = pairs.iter().zip(&results).filter(|((s, t), _)| s == t).map(|(_, r)| r).collect();
        set.self_aggregate = Some(pooled(&own, options.is_splits)?);
    }
    Ok(set)
}

fn empty_metrics() -> DirectionMetrics {
    DirectionMetrics { l1: Stat::default(), ssim: Stat::default(), psnr: Stat::default(), is: Stat::default(), n: 0 }
}

/// Cycle and latent statistics of `ae` over all cross-modality directions.
pub fn consistency<A: ConditionalAutoencoder + Sync + ?Sized>(ae: &A, index: &PairedIndex) -> Result<Consistency> {
    if index.is_empty() {
        return Err(Error::EmptySet("evaluation split has no slices".into()));
    }
    let m = index.modalities;
    let inputs: Vec<Tensor> = (0..m).map(|k| modality_tensor(index, k)).collect::<Result<_>>()?;
    let pairs = directions(m, false);
    let per_direction: Vec<[f64; 3]> = pairs
        .par_iter()
        .map(|&(s, t)| {
            let n = inputs[s].batch();
            let out = forward_cycle(
                ae,
                &inputs[s],
                &vec![ModalityCode::one_hot(s, m)?; n],
                &vec![ModalityCode::one_hot(t, m)?; n],
            )?;
            let mad = |a: &[f32], b: &[f32]| {
                a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).abs()).sum::<f64>() / a.len() as f64
            };
            Ok([
                mad(out.translated.data(), inputs[t].data()),
                mad(out.reconstructed.data(), inputs[s].data()),
                mad(out.z_fake.values.data(), out.z_real.values.data()),
            ])
        })
        .collect::<Result<_>>()?;
    let mean = |k: usize| per_direction.iter().map(|v| v[k]).sum::<f64>() / per_direction.len() as f64;
    Ok(Consistency { translation_l1: mean(0), cycle_l1: mean(1), latent_distance: mean(2) })
}

/// Evaluates `bundle` on `split` of the dataset, alongside the copy-input
/// baseline, and writes the JSON report when `report_path` is given.
///
/// The classifier behind the inception score is trained on the
/// translator-training split (or on the evaluated split when that is
/// empty) from `options.seed`.
pub fn evaluate_dataset(
    bundle: &ModelBundle,
    manifest: &DatasetManifest,
    split: Split,
    options: &EvalOptions,
    checkpoint_hash: Option<&str>,
    report_path: Option<&Path>,
) -> Result<MetricsReport> {
    let index = build_paired_index(manifest, Some(split))?;
    if index.is_empty() {
        return Err(Error::EmptySet(format!("split {split} has no slices")));
    }
    let mut classifier_split = Split::TrainTranslator;
    let mut train_index = build_paired_index(manifest, Some(classifier_split))?;
    if train_index.is_empty() {
        classifier_split = split;
        train_index = index.clone();
    }
    let classifier = ModalityClassifier::train(&train_index, options.classifier_steps, options.seed)?;
    let model = evaluate_translator(bundle, &index, &classifier, options)?;
    let baseline = evaluate_translator(&CopyInput, &index, &classifier, options)?;
    let report = MetricsReport {
        model,
        baseline,
        consistency: consistency(bundle, &index)?,
        n_samples: index.len(),
        checkpoint_hash: checkpoint_hash.map(str::to_string),
        config: EvalEcho { split, options: options.clone(), classifier_train_split: classifier_split },
    };
    if let Some(path) = report_path {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_examples() {
        let a = vec![0.3f32; 16];
        assert_eq!(metric_l1(&a, &a, L1Scale::Byte).unwrap(), 0.0);
        assert_eq!(metric_l1(&[-1.0; 16], &[1.0; 16], L1Scale::Byte).unwrap(), 255.0);
        assert_eq!(metric_l1(&[-1.0; 16], &[1.0; 16], L1Scale::Unit).unwrap(), 1.0);
        assert!(metric_l1(&a, &a[..15], L1Scale::Unit).is_err());
    }

    #[test]
    fn psnr_examples() {
        let a = vec![0.4; 64];
        assert_eq!(metric_psnr(&a, &a).unwrap(), 100.0);
        let b: Vec<f64> = a.iter().map(|v| v + 0.1).collect();
        assert!((metric_psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_identity_and_size_check() {
        let a: Vec<f64> = (0..256).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        assert!((metric_ssim(&a, &a, 16, 16).unwrap() - 1.0).abs() < 1e-9);
        assert!(matches!(metric_ssim(&a[..100], &a[..100], 10, 10), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn inception_score_examples() {
        let uniform = vec![vec![0.25; 4]; 8];
        assert!((inception_score_from_probabilities(&uniform, 1).unwrap().0 - 1.0).abs() < 1e-12);
        let spread: Vec<Vec<f64>> = (0..8).map(|i| (0..4).map(|k| if k == i % 4 { 1.0 } else { 0.0 }).collect()).collect();
        assert!((inception_score_from_probabilities(&spread, 1).unwrap().0 - 4.0).abs() < 1e-12);
        assert!(matches!(inception_score_from_probabilities(&[], 1), Err(Error::EmptySet(_))));
        assert!(matches!(
            inception_score_from_probabilities(&[vec![0.5, 0.4]], 1),
            Err(Error::InvalidDistribution(_))
        ));
    }

    #[test]
    fn stat_standard_error() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.se - (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
    }
}
