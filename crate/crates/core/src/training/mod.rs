//! Alternating adversarial optimisation, run loop, logging and resume.
//!
//! Each batch gets one discriminator update followed by one generator
//! update. The generator graph is the cycle `x -> x̃_y -> x̃_x` through a
//! single encoder/decoder pair, with gradients flowing end to end.

mod checkpoint;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{checkpoint_hash, load_bundle, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};

use crate::data::sampler::assemble_batch;
use crate::data::{build_paired_index, Batch, DatasetManifest, EpochPlan, PairedIndex, Split};
use crate::error::{Error, Result};
use crate::losses::{
    adversarial_loss_d, adversarial_loss_g, cycle_reconstruction_loss, discriminator_objective,
    disentanglement_loss, generator_objective, modality_classification_loss, translation_l1, LossBreakdown,
    LossWeights,
};
use crate::modality::{ModalityCode, DEFAULT_MODALITIES};
use crate::models::{
    ConditionalAutoencoder, DecoderTrace, EncoderTrace, LatentFeatureMap, ModelBundle, ModelConfig,
};
use crate::nn::Module;
use crate::optim::Adam;
use crate::tensor::Tensor;

/// Hyperparameters of a training run. Every key is optional in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub lr_gen: f64,
    pub lr_dis: f64,
    pub momentum_beta1: f64,
    pub batch_size: usize,
    pub epochs: u64,
    pub seed: u64,
    /// Steps between metric log lines.
    pub log_every: u64,
    /// Steps between periodic checkpoints; 0 keeps only the final one.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            weights: LossWeights::default(),
            lr_gen: 1e-3,
            lr_dis: 1e-4,
            momentum_beta1: 0.5,
            batch_size: 16,
            epochs: 60,
            seed: 7,
            log_every: 1,
            checkpoint_every: 100,
        }
    }
}

fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.to_string(), message: message.into() }
}

impl TrainConfig {
    pub fn validate(&self, modalities: usize) -> Result<()> {
        self.weights.validate()?;
        for (key, lr) in [("lr_gen", self.lr_gen), ("lr_dis", self.lr_dis)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(config_error(key, format!("learning rate must be > 0, got {lr}")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum_beta1) {
            return Err(config_error("momentum_beta1", format!("must lie in [0, 1), got {}", self.momentum_beta1)));
        }
        if self.batch_size == 0 || !self.batch_size.is_multiple_of(modalities) {
            return Err(config_error(
                "batch_size",
                format!("{} is not a positive multiple of M={modalities}", self.batch_size),
            ));
        }
        if self.log_every == 0 {
            return Err(config_error("log_every", "must be >= 1"));
        }
        Ok(())
    }

    /// True when `other` trains identically up to run length and I/O cadence.
    fn same_optimisation(&self, other: &TrainConfig) -> bool {
        self.weights == other.weights
            && self.lr_gen == other.lr_gen
            && self.lr_dis == other.lr_dis
            && self.momentum_beta1 == other.momentum_beta1
            && self.batch_size == other.batch_size
            && self.seed == other.seed
    }
}

/// Parses a JSON config. Missing keys take their defaults; unknown keys
/// and invalid values are reported with their key path.
pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<TrainConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: TrainConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_error(if path.is_empty() { "." } else { &path }, e.into_inner().to_string())
    })?;
    config.validate(DEFAULT_MODALITIES)?;
    Ok(config)
}

/// Everything needed to continue training bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub bundle: ModelBundle,
    pub opt_gen: Adam,
    pub opt_dis: Adam,
    /// Completed batches.
    pub step: u64,
    pub epoch: u64,
    /// Position inside the current epoch's plan. Together with the seed
    /// and epoch this is the whole sampling state.
    pub batch_in_epoch: usize,
}

impl TrainState {
    /// Fresh parameters drawn from the seed and zeroed optimiser moments.
    pub fn new(config: TrainConfig, model: ModelConfig) -> Result<Self> {
        config.validate(model.modalities)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut bundle = ModelBundle::new(model, &mut rng)?;
        bundle.train_mode = true;
        let opt_gen = Adam::new(config.lr_gen, config.momentum_beta1, &bundle.generator_params());
        let opt_dis = Adam::new(config.lr_dis, config.momentum_beta1, &bundle.discriminator.params());
        Ok(TrainState { config, bundle, opt_gen, opt_dis, step: 0, epoch: 0, batch_in_epoch: 0 })
    }
}

/// Outputs of one cycle through the autoencoder.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleOutputs {
    pub translated: Tensor,
    pub reconstructed: Tensor,
    pub z_real: LatentFeatureMap,
    pub z_fake: LatentFeatureMap,
}

/// `z_real = Enc(x)`, `x̃_y = Dec(z_real, m_y)`, `z_fake = Enc(x̃_y)`,
/// `x̃_x = Dec(z_fake, m_x)`, all with the one autoencoder `ae`.
pub fn forward_cycle<A: ConditionalAutoencoder + ?Sized>(
    ae: &A,
    x: &Tensor,
    m_x: &[ModalityCode],
    m_y: &[ModalityCode],
) -> Result<CycleOutputs> {
    let z_real = ae.encode(x)?;
    let translated = ae.decode(&z_real, m_y)?;
    let z_fake = ae.encode(&translated)?;
    let reconstructed = ae.decode(&z_fake, m_x)?;
    Ok(CycleOutputs { translated, reconstructed, z_real, z_fake })
}

struct CycleTrace {
    z_real: LatentFeatureMap,
    enc_real: EncoderTrace,
    translated: Tensor,
    dec_translate: DecoderTrace,
    z_fake: LatentFeatureMap,
    enc_fake: EncoderTrace,
    reconstructed: Tensor,
    dec_reconstruct: DecoderTrace,
}

fn traced_cycle(bundle: &ModelBundle, batch: &Batch) -> Result<CycleTrace> {
    let (z_real, enc_real) = bundle.encoder.forward(&batch.x)?;
    let (translated, dec_translate) = bundle.decoder.forward(&z_real, &batch.target_codes)?;
    let (z_fake, enc_fake) = bundle.encoder.forward(&translated)?;
    let (reconstructed, dec_reconstruct) = bundle.decoder.forward(&z_fake, &batch.source_codes)?;
    Ok(CycleTrace { z_real, enc_real, translated, dec_translate, z_fake, enc_fake, reconstructed, dec_reconstruct })
}

/// Discriminator-side losses of one update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorLosses {
    pub adv: f64,
    pub mc: f64,
    pub total: f64,
}

/// Generator-side losses; `mc` sums the fake and the (constant) real term.
pub type GeneratorLosses = LossBreakdown;

fn finite_or_abort(step: u64, what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { step, detail: format!("{what}: {values:?}") })
    }
}

fn tensor_like(reference: &Tensor, data: Vec<f32>) -> Tensor {
    Tensor::from_vec(reference.shape(), data).expect("gradient matches its forward shape")
}

fn scaled(grad: &[f32], w: f64) -> Vec<f32> {
    let w = w as f32;
    grad.iter().map(|g| g * w).collect()
}

/// Updates the discriminator against the detached translations `fake`.
fn discriminator_update(state: &mut TrainState, batch: &Batch, fake: &Tensor) -> Result<DiscriminatorLosses> {
    let w = state.config.weights.clone();
    let dis = &mut state.bundle.discriminator;
    dis.zero_grad();
    let (real_out, real_trace) = dis.forward(&batch.x_target)?;
    let (source_out, source_trace) = dis.forward(&batch.x)?;
    let (fake_out, fake_trace) = dis.forward(fake)?;

    let adv = adversarial_loss_d(real_out.adv_map.data(), fake_out.adv_map.data())?;
    let mc_real = modality_classification_loss(&source_out.modality_logits, &batch.source_codes)?;
    let mc_fake = if w.dmc_on_fakes {
        Some(modality_classification_loss(&fake_out.modality_logits, &batch.target_codes)?)
    } else {
        None
    };
    let mc = mc_real.value as f64 + mc_fake.as_ref().map_or(0.0, |l| l.value as f64);
    let losses = DiscriminatorLosses { adv: adv.value as f64, mc, total: discriminator_objective(adv.value as f64, mc, &w) };
    finite_or_abort(state.step, "discriminator losses (adv, mc, total)", &[losses.adv, losses.mc, losses.total])?;

    let d_real = tensor_like(&real_out.adv_map, adv.grad_real);
    dis.backward(&real_trace, Some(&d_real), None, true, false);
    dis.backward(&source_trace, None, Some(&scaled(&mc_real.grad, w.lambda2)), true, false);
    let d_fake = tensor_like(&fake_out.adv_map, adv.grad_fake);
    let d_fake_logits = mc_fake.map(|l| scaled(&l.grad, w.lambda2));
    dis.backward(&fake_trace, Some(&d_fake), d_fake_logits.as_deref(), true, false);
    state.opt_dis.step(&mut dis.params_mut())?;
    Ok(losses)
}

/// Updates the encoder and decoder through the full cycle graph; the
/// discriminator is evaluated but left untouched.
fn generator_update(state: &mut TrainState, batch: &Batch, trace: CycleTrace) -> Result<GeneratorLosses> {
    let w = state.config.weights.clone();
    let bundle = &mut state.bundle;
    bundle.encoder.zero_grad();
    bundle.decoder.zero_grad();
    let (fake_out, fake_trace) = bundle.discriminator.forward(&trace.translated)?;
    let (source_out, _) = bundle.discriminator.forward(&batch.x)?;

    let l1 = translation_l1(trace.translated.data(), batch.x_target.data())?;
    let cycle = cycle_reconstruction_loss(trace.reconstructed.data(), batch.x.data())?;
    let adv = adversarial_loss_g(fake_out.adv_map.data(), w.gan_mode)?;
    let mc_fake = modality_classification_loss(&fake_out.modality_logits, &batch.target_codes)?;
    let mc_real = modality_classification_loss(&source_out.modality_logits, &batch.source_codes)?;
    let disen = disentanglement_loss(trace.z_fake.values.data(), trace.z_real.values.data())?;
    let losses = generator_objective(
        LossBreakdown {
            l1_translation: l1.value as f64,
            l1_cycle: cycle.value as f64,
            adv: adv.value as f64,
            mc: mc_fake.value as f64 + mc_real.value as f64,
            disen: disen.value as f64,
            total: 0.0,
        },
        &w,
    );
    finite_or_abort(
        state.step,
        "generator losses (l1, cycle, adv, mc, disen, total)",
        &[losses.l1_translation, losses.l1_cycle, losses.adv, losses.mc, losses.disen, losses.total],
    )?;

    // Second pass: x̃_x = Dec(Enc(x̃_y), m_x).
    let d_recon = tensor_like(&trace.reconstructed, scaled(&cycle.grad, w.alpha));
    let dz_fake = bundle.decoder.backward(&trace.dec_reconstruct, &d_recon, true);
    let mut d_translated = bundle.encoder.backward(&trace.enc_fake, &dz_fake, true, true).expect("input grad");
    // The disentanglement term is minimised over Enc alone: x̃_y enters it
    // as a given image, so its gradient stops at the encoder input.
    let wd = w.effective_disen();
    let d_disen = scaled(&disen.grad, wd);
    if wd != 0.0 {
        bundle.encoder.backward(&trace.enc_fake, &tensor_like(&dz_fake, d_disen.clone()), true, false);
    }

    // First pass: x̃_y = Dec(Enc(x), m_y), fed by L1, the adversarial and
    // classifier heads, and everything downstream.
    d_translated.add_assign(&tensor_like(&trace.translated, l1.grad));
    let d_dis_input = bundle
        .discriminator
        .backward(
            &fake_trace,
            Some(&tensor_like(&fake_out.adv_map, scaled(&adv.grad, w.beta))),
            Some(&scaled(&mc_fake.grad, w.lambda1)),
            false,
            true,
        )
        .expect("input grad");
    d_translated.add_assign(&d_dis_input);
    let mut dz_real = bundle.decoder.backward(&trace.dec_translate, &d_translated, true);
    dz_real.add_assign(&tensor_like(&dz_real, d_disen.iter().map(|g| -g).collect()));
    bundle.encoder.backward(&trace.enc_real, &dz_real, true, false);
    state.opt_gen.step(&mut bundle.generator_params_mut())?;
    Ok(losses)
}

/// One discriminator update on `batch`. Translations are recomputed and
/// detached, so the generator receives no gradient.
pub fn train_discriminator_step(state: &mut TrainState, batch: &Batch) -> Result<DiscriminatorLosses> {
    let z = state.bundle.encode(&batch.x)?;
    let fake = state.bundle.decode(&z, &batch.target_codes)?;
    discriminator_update(state, batch, &fake)
}

/// One generator update on `batch`; completes the batch and advances `step`.
pub fn train_generator_step(state: &mut TrainState, batch: &Batch) -> Result<GeneratorLosses> {
    let trace = traced_cycle(&state.bundle, batch)?;
    let losses = generator_update(state, batch, trace)?;
    state.step += 1;
    Ok(losses)
}

/// Losses of one alternating step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub generator: GeneratorLosses,
    pub discriminator: DiscriminatorLosses,
}

/// A discriminator update then a generator update on the same batch.
///
/// Bit-identical to [`train_discriminator_step`] followed by
/// [`train_generator_step`]: the discriminator update does not touch the
/// generator, so its translations are computed once and reused.
pub fn train_step(state: &mut TrainState, batch: &Batch) -> Result<StepLosses> {
    let trace = traced_cycle(&state.bundle, batch)?;
    let discriminator = discriminator_update(state, batch, &trace.translated)?;
    let generator = generator_update(state, batch, trace)?;
    state.step += 1;
    Ok(StepLosses { generator, discriminator })
}

/// One line of the metrics log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub l1: f64,
    pub cycle: f64,
    pub adv_g: f64,
    pub adv_d: f64,
    pub mc_g: f64,
    pub mc_d: f64,
    pub disen: f64,
    pub total_g: f64,
    pub total_d: f64,
}

impl LogRecord {
    pub fn new(step: u64, losses: &StepLosses) -> Self {
        let g = &losses.generator;
        let d = &losses.discriminator;
        LogRecord {
            step,
            l1: g.l1_translation,
            cycle: g.l1_cycle,
            adv_g: g.adv,
            adv_d: d.adv,
            mc_g: g.mc,
            mc_d: d.mc,
            disen: g.disen,
            total_g: g.total,
            total_d: d.total,
        }
    }
}

pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const LATEST_CHECKPOINT: &str = "latest.ckpt";
pub const ABORT_CHECKPOINT: &str = "abort.ckpt";
pub const METRICS_LOG: &str = "metrics.jsonl";

/// Where and how far to run.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Run directory for checkpoints and the metrics log.
    pub out_dir: Option<PathBuf>,
    /// Continue from this checkpoint instead of fresh parameters.
    pub resume: Option<PathBuf>,
    /// Stop after this many completed steps (counted from zero, not from
    /// the resume point), leaving a resumable state.
    pub max_steps: Option<u64>,
    /// Print log lines to stderr.
    pub verbose: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<LogRecord>,
    /// Final checkpoint, when a run directory was given.
    pub checkpoint: Option<PathBuf>,
}

/// Steps per epoch for an index of `slices` slices.
pub fn steps_per_epoch(slices: usize, modalities: usize, batch_size: usize) -> Result<usize> {
    Ok(EpochPlan::new(slices, modalities, batch_size, 0, 0)?.steps())
}

/// Trains on the manifest's translator split.
pub fn run_training(config: &TrainConfig, manifest: &DatasetManifest, options: &TrainOptions) -> Result<TrainOutcome> {
    let index = build_paired_index(manifest, Some(Split::TrainTranslator))?;
    run_training_on(config, &index, options)
}

/// Trains on an already built index.
pub fn run_training_on(config: &TrainConfig, index: &PairedIndex, options: &TrainOptions) -> Result<TrainOutcome> {
    if index.is_empty() {
        return Err(Error::EmptySet("training split has no slices".into()));
    }
    config.validate(index.modalities)?;
    let model = ModelConfig { modalities: index.modalities, ..ModelConfig::for_image(index.height, index.width) };
    let mut state = match &options.resume {
        Some(path) => {
            let mut state = load_checkpoint(path)?;
            if !state.config.same_optimisation(config) {
                return Err(Error::InvalidArgument(format!(
                    "{} was trained with a different configuration",
                    path.display()
                )));
            }
            if state.bundle.config != model {
                return Err(Error::shape(format!(
                    "{} holds a model for {:?}, dataset needs {:?}",
                    path.display(),
                    state.bundle.config,
                    model
                )));
            }
            state.config = config.clone();
            state
        }
        None => TrainState::new(config.clone(), model)?,
    };
    if steps_per_epoch(index.len(), index.modalities, config.batch_size)? == 0 {
        return Err(Error::InvalidArgument(format!(
            "{} slices cannot fill a batch of {}",
            index.len(),
            config.batch_size
        )));
    }

    let mut log_file = match &options.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(METRICS_LOG);
            let file = OpenOptions::new()
                .create(true)
                .append(options.resume.is_some())
                .write(true)
                .truncate(options.resume.is_none())
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            Some((file, path))
        }
        None => None,
    };
    let checkpoint_path = |name: &str| options.out_dir.as_ref().map(|d| d.join(name));

    let mut log = Vec::new();
    'epochs: while state.epoch < config.epochs {
        let plan = EpochPlan::new(index.len(), index.modalities, config.batch_size, config.seed, state.epoch)?;
        while state.batch_in_epoch < plan.steps() {
            if options.max_steps.is_some_and(|max| state.step >= max) {
                break 'epochs;
            }
            let batch = assemble_batch(index, &plan.batches[state.batch_in_epoch])?;
            let losses = match train_step(&mut state, &batch) {
                Ok(l) => l,
                Err(err) => {
                    if let (Error::NonFiniteLoss { .. }, Some(path)) = (&err, checkpoint_path(ABORT_CHECKPOINT)) {
                        save_checkpoint(&state, &path)?;
                    }
                    return Err(err);
                }
            };
            state.batch_in_epoch += 1;
            if state.batch_in_epoch == plan.steps() {
                state.epoch += 1;
                state.batch_in_epoch = 0;
            }
            if state.step % config.log_every == 0 {
                let record = LogRecord::new(state.step, &losses);
                if let Some((file, path)) = &mut log_file {
                    let line = serde_json::to_string(&record)?;
                    writeln!(file, "{line}").map_err(|e| Error::io(path.as_path(), e))?;
                }
                if options.verbose {
                    eprintln!(
                        "step {:>6} epoch {:>3}  l1 {:.4}  cycle {:.4}  adv_g {:.4}  adv_d {:.4}  total_g {:.4}  total_d {:.4}",
                        record.step, state.epoch, record.l1, record.cycle, record.adv_g, record.adv_d, record.total_g, record.total_d
                    );
                }
                log.push(record);
            }
            if config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0 {
                if let Some(path) = checkpoint_path(LATEST_CHECKPOINT) {
                    save_checkpoint(&state, &path)?;
                }
            }
            if state.batch_in_epoch == 0 {
                continue 'epochs;
            }
        }
    }
    let checkpoint = checkpoint_path(FINAL_CHECKPOINT);
    if let Some(path) = &checkpoint {
        save_checkpoint(&state, path)?;
    }
    state.bundle.train_mode = false;
    Ok(TrainOutcome { state, log, checkpoint })
}
