//! The modality-agnostic encoder, the modality-conditioned decoder and the
//! two-headed discriminator.
//!
//! The encoder takes an image and nothing else. Modality information only
//! enters the graph in [`replicate_and_concat`], where the one-hot target
//! code is broadcast over the latent grid and appended as extra channels
//! before decoding.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modality::{ModalityCode, DEFAULT_MODALITIES};
use crate::nn::activation::{leaky_relu, leaky_relu_backward, relu, relu_backward, tanh, tanh_backward};
use crate::nn::norm::{instance_norm, instance_norm_backward, Normalized};
use crate::nn::{Conv2d, ConvTranspose2d, Linear, Module, Param, SpatialLayer};
use crate::tensor::Tensor;

/// Total spatial downsampling of the encoder.
pub const LATENT_SCALE: usize = 4;

/// Architecture hyperparameters. Everything needed to rebuild the networks
/// from a checkpoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub modalities: usize,
    pub image_height: usize,
    pub image_width: usize,
    /// Width of the encoder stem and first decoder upsampling stage.
    pub base_channels: usize,
    /// Channels of the latent feature map `z`.
    pub latent_channels: usize,
    pub residual_blocks: usize,
    /// Width of the first discriminator stage; later stages double it.
    pub dis_base_channels: usize,
}

impl ModelConfig {
    pub fn for_image(image_height: usize, image_width: usize) -> Self {
        ModelConfig {
            modalities: DEFAULT_MODALITIES,
            image_height,
            image_width,
            base_channels: 32,
            latent_channels: 64,
            residual_blocks: 2,
            dis_base_channels: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.modalities < 2 {
            return bad(format!("need at least two modalities, got {}", self.modalities));
        }
        if !self.image_height.is_multiple_of(8) || !self.image_width.is_multiple_of(8) || self.image_height < 16 || self.image_width < 16 {
            return bad(format!(
                "image size {}x{} must be at least 16 and divisible by 8",
                self.image_height, self.image_width
            ));
        }
        if self.base_channels < 2 || self.latent_channels == 0 || self.dis_base_channels == 0 {
            return bad("channel widths must be positive (base >= 2)".into());
        }
        Ok(())
    }

    pub fn latent_shape(&self) -> [usize; 3] {
        [self.latent_channels, self.image_height / LATENT_SCALE, self.image_width / LATENT_SCALE]
    }

    /// Spatial size of the discriminator's realism map.
    pub fn patch_grid(&self) -> [usize; 2] {
        [self.image_height / 8, self.image_width / 8]
    }
}

/// Encoder output: the modality-invariant anatomical representation.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentFeatureMap {
    /// `(batch, C_z, H/4, W/4)`.
    pub values: Tensor,
    pub spatial_scale: usize,
}

/// Realism patch map (raw, pre-sigmoid) and modality logits.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorOutput {
    /// `(batch, 1, H/8, W/8)`.
    pub adv_map: Tensor,
    /// Row-major `(batch, M)`.
    pub modality_logits: Vec<f32>,
}

impl DiscriminatorOutput {
    pub fn logits(&self, n: usize) -> &[f32] {
        let m = self.modality_logits.len() / self.adv_map.batch();
        &self.modality_logits[n * m..(n + 1) * m]
    }
}

/// Conv → instance norm → ReLU, with the activations the backward pass needs.
pub struct BlockTrace {
    input: Tensor,
    norm: Normalized,
    output: Tensor,
}

fn block_forward<L: SpatialLayer>(layer: &L, x: &Tensor) -> Result<BlockTrace> {
    let norm = instance_norm(&layer.forward(x)?);
    let output = relu(&norm.output);
    Ok(BlockTrace { input: x.clone(), norm, output })
}

fn block_backward<L: SpatialLayer>(
    layer: &mut L,
    trace: &BlockTrace,
    dy: &Tensor,
    param_grads: bool,
    input_grad: bool,
) -> Option<Tensor> {
    let d = instance_norm_backward(&trace.norm, &relu_backward(&trace.output, dy));
    layer.backward(&trace.input, &d, param_grads, input_grad)
}

/// `y = x + IN(conv2(relu(IN(conv1(x)))))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock {
    conv1: Conv2d,
    conv2: Conv2d,
}

pub struct ResidualTrace {
    inner: BlockTrace,
    hidden: Tensor,
    norm2: Normalized,
}

impl ResidualBlock {
    fn new<R: Rng>(name: &str, channels: usize, rng: &mut R) -> Self {
        ResidualBlock {
            conv1: Conv2d::new(&format!("{name}.conv1"), channels, channels, 3, 1, 1, rng),
            conv2: Conv2d::new(&format!("{name}.conv2"), channels, channels, 3, 1, 1, rng),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<(Tensor, ResidualTrace)> {
        let inner = block_forward(&self.conv1, x)?;
        let norm2 = instance_norm(&self.conv2.forward(&inner.output)?);
        let y = x.add(&norm2.output);
        let hidden = inner.output.clone();
        Ok((y, ResidualTrace { inner, hidden, norm2 }))
    }

    fn backward(&mut self, trace: &ResidualTrace, dy: &Tensor, param_grads: bool) -> Tensor {
        let dh2 = instance_norm_backward(&trace.norm2, dy);
        let da = self.conv2.backward(&trace.hidden, &dh2, param_grads, true).expect("input grad");
        let mut dx = block_backward(&mut self.conv1, &trace.inner, &da, param_grads, true).expect("input grad");
        dx.add_assign(dy);
        dx
    }
}

impl Module for ResidualBlock {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.conv1.params();
        v.extend(self.conv2.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.conv1.params_mut();
        v.extend(self.conv2.params_mut());
        v
    }
}

/// Modality-agnostic encoder `Enc: x -> z`.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    stem: Conv2d,
    down1: Conv2d,
    down2: Conv2d,
    res: Vec<ResidualBlock>,
    image: [usize; 2],
}

pub struct EncoderTrace {
    stem: BlockTrace,
    down1: BlockTrace,
    down2: BlockTrace,
    res: Vec<ResidualTrace>,
}

impl Encoder {
    pub fn new<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let (b, z) = (cfg.base_channels, cfg.latent_channels);
        Encoder {
            stem: Conv2d::new("enc.stem", 1, b, 7, 1, 3, rng),
            down1: Conv2d::new("enc.down1", b, z, 4, 2, 1, rng),
            down2: Conv2d::new("enc.down2", z, z, 4, 2, 1, rng),
            res: (0..cfg.residual_blocks).map(|i| ResidualBlock::new(&format!("enc.res{i}"), z, rng)).collect(),
            image: [cfg.image_height, cfg.image_width],
        }
    }

    /// The only input is the image batch; there is deliberately no code argument.
    pub fn forward(&self, x: &Tensor) -> Result<(LatentFeatureMap, EncoderTrace)> {
        check_image(x, self.image, "encoder")?;
        let stem = block_forward(&self.stem, x)?;
        let down1 = block_forward(&self.down1, &stem.output)?;
        let down2 = block_forward(&self.down2, &down1.output)?;
        let mut h = down2.output.clone();
        let mut res = Vec::with_capacity(self.res.len());
        for block in &self.res {
            let (y, t) = block.forward(&h)?;
            res.push(t);
            h = y;
        }
        Ok((LatentFeatureMap { values: h, spatial_scale: LATENT_SCALE }, EncoderTrace { stem, down1, down2, res }))
    }

    /// Accumulates parameter gradients (if `param_grads`) and returns the
    /// gradient w.r.t. the input image when `input_grad` is set.
    pub fn backward(&mut self, trace: &EncoderTrace, dz: &Tensor, param_grads: bool, input_grad: bool) -> Option<Tensor> {
        let mut d = dz.clone();
        for (block, t) in self.res.iter_mut().zip(&trace.res).rev() {
            d = block.backward(t, &d, param_grads);
        }
        let d = block_backward(&mut self.down2, &trace.down2, &d, param_grads, true).expect("input grad");
        let d = block_backward(&mut self.down1, &trace.down1, &d, param_grads, true).expect("input grad");
        block_backward(&mut self.stem, &trace.stem, &d, param_grads, input_grad)
    }
}

impl Module for Encoder {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.stem.params();
        v.extend(self.down1.params());
        v.extend(self.down2.params());
        for r in &self.res {
            v.extend(r.params());
        }
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.stem.params_mut();
        v.extend(self.down1.params_mut());
        v.extend(self.down2.params_mut());
        for r in &mut self.res {
            v.extend(r.params_mut());
        }
        v
    }
}

/// Broadcasts each sample's one-hot code over the latent grid and appends it
/// as `M` extra channels: channel `C_z + k` equals `code.bits[k]` everywhere.
pub fn replicate_and_concat(z: &LatentFeatureMap, codes: &[ModalityCode]) -> Result<Tensor> {
    let [n, _, h, w] = z.values.shape();
    if codes.len() != n {
        return Err(Error::shape(format!("{} codes for a batch of {n}", codes.len())));
    }
    let m = codes.first().map_or(0, ModalityCode::count);
    let mut code_planes = Tensor::zeros([n, m, h, w]);
    for (s, code) in codes.iter().enumerate() {
        // Codes may have been built by hand; re-validate.
        let code = ModalityCode::from_bits(code.bits().to_vec())?;
        if code.count() != m {
            return Err(Error::InvalidCode(code.bits().to_vec()));
        }
        let sample = code_planes.sample_mut(s);
        sample[code.index() * h * w..(code.index() + 1) * h * w].iter_mut().for_each(|v| *v = 1.0);
    }
    z.values.concat_channels(&code_planes)
}

/// Modality-conditioned decoder `Dec: (z, m_y) -> x̃_y`.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    res: Vec<ResidualBlock>,
    up1: ConvTranspose2d,
    up2: ConvTranspose2d,
    head: Conv2d,
    latent: [usize; 3],
    modalities: usize,
}

pub struct DecoderTrace {
    res: Vec<ResidualTrace>,
    up1: BlockTrace,
    up2: BlockTrace,
    output: Tensor,
}

impl Decoder {
    pub fn new<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let c = cfg.latent_channels + cfg.modalities;
        let b = cfg.base_channels;
        Decoder {
            res: (0..cfg.residual_blocks).map(|i| ResidualBlock::new(&format!("dec.res{i}"), c, rng)).collect(),
            up1: ConvTranspose2d::new("dec.up1", c, b, 4, 2, 1, rng),
            up2: ConvTranspose2d::new("dec.up2", b, b / 2, 4, 2, 1, rng),
            head: Conv2d::new("dec.head", b / 2, 1, 7, 1, 3, rng),
            latent: cfg.latent_shape(),
            modalities: cfg.modalities,
        }
    }

    pub fn input_channels(&self) -> usize {
        self.latent[0] + self.modalities
    }

    pub fn forward(&self, z: &LatentFeatureMap, codes: &[ModalityCode]) -> Result<(Tensor, DecoderTrace)> {
        let [_, c, h, w] = z.values.shape();
        if [c, h, w] != self.latent {
            return Err(Error::shape(format!("decoder expects latent {:?}, got {:?}", self.latent, z.values.shape())));
        }
        if codes.iter().any(|m| m.count() != self.modalities) {
            let bad = codes.iter().find(|m| m.count() != self.modalities).expect("exists");
            return Err(Error::InvalidCode(bad.bits().to_vec()));
        }
        let mut hcur = replicate_and_concat(z, codes)?;
        let mut res = Vec::with_capacity(self.res.len());
        for block in &self.res {
            let (y, t) = block.forward(&hcur)?;
            res.push(t);
            hcur = y;
        }
        let up1 = block_forward(&self.up1, &hcur)?;
        let up2 = block_forward(&self.up2, &up1.output)?;
        let output = tanh(&self.head.forward(&up2.output)?);
        Ok((output.clone(), DecoderTrace { res, up1, up2, output }))
    }

    /// Returns the gradient w.r.t. `z` (the code channels are constants).
    pub fn backward(&mut self, trace: &DecoderTrace, dy: &Tensor, param_grads: bool) -> Tensor {
        let d = tanh_backward(&trace.output, dy);
        let d = self.head.backward(&trace.up2.output, &d, param_grads, true).expect("input grad");
        let d = block_backward(&mut self.up2, &trace.up2, &d, param_grads, true).expect("input grad");
        let mut d = block_backward(&mut self.up1, &trace.up1, &d, param_grads, true).expect("input grad");
        for (block, t) in self.res.iter_mut().zip(&trace.res).rev() {
            d = block.backward(t, &d, param_grads);
        }
        d.split_channels(self.latent[0]).0
    }
}

impl Module for Decoder {
    fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        for r in &self.res {
            v.extend(r.params());
        }
        v.extend(self.up1.params());
        v.extend(self.up2.params());
        v.extend(self.head.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        for r in &mut self.res {
            v.extend(r.params_mut());
        }
        v.extend(self.up1.params_mut());
        v.extend(self.up2.params_mut());
        v.extend(self.head.params_mut());
        v
    }
}

/// Shared PatchGAN-style trunk with a realism head and a modality head.
#[derive(Debug)]
pub struct Discriminator {
    d1: Conv2d,
    d2: Conv2d,
    d3: Conv2d,
    adv: Conv2d,
    cls: Linear,
    image: [usize; 2],
    evaluations: AtomicUsize,
}

impl Clone for Discriminator {
    fn clone(&self) -> Self {
        Discriminator {
            d1: self.d1.clone(),
            d2: self.d2.clone(),
            d3: self.d3.clone(),
            adv: self.adv.clone(),
            cls: self.cls.clone(),
            image: self.image,
            evaluations: AtomicUsize::new(self.evaluations()),
        }
    }
}

impl PartialEq for Discriminator {
    fn eq(&self, other: &Self) -> bool {
        self.params() == other.params()
    }
}

pub struct DiscriminatorTrace {
    input: Tensor,
    h1: Tensor,
    h2: Tensor,
    h3: Tensor,
    pooled: Vec<f32>,
}

impl Discriminator {
    pub fn new<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        Self::with_prefix("dis", cfg, rng)
    }

    /// Same architecture under a different parameter-name prefix (used for
    /// the evaluation classifier).
    pub fn with_prefix<R: Rng>(prefix: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        let b = cfg.dis_base_channels;
        Discriminator {
            d1: Conv2d::new(&format!("{prefix}.d1"), 1, b, 4, 2, 1, rng),
            d2: Conv2d::new(&format!("{prefix}.d2"), b, 2 * b, 4, 2, 1, rng),
            d3: Conv2d::new(&format!("{prefix}.d3"), 2 * b, 4 * b, 4, 2, 1, rng),
            adv: Conv2d::new(&format!("{prefix}.adv"), 4 * b, 1, 1, 1, 0, rng),
            cls: Linear::new(&format!("{prefix}.cls"), 4 * b, cfg.modalities, rng),
            image: [cfg.image_height, cfg.image_width],
            evaluations: AtomicUsize::new(0),
        }
    }

    /// Number of forward evaluations since construction.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn forward(&self, x: &Tensor) -> Result<(DiscriminatorOutput, DiscriminatorTrace)> {
        check_image(x, self.image, "discriminator")?;
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let h1 = leaky_relu(&self.d1.forward(x)?);
        let h2 = leaky_relu(&self.d2.forward(&h1)?);
        let h3 = leaky_relu(&self.d3.forward(&h2)?);
        let adv_map = self.adv.forward(&h3)?;
        let plane = h3.plane_len() as f32;
        let pooled: Vec<f32> = h3.data().chunks(h3.plane_len()).map(|p| p.iter().sum::<f32>() / plane).collect();
        let modality_logits = self.cls.forward(&pooled, x.batch());
        Ok((
            DiscriminatorOutput { adv_map, modality_logits },
            DiscriminatorTrace { input: x.clone(), h1, h2, h3, pooled },
        ))
    }

    /// Back-propagates gradients of the realism map and/or the logits.
    pub fn backward(
        &mut self,
        trace: &DiscriminatorTrace,
        d_adv: Option<&Tensor>,
        d_logits: Option<&[f32]>,
        param_grads: bool,
        input_grad: bool,
    ) -> Option<Tensor> {
        let batch = trace.input.batch();
        let mut dh3 = Tensor::zeros(trace.h3.shape());
        if let Some(d_adv) = d_adv {
            dh3 = self.adv.backward(&trace.h3, d_adv, param_grads, true).expect("input grad");
        }
        if let Some(d_logits) = d_logits {
            let dpool = self.cls.backward(&trace.pooled, d_logits, batch, param_grads);
            let plane = trace.h3.plane_len();
            for (chunk, g) in dh3.data_mut().chunks_mut(plane).zip(dpool) {
                let share = g / plane as f32;
                chunk.iter_mut().for_each(|v| *v += share);
            }
        }
        let d = leaky_relu_backward(&trace.h3, &dh3);
        let d = self.d3.backward(&trace.h2, &d, param_grads, true).expect("input grad");
        let d = leaky_relu_backward(&trace.h2, &d);
        let d = self.d2.backward(&trace.h1, &d, param_grads, true).expect("input grad");
        let d = leaky_relu_backward(&trace.h1, &d);
        self.d1.backward(&trace.input, &d, param_grads, input_grad)
    }
}

impl Module for Discriminator {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.d1.params();
        v.extend(self.d2.params());
        v.extend(self.d3.params());
        v.extend(self.adv.params());
        v.extend(self.cls.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.d1.params_mut();
        v.extend(self.d2.params_mut());
        v.extend(self.d3.params_mut());
        v.extend(self.adv.params_mut());
        v.extend(self.cls.params_mut());
        v
    }
}

fn check_image(x: &Tensor, expected: [usize; 2], who: &str) -> Result<()> {
    let [_, c, h, w] = x.shape();
    if c != 1 || [h, w] != expected {
        return Err(Error::shape(format!(
            "{who} expects (n, 1, {}, {}), got {:?}",
            expected[0],
            expected[1],
            x.shape()
        )));
    }
    Ok(())
}

/// Enc, Dec and Dis parameters plus the architecture that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub discriminator: Discriminator,
    pub train_mode: bool,
}

impl ModelBundle {
    /// Fresh parameters: conv/linear weights ~ N(0, 0.02), biases zero.
    pub fn new<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let encoder = Encoder::new(&config, rng);
        let decoder = Decoder::new(&config, rng);
        let discriminator = Discriminator::new(&config, rng);
        Ok(ModelBundle { config, encoder, decoder, discriminator, train_mode: false })
    }

    pub fn generator_params(&self) -> Vec<&Param> {
        let mut v = self.encoder.params();
        v.extend(self.decoder.params());
        v
    }

    pub fn generator_params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.encoder.params_mut();
        v.extend(self.decoder.params_mut());
        v
    }

    /// All parameters in checkpoint order: encoder, decoder, discriminator.
    pub fn all_params(&self) -> Vec<&Param> {
        let mut v = self.generator_params();
        v.extend(self.discriminator.params());
        v
    }

    pub fn all_params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.encoder.params_mut();
        v.extend(self.decoder.params_mut());
        v.extend(self.discriminator.params_mut());
        v
    }

    pub fn param_count(&self) -> usize {
        self.all_params().iter().map(|p| p.len()).sum()
    }
}

/// The Enc/Dec pair as seen by the cycle and by test-time translation.
pub trait ConditionalAutoencoder {
    fn encode(&self, x: &Tensor) -> Result<LatentFeatureMap>;
    fn decode(&self, z: &LatentFeatureMap, codes: &[ModalityCode]) -> Result<Tensor>;
}

impl ConditionalAutoencoder for ModelBundle {
    fn encode(&self, x: &Tensor) -> Result<LatentFeatureMap> {
        Ok(self.encoder.forward(x)?.0)
    }
    fn decode(&self, z: &LatentFeatureMap, codes: &[ModalityCode]) -> Result<Tensor> {
        Ok(self.decoder.forward(z, codes)?.0)
    }
}

pub fn encode(bundle: &ModelBundle, x: &Tensor) -> Result<LatentFeatureMap> {
    Ok(bundle.encoder.forward(x)?.0)
}

pub fn decode(bundle: &ModelBundle, z: &LatentFeatureMap, m_y: &[ModalityCode]) -> Result<Tensor> {
    Ok(bundle.decoder.forward(z, m_y)?.0)
}

pub fn discriminate(bundle: &ModelBundle, x: &Tensor) -> Result<DiscriminatorOutput> {
    Ok(bundle.discriminator.forward(x)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bundle(size: usize) -> ModelBundle {
        ModelBundle::new(ModelConfig::for_image(size, size), &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    fn image(n: usize, size: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * size * size).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        Tensor::from_vec([n, 1, size, size], data).unwrap()
    }

    fn codes(indices: &[usize]) -> Vec<ModalityCode> {
        indices.iter().map(|&i| ModalityCode::one_hot(i, 4).unwrap()).collect()
    }

    #[test]
    fn encoder_output_shape_is_quarter_resolution() {
        let b = bundle(64);
        let z = encode(&b, &image(1, 64, 1)).unwrap();
        assert_eq!(z.values.shape(), [1, 64, 16, 16]);
        assert_eq!(z.spatial_scale, 4);
        assert!(z.values.all_finite());
    }

    #[test]
    fn encoder_rejects_indivisible_input() {
        let b = bundle(64);
        let x = Tensor::zeros([1, 1, 63, 63]);
        assert!(matches!(encode(&b, &x), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn eval_is_deterministic() {
        let b = bundle(32);
        let x = image(2, 32, 3);
        assert_eq!(encode(&b, &x).unwrap(), encode(&b, &x).unwrap());
        assert_eq!(discriminate(&b, &x).unwrap(), discriminate(&b, &x).unwrap());
    }

    #[test]
    fn replicate_and_concat_appends_constant_code_planes() {
        let z = LatentFeatureMap { values: Tensor::full([1, 64, 16, 16], 0.3), spatial_scale: 4 };
        let out = replicate_and_concat(&z, &codes(&[1])).unwrap();
        assert_eq!(out.shape(), [1, 68, 16, 16]);
        let plane = 16 * 16;
        for k in 0..4 {
            let ch = &out.sample(0)[(64 + k) * plane..(65 + k) * plane];
            let expected = if k == 1 { 1.0 } else { 0.0 };
            assert!(ch.iter().all(|&v| v == expected));
        }
        assert!(out.sample(0)[..64 * plane].iter().all(|&v| v == 0.3));
    }

    #[test]
    fn replicate_and_concat_rejects_soft_code() {
        let z = LatentFeatureMap { values: Tensor::zeros([1, 4, 2, 2]), spatial_scale: 4 };
        // Bypass the validating constructor through serde.
        let soft: std::result::Result<ModalityCode, _> = serde_json::from_str("[0.5, 0.5, 0.0, 0.0]");
        assert!(soft.is_err());
        let bad = ModalityCode::from_bits(vec![0.5, 0.5, 0.0, 0.0]);
        assert!(matches!(bad, Err(Error::InvalidCode(_))));
        assert!(replicate_and_concat(&z, &[]).is_err());
    }

    #[test]
    fn decoder_output_is_bounded_with_correct_shape() {
        let mut b = bundle(64);
        // Blow up the weights; tanh must still bound the output.
        for p in b.decoder.params_mut() {
            p.value.iter_mut().for_each(|v| *v *= 500.0);
        }
        let z = encode(&b, &image(4, 64, 2)).unwrap();
        let y = decode(&b, &z, &codes(&[0, 1, 2, 3])).unwrap();
        assert_eq!(y.shape(), [4, 1, 64, 64]);
        assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn discriminator_heads_have_expected_shapes() {
        let b = bundle(64);
        let out = discriminate(&b, &image(1, 64, 4)).unwrap();
        assert_eq!(out.adv_map.shape(), [1, 1, 8, 8]);
        assert_eq!(out.modality_logits.len(), 4);
        let logits = out.logits(0);
        let max = logits.iter().cloned().fold(f32::MIN, f32::max);
        let sum: f64 = logits.iter().map(|l| ((l - max) as f64).exp()).sum();
        let probs: f64 = logits.iter().map(|l| ((l - max) as f64).exp() / sum).sum();
        assert!((probs - 1.0).abs() < 1e-6);
    }

    #[test]
    fn decoder_input_width_is_latent_plus_modalities() {
        let b = bundle(32);
        assert_eq!(b.decoder.input_channels(), 68);
        assert_eq!(b.decoder.res[0].conv1.in_channels(), 68);
    }

    #[test]
    fn parameter_count_is_independent_of_direction() {
        let b = bundle(32);
        let count = b.param_count();
        let x = image(1, 32, 5);
        for mx in 0..4 {
            for my in 0..4 {
                let z = encode(&b, &x).unwrap();
                let _ = decode(&b, &z, &codes(&[my])).unwrap();
                let _ = mx;
                assert_eq!(b.param_count(), count);
            }
        }
    }

    /// Finite-difference check of the full encoder→decoder→discriminator
    /// backward pass on a small configuration.
    #[test]
    fn end_to_end_backward_matches_finite_differences() {
        let cfg = ModelConfig {
            modalities: 4,
            image_height: 16,
            image_width: 16,
            base_channels: 4,
            latent_channels: 4,
            residual_blocks: 1,
            dis_base_channels: 4,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut b = ModelBundle::new(cfg, &mut rng).unwrap();
        for p in b.all_params_mut() {
            p.value.iter_mut().for_each(|v| *v *= 15.0);
        }
        let x = image(2, 16, 7);
        let m = codes(&[2, 0]);
        let weights: Vec<f32> = (0..2 * 4).map(|i| (i as f32 * 0.7).cos()).collect();
        let loss = |b: &ModelBundle, x: &Tensor| -> f64 {
            let z = encode(b, x).unwrap();
            let y = decode(b, &z, &m).unwrap();
            let out = discriminate(b, &y).unwrap();
            let adv: f64 = out.adv_map.data().iter().map(|&v| v as f64).sum();
            let cls: f64 = out.modality_logits.iter().zip(&weights).map(|(&l, &w)| (l * w) as f64).sum();
            adv + cls
        };
        let (z, et) = b.encoder.forward(&x).unwrap();
        let (y, dt) = b.decoder.forward(&z, &m).unwrap();
        let (out, st) = b.discriminator.forward(&y).unwrap();
        let d_adv = Tensor::full(out.adv_map.shape(), 1.0);
        let dy = b.discriminator.backward(&st, Some(&d_adv), Some(&weights), true, true).unwrap();
        let dz = b.decoder.backward(&dt, &dy, true);
        let dx = b.encoder.backward(&et, &dz, true, true).unwrap();

        let eps = 1e-3f32;
        for i in [0usize, 37, 300] {
            let mut xp = x.clone();
            xp.data_mut()[i] += eps;
            let mut xm = x.clone();
            xm.data_mut()[i] -= eps;
            let fd = (loss(&b, &xp) - loss(&b, &xm)) / (2.0 * eps as f64);
            let an = dx.data()[i] as f64;
            assert!((fd - an).abs() < 2e-2 * (1.0 + an.abs()), "input {i}: fd {fd} vs {an}");
        }
        let names: Vec<String> = b.all_params().iter().map(|p| p.name.clone()).collect();
        for name in ["enc.stem.weight", "enc.res0.conv2.weight", "dec.up1.weight", "dec.head.bias", "dis.cls.weight"] {
            let idx = names.iter().position(|n| n == name).unwrap();
            let j = 1.min(b.all_params()[idx].len() - 1);
            let analytic = b.all_params()[idx].grad[j] as f64;
            let mut bp = b.clone();
            bp.all_params_mut()[idx].value[j] += eps;
            let mut bm = b.clone();
            bm.all_params_mut()[idx].value[j] -= eps;
            let fd = (loss(&bp, &x) - loss(&bm, &x)) / (2.0 * eps as f64);
            assert!((fd - analytic).abs() < 2e-2 * (1.0 + analytic.abs()), "{name}: fd {fd} vs {analytic}");
        }
    }
}
