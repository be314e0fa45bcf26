//! Deterministic synthetic multi-modal head phantoms.
//!
//! Each subject is a set of random ellipsoids sampled into a latent
//! anatomy field `a` in `[0, 1]`. Modalities are fixed transfer functions
//! of `a` plus Gaussian noise. Raw files store `(v + 1) / 2` inside the
//! head and exactly zero outside, like skull-stripped scans.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, Split, SubjectRecord};
use super::{write_f32_le, DEFAULT_MIN_BRAIN_PIXELS};
use crate::error::{Error, Result};
use crate::modality::MODALITY_NAMES;

/// Phantoms always carry the four standard modalities.
pub const PHANTOM_MODALITIES: usize = 4;

/// Reference slice side for which the default brain-pixel threshold holds.
const REFERENCE_SIDE: f64 = 240.0;
/// Extent of the head ellipsoid covered by the slice stack.
const SLICE_SPAN: f64 = 0.35;
const ANATOMY_FLOOR: f64 = 0.05;
const SMOOTH_SIGMA: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub n_subjects: usize,
    pub image_size: usize,
    pub slices_per_subject: usize,
    pub lesion_probability: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Leading fraction of subjects assigned to the translator training split.
    pub train_fraction: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            n_subjects: 14,
            image_size: 64,
            slices_per_subject: 8,
            lesion_probability: 0.5,
            noise_sigma: 0.02,
            seed: 7,
            train_fraction: 0.7,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_subjects == 0 {
            return bad("phantom needs at least one subject".into());
        }
        if self.image_size < 16 || !self.image_size.is_multiple_of(8) {
            return bad(format!("image size must be a multiple of 8 and >= 16, got {}", self.image_size));
        }
        if self.slices_per_subject == 0 {
            return bad("phantom needs at least one slice per subject".into());
        }
        if !(0.0..=1.0).contains(&self.lesion_probability) {
            return bad(format!("lesion probability {} outside [0, 1]", self.lesion_probability));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma must be finite and >= 0, got {}", self.noise_sigma));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return bad(format!("train fraction {} outside [0, 1]", self.train_fraction));
        }
        Ok(())
    }

    /// Brain-pixel threshold scaled by slice area relative to a 240x240 slice.
    pub fn min_brain_pixels(&self) -> usize {
        let side = self.image_size as f64;
        ((DEFAULT_MIN_BRAIN_PIXELS as f64) * side * side / (REFERENCE_SIDE * REFERENCE_SIDE)).round().max(1.0) as usize
    }

    pub fn train_subjects(&self) -> usize {
        ((self.train_fraction * self.n_subjects as f64).round() as usize).min(self.n_subjects)
    }

    pub fn subject_id(index: usize) -> String {
        format!("phantom_{index:03}")
    }
}

/// Intensity of modality `k` for anatomy `a` and lesion weight `lesion`, before noise.
pub fn transfer(modality: usize, a: f64, lesion: f64) -> f64 {
    let v = match modality {
        0 => 2.0 * a - 1.0,
        1 => 2.0 * a - 1.0 + 0.6 * lesion,
        2 => 1.0 - 2.0 * a,
        3 => 2.0 * a * a - 1.0,
        _ => panic!("phantom modality index {modality} out of range"),
    };
    v.clamp(-1.0, 1.0)
}

#[derive(Clone, Copy, Debug)]
struct Ellipsoid {
    centre: [f64; 3],
    radii: [f64; 3],
    angle: f64,
    value: f64,
}

impl Ellipsoid {
    fn contains(&self, p: [f64; 3]) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dx = p[0] - self.centre[0];
        let dy = p[1] - self.centre[1];
        let x = c * dx + s * dy;
        let y = -s * dx + c * dy;
        let z = p[2] - self.centre[2];
        (x / self.radii[0]).powi(2) + (y / self.radii[1]).powi(2) + (z / self.radii[2]).powi(2) <= 1.0
    }
}

/// Noise-free latent fields of one subject, slice-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSubject {
    pub size: usize,
    pub depth: usize,
    pub anatomy: Vec<f64>,
    pub lesion: Vec<f64>,
    pub head: Vec<bool>,
    pub has_lesion: bool,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn in_disc(rng: &mut ChaCha8Rng, radius: f64) -> (f64, f64) {
    loop {
        let x = uniform(rng, -radius, radius);
        let y = uniform(rng, -radius, radius);
        if x * x + y * y <= radius * radius {
            return (x, y);
        }
    }
}

fn subject_rng(seed: u64, subject: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(subject as u64);
    rng
}

/// Draws structure parameters and samples the latent fields. The returned
/// generator continues with the noise stream of the same subject.
fn draw_subject(spec: &PhantomSpec, subject: usize) -> (PhantomSubject, ChaCha8Rng) {
    let mut rng = subject_rng(spec.seed, subject);
    let head_centre = [uniform(&mut rng, -0.04, 0.04), uniform(&mut rng, -0.04, 0.04)];
    let head_radii = [uniform(&mut rng, 0.84, 0.92), uniform(&mut rng, 0.88, 0.96)];
    let base = uniform(&mut rng, 0.37, 0.47);
    let cortex_depth = uniform(&mut rng, 0.78, 0.86);

    // Structures live in head-normalised coordinates where the head is the unit ball.
    let mut structures = Vec::new();
    let wm_scale = uniform(&mut rng, 0.9, 1.1);
    structures.push(Ellipsoid {
        centre: [0.0, 0.05, 0.0],
        radii: [0.6 * wm_scale, 0.55 * wm_scale, 0.8],
        angle: uniform(&mut rng, -0.15, 0.15),
        value: uniform(&mut rng, 0.58, 0.66),
    });
    let ventricle_size = uniform(&mut rng, 0.8, 1.2);
    for side in [-1.0, 1.0] {
        structures.push(Ellipsoid {
            centre: [side * 0.13, -0.05, 0.0],
            radii: [0.09 * ventricle_size, 0.25 * ventricle_size, 0.5],
            angle: side * 0.2,
            value: 0.95,
        });
    }
    for _ in 0..3 {
        let (x, y) = in_disc(&mut rng, 0.6);
        structures.push(Ellipsoid {
            centre: [x, y, uniform(&mut rng, -0.3, 0.3)],
            radii: [uniform(&mut rng, 0.08, 0.2), uniform(&mut rng, 0.08, 0.2), uniform(&mut rng, 0.3, 0.6)],
            angle: uniform(&mut rng, 0.0, std::f64::consts::PI),
            value: uniform(&mut rng, 0.15, 0.85),
        });
    }
    let has_lesion = rng.random::<f64>() < spec.lesion_probability;
    let lesion = if has_lesion {
        let (x, y) = in_disc(&mut rng, 0.55);
        Some(Ellipsoid {
            centre: [x, y, uniform(&mut rng, -0.25, 0.25)],
            radii: [uniform(&mut rng, 0.12, 0.22), uniform(&mut rng, 0.12, 0.22), uniform(&mut rng, 0.3, 0.5)],
            angle: uniform(&mut rng, 0.0, std::f64::consts::PI),
            value: 0.78,
        })
    } else {
        None
    };

    let size = spec.image_size;
    let depth = spec.slices_per_subject;
    let plane = size * size;
    let mut anatomy = vec![0.0; plane * depth];
    let mut lesion_map = vec![0.0; plane * depth];
    let mut head = vec![false; plane * depth];
    for k in 0..depth {
        let z = if depth == 1 { 0.0 } else { -SLICE_SPAN + 2.0 * SLICE_SPAN * k as f64 / (depth - 1) as f64 };
        let mut a_plane = vec![0.0; plane];
        let mut l_plane = vec![0.0; plane];
        for y in 0..size {
            for x in 0..size {
                let u = (x as f64 + 0.5) / size as f64 * 2.0 - 1.0;
                let v = (y as f64 + 0.5) / size as f64 * 2.0 - 1.0;
                let p = [(u - head_centre[0]) / head_radii[0], (v - head_centre[1]) / head_radii[1], z];
                let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                let i = y * size + x;
                head[k * plane + i] = r <= 1.0;
                let mut a = if r > cortex_depth { 0.28 } else { base };
                for s in &structures {
                    if s.contains(p) {
                        a = s.value;
                    }
                }
                if let Some(l) = &lesion {
                    if l.contains(p) {
                        a = l.value;
                        l_plane[i] = 1.0;
                    }
                }
                a_plane[i] = a;
            }
        }
        let a_plane = smooth(&a_plane, size, SMOOTH_SIGMA);
        let l_plane = smooth(&l_plane, size, SMOOTH_SIGMA);
        for i in 0..plane {
            if head[k * plane + i] {
                anatomy[k * plane + i] = a_plane[i].clamp(ANATOMY_FLOOR, 1.0);
                lesion_map[k * plane + i] = l_plane[i];
            }
        }
    }
    (PhantomSubject { size, depth, anatomy, lesion: lesion_map, head, has_lesion }, rng)
}

fn smooth(plane: &[f64], size: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for y in 0..size {
            for x in 0..size {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (t, w) in kernel.iter().enumerate() {
                    let d = t as isize - radius;
                    let (sx, sy) = if horizontal { (x as isize + d, y as isize) } else { (x as isize, y as isize + d) };
                    if sx >= 0 && sy >= 0 && (sx as usize) < size && (sy as usize) < size {
                        acc += w * src[sy as usize * size + sx as usize];
                        norm += w;
                    }
                }
                out[y * size + x] = acc / norm;
            }
        }
        out
    };
    pass(&pass(plane, true), false)
}

/// Latent anatomy and lesion fields of subject `index`, without noise.
pub fn phantom_subject(spec: &PhantomSpec, index: usize) -> PhantomSubject {
    draw_subject(spec, index).0
}

/// Noisy raw volumes (modality order) of subject `index`.
pub fn render_subject(spec: &PhantomSpec, index: usize) -> (PhantomSubject, Vec<Vec<f32>>) {
    let (subject, mut rng) = draw_subject(spec, index);
    let volumes = (0..PHANTOM_MODALITIES)
        .map(|m| {
            subject
                .anatomy
                .iter()
                .zip(&subject.lesion)
                .zip(&subject.head)
                .map(|((&a, &l), &inside)| {
                    let noise: f64 = rng.sample(StandardNormal);
                    if !inside {
                        return 0.0;
                    }
                    let v = (transfer(m, a, l) + spec.noise_sigma * noise).clamp(-1.0, 1.0);
                    ((v + 1.0) / 2.0) as f32
                })
                .collect()
        })
        .collect();
    (subject, volumes)
}

/// Writes a phantom dataset under `out` and returns its manifest.
pub fn generate_phantom_dataset(spec: &PhantomSpec, out: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let mut manifest = DatasetManifest::empty(out, PHANTOM_MODALITIES);
    manifest.seed = Some(spec.seed);
    manifest.min_brain_pixels = spec.min_brain_pixels();
    manifest.generator = Some(serde_json::to_value(spec)?);
    let n_train = spec.train_subjects();
    for index in 0..spec.n_subjects {
        let id = PhantomSpec::subject_id(index);
        let (_, volumes) = render_subject(spec, index);
        let mut files = std::collections::BTreeMap::new();
        for (m, voxels) in volumes.iter().enumerate() {
            let rel = format!("{id}/{}.raw", MODALITY_NAMES[m]);
            write_f32_le(&out.join(&rel), voxels)?;
            files.insert(MODALITY_NAMES[m].to_string(), rel);
        }
        manifest.subjects.push(SubjectRecord {
            id,
            shape: [spec.image_size, spec.image_size, spec.slices_per_subject],
            split: if index < n_train { Split::TrainTranslator } else { Split::Test },
            files,
        });
    }
    manifest.save()?;
    Ok(manifest)
}
