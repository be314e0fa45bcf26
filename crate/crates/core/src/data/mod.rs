//! Volume ingestion, intensity scaling, slice filtering and the paired
//! slice index.
//!
//! On disk a dataset is `<root>/manifest.json` plus one raw volume per
//! subject and modality at `<root>/<subject>/<modality>.raw`, stored as
//! little-endian `f32`, row-major with slices outermost.

mod manifest;
pub mod phantom;
pub mod sampler;

use std::fs;
use std::path::Path;

pub use manifest::{DatasetManifest, Split, SubjectRecord, MANIFEST_FILE};
pub use phantom::{generate_phantom_dataset, PhantomSpec};
pub use sampler::{sample_training_batch, Batch, EpochPlan, SampleRef};

use crate::error::{Error, Result};
use crate::modality::ModalityCode;

/// Brain-pixel threshold below which axial slices are discarded.
pub const DEFAULT_MIN_BRAIN_PIXELS: usize = 2000;

/// Modality whose nonzero voxels define the brain area.
pub const REFERENCE_MODALITY: usize = 0;

/// A 3-D scalar volume, stored slice-major: `voxels[(z * height + y) * width + x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub subject_id: String,
    pub modality: ModalityCode,
    height: usize,
    width: usize,
    depth: usize,
    voxels: Vec<f32>,
}

impl Volume {
    pub fn new(
        subject_id: impl Into<String>,
        modality: ModalityCode,
        [height, width, depth]: [usize; 3],
        voxels: Vec<f32>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || depth == 0 {
            return Err(Error::shape(format!("volume dimensions must be >= 1, got {height}x{width}x{depth}")));
        }
        if voxels.len() != height * width * depth {
            return Err(Error::shape(format!(
                "{} voxels for a {height}x{width}x{depth} volume",
                voxels.len()
            )));
        }
        if voxels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "volume voxels".into() });
        }
        Ok(Volume { subject_id: subject_id.into(), modality, height, width, depth, voxels })
    }

    /// `[height, width, depth]`.
    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, self.depth]
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn slice(&self, z: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.voxels[z * plane..(z + 1) * plane]
    }

    pub fn read_raw(
        path: &Path,
        subject_id: impl Into<String>,
        modality: ModalityCode,
        shape: [usize; 3],
    ) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let expected = shape.iter().product::<usize>() * 4;
        if bytes.len() != expected {
            return Err(Error::shape(format!(
                "{} holds {} bytes, expected {expected} for shape {shape:?}",
                path.display(),
                bytes.len()
            )));
        }
        let voxels = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        Volume::new(subject_id, modality, shape, voxels)
    }

    pub fn write_raw(&self, path: &Path) -> Result<()> {
        write_f32_le(path, &self.voxels)
    }
}

pub fn write_f32_le(path: &Path, values: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Linearly maps the volume's `[min, max]` onto `[-1, 1]`. A constant
/// volume maps to all zeros.
pub fn scale_intensities(volume: &Volume) -> Volume {
    let (min, max) = volume
        .voxels
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = (max as f64) - (min as f64);
    let voxels = if range > 0.0 {
        volume
            .voxels
            .iter()
            .map(|&v| ((2.0 * ((v as f64) - (min as f64)) / range - 1.0) as f32).clamp(-1.0, 1.0))
            .collect()
    } else {
        vec![0.0; volume.voxels.len()]
    };
    Volume { voxels, ..volume.clone() }
}

/// One axial slice of one subject with all `M` co-registered modalities,
/// scaled to `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSlice {
    pub subject_id: String,
    pub slice_index: usize,
    pub height: usize,
    pub width: usize,
    /// `images[k]` is modality `k`, row-major `height x width`.
    pub images: Vec<Vec<f32>>,
    pub brain_pixel_count: usize,
}

impl PairedSlice {
    pub fn image(&self, modality: usize) -> &[f32] {
        &self.images[modality]
    }

    pub fn modalities(&self) -> usize {
        self.images.len()
    }
}

/// Keeps slices whose reference-modality brain area (nonzero voxels before
/// scaling) is at least `threshold`; retained slices carry every modality
/// after per-volume scaling.
pub fn extract_valid_slices(volumes: &[Volume], threshold: usize) -> Result<Vec<PairedSlice>> {
    let Some(reference) = volumes.get(REFERENCE_MODALITY) else {
        return Ok(Vec::new());
    };
    for v in volumes {
        if v.shape() != reference.shape() {
            return Err(Error::shape(format!(
                "subject {}: modality {} has shape {:?}, expected {:?}",
                v.subject_id,
                v.modality.name(),
                v.shape(),
                reference.shape()
            )));
        }
        if v.subject_id != reference.subject_id {
            return Err(Error::InvalidArgument(format!(
                "volumes from different subjects: {} vs {}",
                v.subject_id, reference.subject_id
            )));
        }
    }
    let scaled: Vec<Volume> = volumes.iter().map(scale_intensities).collect();
    let [height, width, depth] = reference.shape();
    let mut out = Vec::new();
    for z in 0..depth {
        let count = reference.slice(z).iter().filter(|&&v| v != 0.0).count();
        if count < threshold {
            continue;
        }
        out.push(PairedSlice {
            subject_id: reference.subject_id.clone(),
            slice_index: z,
            height,
            width,
            images: scaled.iter().map(|v| v.slice(z).to_vec()).collect(),
            brain_pixel_count: count,
        });
    }
    Ok(out)
}

/// All retained slices of one split, in manifest subject order.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedIndex {
    pub modalities: usize,
    pub height: usize,
    pub width: usize,
    pub slices: Vec<PairedSlice>,
}

impl PairedIndex {
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn subjects(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = Vec::new();
        for s in &self.slices {
            if ids.last() != Some(&s.subject_id.as_str()) {
                ids.push(&s.subject_id);
            }
        }
        ids
    }
}

/// Loads every subject of `split` (all subjects when `None`) and indexes
/// its retained slices.
pub fn build_paired_index(manifest: &DatasetManifest, split: Option<Split>) -> Result<PairedIndex> {
    let mut index = PairedIndex { modalities: manifest.m, height: 0, width: 0, slices: Vec::new() };
    for subject in manifest.subjects.iter().filter(|s| split.is_none_or(|sp| s.split == sp)) {
        let volumes = manifest.load_subject(subject)?;
        let slices = extract_valid_slices(&volumes, manifest.min_brain_pixels)?;
        if let Some(first) = slices.first() {
            if index.slices.is_empty() {
                index.height = first.height;
                index.width = first.width;
            } else if (first.height, first.width) != (index.height, index.width) {
                return Err(Error::shape(format!(
                    "subject {} has {}x{} slices, dataset uses {}x{}",
                    subject.id, first.height, first.width, index.height, index.width
                )));
            }
        }
        index.slices.extend(slices);
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(k: usize) -> ModalityCode {
        ModalityCode::one_hot(k, 4).unwrap()
    }

    fn volume(values: Vec<f32>, shape: [usize; 3]) -> Volume {
        Volume::new("s", code(0), shape, values).unwrap()
    }

    #[test]
    fn scaling_maps_range_onto_unit_interval() {
        let v = volume(vec![0.0, 50.0, 100.0, 25.0], [2, 2, 1]);
        let s = scale_intensities(&v);
        assert_eq!(s.voxels(), &[-1.0, 0.0, 1.0, -0.5]);
    }

    #[test]
    fn constant_volume_scales_to_zeros() {
        let s = scale_intensities(&volume(vec![7.0; 8], [2, 2, 2]));
        assert!(s.voxels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn volume_rejects_non_finite_and_empty() {
        assert!(Volume::new("s", code(0), [1, 1, 1], vec![f32::NAN]).is_err());
        assert!(Volume::new("s", code(0), [0, 1, 1], vec![]).is_err());
    }

    fn slab(counts: &[usize], side: usize) -> Vec<Volume> {
        let plane = side * side;
        let mut t1 = Vec::new();
        for &c in counts {
            t1.extend((0..plane).map(|i| if i < c { 1.0 + i as f32 } else { 0.0 }));
        }
        let mut vols = vec![volume(t1, [side, side, counts.len()])];
        for k in 1..4 {
            let other: Vec<f32> = (0..plane * counts.len()).map(|i| (i % 7) as f32 + k as f32).collect();
            vols.push(Volume::new("s", code(k), [side, side, counts.len()], other).unwrap());
        }
        vols
    }

    #[test]
    fn slice_filter_boundary() {
        let vols = slab(&[1999, 2000, 0, 2500], 64);
        let kept = extract_valid_slices(&vols, DEFAULT_MIN_BRAIN_PIXELS).unwrap();
        let idx: Vec<usize> = kept.iter().map(|s| s.slice_index).collect();
        assert_eq!(idx, vec![1, 3]);
        assert_eq!(kept[0].brain_pixel_count, 2000);
        for s in &kept {
            assert_eq!(s.images.len(), 4);
            assert!(s.images.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn slice_filter_rejects_mismatched_shapes() {
        let mut vols = slab(&[10, 10], 8);
        vols[2] = Volume::new("s", code(2), [8, 8, 1], vec![0.0; 64]).unwrap();
        assert!(matches!(extract_valid_slices(&vols, 1), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn raw_round_trip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let v = volume(vec![0.1, -3.5, f32::MAX, 1e-30, 0.0, 2.0], [1, 2, 3]);
        let p = dir.path().join("v.raw");
        v.write_raw(&p).unwrap();
        let back = Volume::read_raw(&p, "s", code(0), [1, 2, 3]).unwrap();
        assert_eq!(back, v);
        assert!(Volume::read_raw(&p, "s", code(0), [2, 2, 3]).is_err());
    }
}
