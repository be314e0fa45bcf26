//! Test-time translation with the encoder and decoder only.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{extract_valid_slices, write_f32_le, DatasetManifest};
use crate::error::{Error, Result};
use crate::modality::ModalityCode;
use crate::models::ConditionalAutoencoder;
use crate::tensor::Tensor;

/// Images to translate and the modality to produce. `m_x` is carried for
/// bookkeeping and never reaches the networks.
#[derive(Clone, Debug, PartialEq)]
pub struct TranslationRequest {
    /// `(n, 1, H, W)` in `[-1, 1]`.
    pub x: Tensor,
    pub m_y: ModalityCode,
    pub m_x: Option<ModalityCode>,
}

impl TranslationRequest {
    pub fn new(x: Tensor, m_y: ModalityCode) -> Self {
        TranslationRequest { x, m_y, m_x: None }
    }
}

/// `Dec(Enc(x), m_y)` for every image of the request.
pub fn translate<A: ConditionalAutoencoder + ?Sized>(ae: &A, request: &TranslationRequest) -> Result<Tensor> {
    let m_y = ModalityCode::from_bits(request.m_y.bits().to_vec())?;
    if let Some(bad) = request.x.data().iter().find(|v| !(-1.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("input pixel {bad} outside [-1, 1]")));
    }
    let z = ae.encode(&request.x)?;
    ae.decode(&z, &vec![m_y; request.x.batch()])
}

/// Translations of `x` into every modality except `m_x`, in index order.
pub fn synthesize_complementary<A: ConditionalAutoencoder + ?Sized>(
    ae: &A,
    x: &Tensor,
    m_x: &ModalityCode,
) -> Result<Vec<(ModalityCode, Tensor)>> {
    (0..m_x.count())
        .filter(|&k| k != m_x.index())
        .map(|k| {
            let m_y = ModalityCode::one_hot(k, m_x.count())?;
            let request = TranslationRequest { x: x.clone(), m_y: m_y.clone(), m_x: Some(m_x.clone()) };
            Ok((m_y, translate(ae, &request)?))
        })
        .collect()
}

/// Origin of a translated volume, stored next to it as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub checkpoint_hash: String,
    pub subject: String,
    pub m_x: String,
    pub m_y: String,
    /// `[height, width, depth]` of the written volume.
    pub shape: [usize; 3],
    /// Source slice index of each written slice.
    pub slice_indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TranslatedVolume {
    pub volume_path: PathBuf,
    pub provenance_path: PathBuf,
    pub provenance: Provenance,
}

/// Translates every retained slice of `subject` from `m_x` to `m_y` and
/// writes `<out>/<subject>/<m_y>.raw` plus `<m_y>.json` provenance.
pub fn translate_volume<A: ConditionalAutoencoder + ?Sized>(
    ae: &A,
    manifest: &DatasetManifest,
    subject: &str,
    m_x: &ModalityCode,
    m_y: &ModalityCode,
    out_dir: &Path,
    checkpoint_hash: &str,
) -> Result<TranslatedVolume> {
    let record = manifest.subject(subject)?;
    let volumes = manifest.load_subject(record)?;
    let slices = extract_valid_slices(&volumes, manifest.min_brain_pixels)?;
    let [height, width, _] = record.shape;
    let images: Vec<&[f32]> = slices.iter().map(|s| s.image(m_x.index())).collect();
    let translated = if images.is_empty() {
        Tensor::zeros([0, 1, height, width])
    } else {
        let request = TranslationRequest {
            x: Tensor::stack_images(&images, height, width)?,
            m_y: m_y.clone(),
            m_x: Some(m_x.clone()),
        };
        translate(ae, &request)?
    };

    let dir = out_dir.join(subject);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let volume_path = dir.join(format!("{}.raw", m_y.name()));
    write_f32_le(&volume_path, translated.data())?;
    let provenance = Provenance {
        checkpoint_hash: checkpoint_hash.to_string(),
        subject: subject.to_string(),
        m_x: m_x.name(),
        m_y: m_y.name(),
        shape: [height, width, slices.len()],
        slice_indices: slices.iter().map(|s| s.slice_index).collect(),
    };
    let provenance_path = dir.join(format!("{}.json", m_y.name()));
    let mut text = serde_json::to_string_pretty(&provenance)?;
    text.push('\n');
    fs::write(&provenance_path, text).map_err(|e| Error::io(&provenance_path, e))?;
    Ok(TranslatedVolume { volume_path, provenance_path, provenance })
}
