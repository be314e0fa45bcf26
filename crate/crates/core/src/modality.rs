use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical modality order. Index `k` of every one-hot code, file name and
/// report key refers to `MODALITY_NAMES[k]`.
pub const MODALITY_NAMES: [&str; 4] = ["t1", "t1ce", "t2", "flair"];

/// Default number of modalities.
pub const DEFAULT_MODALITIES: usize = MODALITY_NAMES.len();

/// Display name of modality `index` out of `count`. Counts other than four
/// fall back to `m<index>`.
pub fn modality_name(index: usize, count: usize) -> String {
    if count == MODALITY_NAMES.len() {
        MODALITY_NAMES[index].to_string()
    } else {
        format!("m{index}")
    }
}

pub fn modality_index(name: &str, count: usize) -> Result<usize> {
    (0..count)
        .find(|&k| modality_name(k, count) == name.to_ascii_lowercase())
        .ok_or_else(|| Error::UnknownModality(name.to_string()))
}

/// One-hot modality code of length `M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct ModalityCode {
    bits: Vec<f32>,
    index: usize,
}

impl ModalityCode {
    pub fn one_hot(index: usize, count: usize) -> Result<Self> {
        if count == 0 || index >= count {
            return Err(Error::InvalidArgument(format!("modality index {index} out of range for M={count}")));
        }
        let mut bits = vec![0.0; count];
        bits[index] = 1.0;
        Ok(ModalityCode { bits, index })
    }

    /// Validates an arbitrary vector: exactly one element equal to 1, the rest 0.
    pub fn from_bits(bits: Vec<f32>) -> Result<Self> {
        let ones: Vec<usize> = bits.iter().enumerate().filter(|(_, &b)| b == 1.0).map(|(i, _)| i).collect();
        let zeros = bits.iter().filter(|&&b| b == 0.0).count();
        if ones.len() != 1 || zeros + 1 != bits.len() {
            return Err(Error::InvalidCode(bits));
        }
        Ok(ModalityCode { index: ones[0], bits })
    }

    pub fn from_name(name: &str, count: usize) -> Result<Self> {
        ModalityCode::one_hot(modality_index(name, count)?, count)
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn count(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[f32] {
        &self.bits
    }

    pub fn name(&self) -> String {
        modality_name(self.index, self.bits.len())
    }
}

impl TryFrom<Vec<f32>> for ModalityCode {
    type Error = Error;
    fn try_from(bits: Vec<f32>) -> Result<Self> {
        ModalityCode::from_bits(bits)
    }
}

impl From<ModalityCode> for Vec<f32> {
    fn from(code: ModalityCode) -> Self {
        code.bits
    }
}
