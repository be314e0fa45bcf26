use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Volume, DEFAULT_MIN_BRAIN_PIXELS};
use crate::error::{Error, Result};
use crate::modality::{modality_name, ModalityCode};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    TrainTranslator,
    Test,
    TrainSegmentor,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train_translator" | "train" => Ok(Split::TrainTranslator),
            "test" => Ok(Split::Test),
            "train_segmentor" => Ok(Split::TrainSegmentor),
            other => Err(Error::InvalidArgument(format!(
                "unknown split {other:?} (expected train_translator, test or train_segmentor)"
            ))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::TrainTranslator => "train_translator",
            Split::Test => "test",
            Split::TrainSegmentor => "train_segmentor",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectRecord {
    pub id: String,
    /// `[height, width, depth]`.
    pub shape: [usize; 3],
    pub split: Split,
    /// Modality name → path relative to the dataset root.
    pub files: BTreeMap<String, String>,
}

fn default_min_brain_pixels() -> usize {
    DEFAULT_MIN_BRAIN_PIXELS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    /// Directory the manifest was loaded from; not serialised.
    #[serde(skip)]
    pub root_path: PathBuf,
    pub m: usize,
    /// Modality names in code-index order.
    pub modalities: Vec<String>,
    pub subjects: Vec<SubjectRecord>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_min_brain_pixels")]
    pub min_brain_pixels: usize,
    /// Free-form generator settings (phantom datasets).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

impl DatasetManifest {
    pub fn empty(root: impl Into<PathBuf>, m: usize) -> Self {
        DatasetManifest {
            root_path: root.into(),
            m,
            modalities: (0..m).map(|k| modality_name(k, m)).collect(),
            subjects: Vec::new(),
            seed: None,
            min_brain_pixels: DEFAULT_MIN_BRAIN_PIXELS,
            generator: None,
        }
    }

    /// Reads `<root>/manifest.json`.
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut manifest: DatasetManifest = serde_json::from_str(&text)?;
        manifest.root_path = root.to_path_buf();
        if manifest.modalities.len() != manifest.m {
            return Err(Error::InvalidArgument(format!(
                "manifest lists {} modality names for M={}",
                manifest.modalities.len(),
                manifest.m
            )));
        }
        Ok(manifest)
    }

    pub fn save(&self) -> Result<()> {
        fs::create_dir_all(&self.root_path).map_err(|e| Error::io(&self.root_path, e))?;
        let path = self.root_path.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn subject(&self, id: &str) -> Result<&SubjectRecord> {
        self.subjects.iter().find(|s| s.id == id).ok_or_else(|| Error::MissingSubject(id.to_string()))
    }

    pub fn subjects_in(&self, split: Split) -> impl Iterator<Item = &SubjectRecord> {
        self.subjects.iter().filter(move |s| s.split == split)
    }

    /// Loads all `M` raw volumes of a subject in modality order.
    pub fn load_subject(&self, subject: &SubjectRecord) -> Result<Vec<Volume>> {
        (0..self.m)
            .map(|k| {
                let name = &self.modalities[k];
                let rel = subject.files.get(name).ok_or_else(|| Error::MissingModality {
                    subject: subject.id.clone(),
                    modality: name.clone(),
                })?;
                let path = self.root_path.join(rel);
                if !path.is_file() {
                    return Err(Error::MissingModality { subject: subject.id.clone(), modality: name.clone() });
                }
                Volume::read_raw(&path, subject.id.clone(), ModalityCode::one_hot(k, self.m)?, subject.shape)
            })
            .collect()
    }
}
