//! Unified conditional disentanglement for co-registered multimodal image
//! translation: one modality-agnostic encoder, one modality-conditioned
//! decoder and one discriminator with a realism head and a modality
//! classifier, serving every input/target modality pair.

pub mod data;
pub mod error;
pub mod inference;
pub mod losses;
pub mod metrics;
pub mod modality;
pub mod models;
pub mod nn;
pub mod optim;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use modality::{ModalityCode, MODALITY_NAMES};
pub use tensor::Tensor;
