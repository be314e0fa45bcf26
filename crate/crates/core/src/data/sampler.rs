use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PairedIndex;
use crate::error::{Error, Result};
use crate::modality::ModalityCode;
use crate::tensor::Tensor;

/// One training sample: a slice and its source and target modalities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRef {
    pub slice: usize,
    pub source: usize,
    pub target: usize,
}

/// A batch of source images, their codes, target codes and paired targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub x: Tensor,
    pub source_codes: Vec<ModalityCode>,
    pub target_codes: Vec<ModalityCode>,
    pub x_target: Tensor,
    pub refs: Vec<SampleRef>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }
}

fn check_divisible(batch_size: usize, m: usize) -> Result<()> {
    if batch_size == 0 || m == 0 || !batch_size.is_multiple_of(m) {
        return Err(Error::IndivisibleBatch { batch_size, modalities: m });
    }
    Ok(())
}

/// Gives each slice a source modality so that every modality appears
/// equally often, and a uniformly drawn target modality.
pub fn assign_modalities(slices: &[usize], m: usize, rng: &mut impl Rng) -> Result<Vec<SampleRef>> {
    check_divisible(slices.len(), m)?;
    let mut sources: Vec<usize> = (0..slices.len()).map(|i| i % m).collect();
    sources.shuffle(rng);
    Ok(slices
        .iter()
        .zip(sources)
        .map(|(&slice, source)| SampleRef { slice, source, target: rng.random_range(0..m) })
        .collect())
}

/// Materialises image tensors and codes for the referenced samples.
pub fn assemble_batch(index: &PairedIndex, refs: &[SampleRef]) -> Result<Batch> {
    let m = index.modalities;
    let mut sources = Vec::with_capacity(refs.len());
    let mut targets = Vec::with_capacity(refs.len());
    for r in refs {
        let slice = index.slices.get(r.slice).ok_or_else(|| {
            Error::InvalidArgument(format!("slice {} outside index of {}", r.slice, index.len()))
        })?;
        if r.source >= m || r.target >= m {
            return Err(Error::InvalidArgument(format!("modality out of range in {r:?}")));
        }
        sources.push(slice.image(r.source));
        targets.push(slice.image(r.target));
    }
    Ok(Batch {
        x: Tensor::stack_images(&sources, index.height, index.width)?,
        x_target: Tensor::stack_images(&targets, index.height, index.width)?,
        source_codes: refs.iter().map(|r| ModalityCode::one_hot(r.source, m)).collect::<Result<_>>()?,
        target_codes: refs.iter().map(|r| ModalityCode::one_hot(r.target, m)).collect::<Result<_>>()?,
        refs: refs.to_vec(),
    })
}

/// Draws a modality-balanced batch. Slices are drawn without replacement
/// when the index is large enough, otherwise with replacement.
pub fn sample_training_batch(index: &PairedIndex, batch_size: usize, rng: &mut impl Rng) -> Result<Batch> {
    check_divisible(batch_size, index.modalities)?;
    if index.is_empty() {
        return Err(Error::EmptySet("paired index has no slices".into()));
    }
    let slices: Vec<usize> = if index.len() >= batch_size {
        index::sample(rng, index.len(), batch_size).into_vec()
    } else {
        (0..batch_size).map(|_| rng.random_range(0..index.len())).collect()
    };
    let refs = assign_modalities(&slices, index.modalities, rng)?;
    assemble_batch(index, &refs)
}

/// The batches of one epoch: every slice once, in shuffled order, cut into
/// batches of `batch_size`. A short final batch is trimmed to a multiple
/// of `M` and dropped if that leaves nothing.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochPlan {
    pub epoch: u64,
    pub batches: Vec<Vec<SampleRef>>,
}

impl EpochPlan {
    pub fn new(slices: usize, m: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Self> {
        check_divisible(batch_size, m)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch + 1);
        let mut order: Vec<usize> = (0..slices).collect();
        order.shuffle(&mut rng);
        let mut batches = Vec::new();
        for chunk in order.chunks(batch_size) {
            let usable = chunk.len() - chunk.len() % m;
            if usable > 0 {
                batches.push(assign_modalities(&chunk[..usable], m, &mut rng)?);
            }
        }
        Ok(EpochPlan { epoch, batches })
    }

    pub fn steps(&self) -> usize {
        self.batches.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PairedSlice;

    fn index(n: usize) -> PairedIndex {
        PairedIndex {
            modalities: 4,
            height: 2,
            width: 2,
            slices: (0..n)
                .map(|i| PairedSlice {
                    subject_id: format!("s{i}"),
                    slice_index: 0,
                    height: 2,
                    width: 2,
                    images: (0..4).map(|k| vec![(10 * i + k) as f32; 4]).collect(),
                    brain_pixel_count: 4,
                })
                .collect(),
        }
    }

    #[test]
    fn batches_are_balanced_and_paired() {
        let idx = index(20);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = sample_training_batch(&idx, 16, &mut rng).unwrap();
        let mut counts = [0; 4];
        for (n, r) in batch.refs.iter().enumerate() {
            counts[r.source] += 1;
            assert_eq!(batch.x.sample(n)[0], (10 * r.slice + r.source) as f32);
            assert_eq!(batch.x_target.sample(n)[0], (10 * r.slice + r.target) as f32);
            assert_eq!(batch.source_codes[n].index(), r.source);
            assert_eq!(batch.target_codes[n].index(), r.target);
        }
        assert_eq!(counts, [4; 4]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let idx = index(9);
        let a = sample_training_batch(&idx, 8, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_training_batch(&idx, 8, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn indivisible_batch_is_rejected() {
        let err = sample_training_batch(&index(9), 6, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::IndivisibleBatch { batch_size: 6, modalities: 4 }));
    }

    #[test]
    fn epoch_plan_covers_slices_once() {
        let plan = EpochPlan::new(42, 4, 16, 1, 0).unwrap();
        let sizes: Vec<usize> = plan.batches.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![16, 16, 8]);
        let mut seen: Vec<usize> = plan.batches.iter().flatten().map(|r| r.slice).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 40);
        assert_ne!(plan, EpochPlan::new(42, 4, 16, 1, 1).unwrap());
        assert_eq!(plan, EpochPlan::new(42, 4, 16, 1, 0).unwrap());
    }
}
