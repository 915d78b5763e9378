//! Datasets and epoch batching.

use std::sync::mpsc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::{augment, decode_rgb, normalize_values, resize_bilinear, AugmentSpec, Normalization, RgbImage};
use super::labels::SampleRecord;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Random-access labelled images.
pub trait Dataset: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn id(&self, index: usize) -> &str;

    fn label(&self, index: usize) -> usize;

    /// The raw `[0, 1]` image at `resolution x resolution`.
    fn image(&self, index: usize, resolution: usize) -> Result<RgbImage>;
}

/// Images already decoded into memory.
#[derive(Debug, Clone, Default)]
pub struct InMemoryDataset {
    ids: Vec<String>,
    images: Vec<RgbImage>,
    labels: Vec<usize>,
}

impl InMemoryDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, id: impl Into<String>, image: RgbImage, label: usize) {
        self.ids.push(id.into());
        self.images.push(image);
        self.labels.push(label);
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Keeps the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> InMemoryDataset {
        let mut out = InMemoryDataset::new();
        for &i in indices {
            out.push(self.ids[i].clone(), self.images[i].clone(), self.labels[i]);
        }
        out
    }

    /// Keeps the samples whose ids are listed, in list order.
    pub fn select(&self, ids: &[String]) -> Result<InMemoryDataset> {
        let pos: std::collections::HashMap<&str, usize> =
            self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let idx = ids
            .iter()
            .map(|id| {
                pos.get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Format(format!("unknown image id `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.subset(&idx))
    }
}

impl Dataset for InMemoryDataset {
    fn len(&self) -> usize {
        self.ids.len()
    }

    fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    fn image(&self, index: usize, resolution: usize) -> Result<RgbImage> {
        let img = &self.images[index];
        if img.width == resolution && img.height == resolution {
            Ok(img.clone())
        } else {
            resize_bilinear(img, resolution, resolution)
        }
    }
}

/// Images decoded from disk on every access.
#[derive(Debug, Clone)]
pub struct FileDataset {
    records: Vec<SampleRecord>,
}

impl FileDataset {
    pub fn new(records: Vec<SampleRecord>) -> Self {
        FileDataset { records }
    }

    /// Restricts `records` to `ids`, preserving the order of `ids`.
    pub fn from_ids(records: &[SampleRecord], ids: &[String]) -> Result<Self> {
        let by_id: std::collections::HashMap<&str, &SampleRecord> =
            records.iter().map(|r| (r.image_id.as_str(), r)).collect();
        let picked = ids
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|r| (*r).clone())
                    .ok_or_else(|| Error::Format(format!("split lists `{id}` but the label file does not")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FileDataset { records: picked })
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }
}

impl Dataset for FileDataset {
    fn len(&self) -> usize {
        self.records.len()
    }

    fn id(&self, index: usize) -> &str {
        &self.records[index].image_id
    }

    fn label(&self, index: usize) -> usize {
        self.records[index].class_id.0
    }

    fn image(&self, index: usize, resolution: usize) -> Result<RgbImage> {
        resize_bilinear(&decode_rgb(&self.records[index].image_path)?, resolution, resolution)
    }
}

/// How a dataset is cut into batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub batch_size: usize,
    pub shuffle: bool,
    /// Applied to training batches only.
    pub augment: AugmentSpec,
    pub normalization: Normalization,
    pub resolution: usize,
}

impl Default for BatchSpec {
    fn default() -> Self {
        BatchSpec {
            batch_size: 16,
            shuffle: true,
            augment: AugmentSpec::default(),
            normalization: Normalization::imagenet(),
            resolution: super::image::DEFAULT_RESOLUTION,
        }
    }
}

impl BatchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::contract("batch size must be positive"));
        }
        if self.resolution == 0 {
            return Err(Error::contract("resolution must be positive"));
        }
        self.normalization.validate()
    }

    /// The same spec with shuffling and augmentation switched off.
    pub fn for_eval(&self) -> BatchSpec {
        BatchSpec {
            shuffle: false,
            augment: AugmentSpec::NONE,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    /// `[N, 3, R, R]`, normalized.
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    /// Dataset positions of the samples, in batch order.
    pub indices: Vec<usize>,
}

/// The sample order and augmentation seeds for one epoch.
///
/// Planning draws every random number up front, so batches can be
/// materialised in any order (or on another thread) with identical results.
#[derive(Debug, Clone)]
pub struct EpochPlan {
    chunks: Vec<Vec<usize>>,
    seeds: Vec<u64>,
    train: bool,
}

impl EpochPlan {
    /// `train` enables augmentation and shuffling per `spec`.
    pub fn new(len: usize, spec: &BatchSpec, train: bool, rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        let mut order: Vec<usize> = (0..len).collect();
        if train && spec.shuffle {
            order.shuffle(rng);
        }
        let chunks: Vec<Vec<usize>> = order.chunks(spec.batch_size).map(<[usize]>::to_vec).collect();
        let seeds = chunks.iter().map(|_| rng.gen()).collect();
        Ok(EpochPlan { chunks, seeds, train })
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn batch_sizes(&self) -> Vec<usize> {
        self.chunks.iter().map(Vec::len).collect()
    }

    pub fn indices(&self, batch: usize) -> &[usize] {
        &self.chunks[batch]
    }

    pub fn materialize(&self, batch: usize, data: &dyn Dataset, spec: &BatchSpec) -> Result<Batch> {
        let idx = &self.chunks[batch];
        let r = spec.resolution;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seeds[batch]);
        let mut values = Vec::with_capacity(idx.len() * 3 * r * r);
        for &i in idx {
            let mut img = data.image(i, r)?;
            if self.train {
                img = augment(&img, &spec.augment, &mut rng);
            }
            values.extend(normalize_values(&img.data, r * r, &spec.normalization));
        }
        Ok(Batch {
            images: Tensor::from_vec(values, &[idx.len(), 3, r, r])?,
            labels: idx.iter().map(|&i| data.label(i)).collect(),
            indices: idx.clone(),
        })
    }
}

/// Prepares all batches of an epoch for `data`.
pub fn make_batches(data: &dyn Dataset, spec: &BatchSpec, train: bool, rng: &mut ChaCha8Rng) -> Result<Vec<Batch>> {
    let plan = EpochPlan::new(data.len(), spec, train, rng)?;
    (0..plan.len()).map(|b| plan.materialize(b, data, spec)).collect()
}

/// Streams the batches of `plan` to `consume` in order, preparing up to
/// `lookahead` batches ahead on a worker thread.
///
/// Stops at the first error from either side.
pub fn for_each_batch(
    plan: &EpochPlan,
    data: &dyn Dataset,
    spec: &BatchSpec,
    lookahead: usize,
    mut consume: impl FnMut(usize, Batch) -> Result<()>,
) -> Result<()> {
    if lookahead == 0 {
        for b in 0..plan.len() {
            consume(b, plan.materialize(b, data, spec)?)?;
        }
        return Ok(());
    }
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::sync_channel::<Result<Batch>>(lookahead);
        scope.spawn(move || {
            for b in 0..plan.len() {
                let item = plan.materialize(b, data, spec);
                let failed = item.is_err();
                // the receiver hangs up early when the consumer fails
                if tx.send(item).is_err() || failed {
                    break;
                }
            }
        });
        for (b, item) in rx.iter().enumerate() {
            consume(b, item?)?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(n: usize) -> InMemoryDataset {
        let mut d = InMemoryDataset::new();
        for i in 0..n {
            d.push(format!("s{i}"), RgbImage::new(2, 2, vec![i as f32 / n as f32; 12]).unwrap(), i % 3);
        }
        d
    }

    fn spec(batch_size: usize) -> BatchSpec {
        BatchSpec {
            batch_size,
            resolution: 2,
            normalization: Normalization::IDENTITY,
            ..BatchSpec::default()
        }
    }

    #[test]
    fn ten_samples_by_four() {
        let d = dataset(10);
        let batches = make_batches(&d, &spec(4), true, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(batches.iter().map(|b| b.labels.len()).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut seen: Vec<usize> = batches.iter().flat_map(|b| b.indices.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert_eq!(batches[2].images.shape(), &[2, 3, 2, 2]);
    }

    #[test]
    fn eval_batches_keep_order_and_pixels() {
        let d = dataset(5);
        let batches = make_batches(&d, &spec(2).for_eval(), false, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(batches[0].indices, vec![0, 1]);
        assert_eq!(batches[0].images.data()[12], 0.2);
    }

    #[test]
    fn prefetch_matches_direct() {
        let d = dataset(9);
        let s = spec(4);
        let plan = EpochPlan::new(d.len(), &s, true, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let direct: Vec<Batch> = (0..plan.len()).map(|b| plan.materialize(b, &d, &s).unwrap()).collect();
        let mut streamed = Vec::new();
        for_each_batch(&plan, &d, &s, 2, |_, b| {
            streamed.push(b);
            Ok(())
        })
        .unwrap();
        assert_eq!(streamed.len(), direct.len());
        for (a, b) in streamed.iter().zip(&direct) {
            assert_eq!(a.images, b.images);
            assert_eq!(a.indices, b.indices);
        }
    }

    #[test]
    fn consumer_error_stops_stream() {
        let d = dataset(9);
        let s = spec(1);
        let plan = EpochPlan::new(d.len(), &s, false, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut calls = 0;
        let r = for_each_batch(&plan, &d, &s, 1, |_, _| {
            calls += 1;
            Err(Error::contract("stop"))
        });
        assert!(r.is_err());
        assert_eq!(calls, 1);
    }

    #[test]
    fn zero_batch_size_rejected() {
        assert!(EpochPlan::new(3, &spec(0), true, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn select_by_ids() {
        let d = dataset(4);
        let s = d.select(&["s3".into(), "s1".into()]).unwrap();
        assert_eq!(s.labels(), &[0, 1]);
        assert!(d.select(&["nope".into()]).is_err());
    }
}
