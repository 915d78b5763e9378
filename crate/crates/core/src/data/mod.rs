//! Label ingestion, stratified splitting and image batching.

pub mod batch;
pub mod image;
pub mod labels;
pub mod split;
pub mod synthetic;

pub use batch::{for_each_batch, make_batches, Batch, BatchSpec, Dataset, EpochPlan, FileDataset, InMemoryDataset};
pub use image::{
    augment, load_image, normalize, resize_bilinear, AugmentSpec, Normalization, RgbImage, IMAGENET_MEAN,
    IMAGENET_STD,
};
pub use labels::{parse_labels, resolve_images, ClassId, LabelRecord, SampleRecord, CLASS_NAMES};
pub use split::{apportion, stratified_split, ClassSplit, SplitManifest, DEFAULT_TEST_FRACTION};
pub use synthetic::ShapesTask;
