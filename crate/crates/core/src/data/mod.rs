//! Dataset discovery, decoding, preprocessing, augmentation and batching.

pub mod augment;
pub mod image;
pub mod loader;
pub mod manifest;
pub mod stats;

pub use augment::{augment, AugConfig};
pub use image::{decode_image, load_image, normalize, resize_center_crop, unnormalize, Image};
pub use loader::{batch_plan, Dataset, Preprocess, SampleBatch, DEFAULT_BATCH_SIZE};
pub use manifest::{class_index, scan_dataset, Manifest, Record, Split, CLASS_NAMES};
pub use stats::{compute_stats, stats_of_images, Stats};
