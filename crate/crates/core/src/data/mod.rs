//! Dataset ingestion and preprocessing: IDX files, centering with a bias
//! row, one-hot targets, mini-batching and synthetic problems.

mod batch;
mod idx;
mod prepare;
mod synth;

pub use batch::{batch_iterator, BatchOrder};
pub use idx::{
    load_idx_images, load_idx_labels, write_idx_images, write_idx_labels, IMAGES_MAGIC,
    LABELS_MAGIC,
};
pub use prepare::{feature_mean, one_hot, prepare, LabelEncoding, PreparedDataset, RawDataset};
pub use synth::{make_linear_dataset, make_staircase_dataset};
