//! Datasets: IDX loading, synthetic generation, client partitioning and
//! per-round subsampling.

mod dataset;
pub mod idx;
mod partition;
mod synthetic;

pub use dataset::Dataset;
pub use idx::{load_idx, write_idx};
pub use partition::{
    partition, partition_indices, round_subsample, round_subsample_indices, subsample_size, PartitionScheme,
    PartitionSpec, MAX_SKEW_RETRIES,
};
pub use synthetic::{gen_synthetic, synthetic_templates, SYNTHETIC_NOISE_STD};
