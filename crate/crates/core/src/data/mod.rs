//! Synthetic regression data, MNIST ingestion and per-worker partitioning.

pub mod digits;
pub mod idx;
pub mod mnist;
pub mod synthetic;

pub use idx::{load_idx, parse_idx, IdxFile};
pub use mnist::{partition_mnist, LabeledImages, Partition};
pub use synthetic::{
    gen_synthetic, least_squares, population_mse, regression_curvature, SyntheticRegressionSpec,
};

/// Indices within the `data` stream family. Worker `i` owns index `i`; the
/// shared draws below sit far above any worker count.
pub mod stream_index {
    pub const MODEL_INIT: u64 = 1 << 40;
    pub const TEST_SET: u64 = (1 << 40) + 1;
    pub const PARTITION: u64 = (1 << 40) + 2;
    pub const FALLBACK_TRAIN: u64 = (1 << 40) + 3;
    pub const FALLBACK_TEST: u64 = (1 << 40) + 4;
}
