//! Synthetic set-learning tasks with exact targets, and the JSONL dataset
//! format they are stored in.

mod dataset;
mod gaussian;
mod sets;

pub use dataset::{LabeledSetDataset, SetMeta, Target};
pub use gaussian::{
    gaussian_entropy, gaussian_mutual_information, gen_population_task, random_covariance,
    rotation, total_correlation, GaussianKind, GaussianTaskSpec,
};
pub use sets::{digit_of, gen_digit_sum, gen_outlier_sets, DIGIT_WIDTH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for set `index`: stream `index + 1` of the task seed, so sets
/// can be produced independently and in any order. Stream 0 is reserved
/// for task-level draws.
pub fn set_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Generator for quantities shared by every set of a task.
pub fn task_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
