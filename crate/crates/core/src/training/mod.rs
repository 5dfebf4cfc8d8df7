//! Example extraction, class rebalancing and the SGD training loop.

mod example;
mod rebalance;
mod trainer;

pub use example::{example_dims, extract_example, ExampleSampler, TrainingExample};
pub use rebalance::{RebalancedStream, RebalancingBins, BIN_BOUNDARIES};
pub use trainer::{
    checkpoint_file_name, train_batch, train_on_example, training_loop, CheckpointEvaluator, CheckpointRecord,
    HeldOutEvaluator, LockstepBatch, TrainingConfig, TrainingOutcome,
};
