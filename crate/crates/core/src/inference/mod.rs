//! The flood-filling engine: FoV movement with a position queue and a
//! reduced-resolution visited set, the split bias, seed selection, and
//! multi-object assembly.

mod assemble;
mod engine;
mod movement;
mod predictor;
pub mod seeds;

pub use assemble::{
    segment_volume, segment_with_seeds, AssemblyOptions, InferenceLog, SeedOutcome, SeedRecord, VolumeSegmentation,
};
pub use engine::{evaluation_bound, segment_object, InferenceState, ObjectResult};
pub use movement::{apply_split_bias, find_new_positions, reduced_cell, Candidate, MovementPolicy};
pub use predictor::{ConstantPredictor, CountingPredictor, GroundTruthOracle, MaskPredictor, PatchContext};
pub use seeds::{euclidean_distance_transform, seed_points, sobel_magnitude, Seed, SeedConfig, SeedList};
