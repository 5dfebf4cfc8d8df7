//! Flood-filling network segmentation of volumetric images.
//!
//! A recurrent 3D convolutional predictor grows one object mask at a time
//! from seed voxels; objects are assembled into a label volume and scored
//! against ground-truth skeletons.

pub mod convnet;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod synth;
pub mod training;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{BoxRegion, Dims, Grid, ImageVolume, Position, ProbabilityCanvas, SegmentationVolume};
