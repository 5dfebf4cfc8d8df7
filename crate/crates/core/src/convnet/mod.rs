//! The flood-filling network: SAME 3D convolutions arranged as a stem, a
//! stack of full pre-activation residual modules and a logistic head, with
//! hand-written backpropagation and plain SGD.

mod checkpoint;
mod conv;
mod loss;
mod model;
mod tensor;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, load_checkpoint_for, parse_checkpoint, save_checkpoint};
pub use conv::{conv3d_same, conv3d_same_backward_input, conv3d_same_backward_params, ConvLayer};
pub use loss::{log_loss, soft_target_entropy, CLAMP, TARGET_OFF, TARGET_ON};
pub use model::{FfnModel, GradientSet, ModelSpec, ResidualModule, INPUT_CHANNELS, KERNEL};
pub use tensor::{Real, Tensor};
