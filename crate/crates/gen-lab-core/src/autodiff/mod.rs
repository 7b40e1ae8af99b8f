//! Reverse-mode autodiff over dense tensors, MLP building blocks, Adam, and
//! the finite-difference gradient oracle used to verify all of it.

mod adam;
mod checkpoint;
mod gradcheck;
mod mlp;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{write_atomic, Checkpoint, CheckpointError, ParamRecord, CHECKPOINT_FORMAT};
pub use gradcheck::{finite_diff_grad, max_rel_err, REL_ERR_FLOOR};
pub use mlp::{Mlp, MlpVars};
pub use tape::{AutodiffError, DistanceMetric, Gradients, Tape, Var};
pub use tensor::{matmul, transpose, Tensor};
