//! Dense tensors with a reverse-mode autodiff tape, the Adam optimiser and
//! the binary parameter checkpoint format.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod graph;
mod tensor;

pub use adam::{exponential_decay, AdamConfig, AdamState, StepOutcome};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use graph::{Gradients, Graph, NodeId};
pub use tensor::Tensor;
