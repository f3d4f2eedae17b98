//! Minimal neural-network engine: tensors, layers with hand-written
//! backward passes, Adam, gradient checking and checkpoints.

pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod lstm;
pub mod param;
pub mod sequential;
pub mod tensor;

pub use activation::{sigmoid, softmax, Activation};
pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use conv::{Conv2d, MaxPool2};
pub use dense::Dense;
pub use dropout::{Dropout, Mode};
pub use gradcheck::{check_gradients, GradCheckConfig, GradCheckReport};
pub use lstm::LstmCell;
pub use param::{clip_grad_norm, Param, Parameterized};
pub use sequential::{Layer, Sequential};
pub use tensor::Tensor;
