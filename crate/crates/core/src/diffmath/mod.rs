//! Dense linear algebra with reverse-mode gradients, a stop-gradient
//! barrier, and Adam.

mod adam;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use tape::{cosine, Groups, NodeRef, Tape, COSINE_NORM_EPS};
pub use tensor::Tensor;
