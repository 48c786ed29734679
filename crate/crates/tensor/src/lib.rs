//! Dense f64 tensors with a recorded-graph reverse-mode autodiff engine,
//! the layers and optimizer the denoiser network needs, and the `CKMD`
//! checkpoint container.
//!
//! A [`Graph`] is single-writer: build the forward pass with its op methods,
//! call [`Graph::backward`] on a scalar loss, then read gradients off the
//! leaves. Separate graphs are fully independent.

pub mod adamw;
pub mod checkpoint;
mod error;
pub mod gradcheck;
mod graph;
pub mod init;
pub mod linalg;
mod tensor;

pub use adamw::{AdamWConfig, AdamWState, LrSchedule};
pub use error::{Result, TensorError};
pub use graph::{Graph, Var};
pub use tensor::Tensor;
