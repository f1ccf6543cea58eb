//! Minimal reverse-mode automatic differentiation over `f64` tensors.
//!
//! A [`Tape`] records every operation of a forward pass as a node; calling
//! [`Tape::backward`] on a scalar loss walks the nodes once in reverse and
//! accumulates gradients for every tensor that requires them. The primitive
//! set is exactly what the network needs: matrix multiplication, elementwise
//! arithmetic, shape surgery, softmax / log-softmax, layer normalisation,
//! GELU, embedding-style row gathering and reductions.
//!
//! Parameters live outside the tape in a [`ParamStore`] so that one set of
//! weights can drive many tapes (one per sample, per batch, per decode step).
//! [`AdamW`] updates the store in place; [`checkpoint`] round-trips store and
//! optimizer state through a self-describing binary file.

mod checkpoint;
mod optim;
mod store;
mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use optim::{AdamW, AdamWConfig};
pub use store::{ParamId, ParamStore};
pub use tape::{BackwardStats, Tape, TensorId};
