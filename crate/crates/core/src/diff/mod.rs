//! Dense tensors with tape-based reverse-mode differentiation.
//!
//! Every forward op appends to a [`Tape`]; [`Tape::backward`] walks the
//! tape once in reverse. All reductions run sequentially in ascending index
//! order, so a forward pass is bitwise reproducible for identical inputs.

mod tape;
mod tensor;

pub use tape::{Gradients, Tape, Var};
pub use tensor::{Real, Tensor};

pub(crate) use tape::sigmoid;

/// Negative-side slope used by the attention scores unless configured otherwise.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;
