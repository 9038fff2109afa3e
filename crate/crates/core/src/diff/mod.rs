//! Dense tensor compute with reverse-mode differentiation.
//!
//! Everything is a row-major 2-D matrix of `f64`. Scalars are `1 × 1`,
//! per-node vectors are `n × 1`. Graph sparsity is expressed through
//! [`Tape::gather_rows`] and [`Tape::scatter_add_rows`] over edge lists.

mod adam;
mod loss;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{cross_entropy, mse, soft_cross_entropy};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
