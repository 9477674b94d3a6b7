//! Dense `f64` tensors, reverse-mode gradients, Adam and checkpoints.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod graph;
mod matrix;
pub mod nn;
mod param;

pub use adam::{adam_step, AdamConfig};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Manifest, ManifestEntry};
pub use graph::{Graph, Var};
pub(crate) use matrix::softmax_in_place;
pub use matrix::{layer_norm, matmul, matmul_at, matmul_bt, softmax_rows, Matrix, LAYER_NORM_EPS};
pub use param::{ParamId, ParamStore, Parameter};
