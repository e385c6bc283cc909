//! Dense tensors, matrix views and the norms built on them.

mod norms;
mod spectral;
mod tensor;

pub use norms::{
    distance, frobenius_norm, mars_norm, matrix_norm, vector_norm, MatrixNorm, VectorNorm,
};
pub(crate) use norms::{l1, l2};
pub use spectral::{
    matrix_spectral_norm, power_iteration, spectral_norm, PowerIteration, SpectralEstimate,
};
pub use tensor::{MatrixView, Tensor};
