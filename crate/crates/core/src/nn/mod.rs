//! Minimal feed-forward engine: dense, convolution and max-pool layers with
//! exact reverse-mode gradients.

mod gemm;
mod layers;
mod loss;
mod network;

pub(crate) use layers::ConvGeometry;
pub use layers::{
    format_architecture, parse_architecture, Activation, Conv2d, Dense, Layer, LayerSpec, MaxPool2d,
};
pub use loss::{argmax_rows, correct_count, cross_entropy, ramp_loss};
pub use network::{check_shapes, ForwardCache, Gradients, LayerParams, Network};

use crate::error::Result;
use crate::linalg::Tensor;

/// Linear part of a convolution layer as a map on flattened inputs, together
/// with its adjoint. `kernel` may differ from the layer's own kernel (e.g. a
/// difference of kernels) but must have the same shape. Also returns the
/// input length and the number of output positions.
#[allow(clippy::type_complexity)]
pub fn conv_operator<'a>(
    conv: &Conv2d,
    input_shape: &[usize],
    kernel: &'a Tensor,
) -> Result<(
    impl Fn(&[f64]) -> Vec<f64> + 'a,
    impl Fn(&[f64]) -> Vec<f64> + 'a,
    usize,
    usize,
)> {
    let geo = ConvGeometry::new(conv, input_shape)?;
    let k = kernel.data();
    Ok((
        move |x: &[f64]| geo.apply_linear(k, x),
        move |y: &[f64]| geo.apply_adjoint(k, y),
        geo.in_len(),
        geo.positions(),
    ))
}
