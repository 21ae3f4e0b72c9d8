//! Neural-network building blocks with hand-written forward and backward
//! passes.
//!
//! Everything operates on [`Batch`](crate::tensor::Batch)es of `h x w x c`
//! tensors and is generic
//! over the scalar type: production code runs the `f32` instantiation, the
//! gradient-verification suite runs the same kernels at `f64` where central
//! finite differences are trustworthy.
//!
//! The pieces, in the order a forward pass uses them:
//!
//! * [`SeparableConv2d`] — 3x3 depthwise convolution (zero "same" padding, no
//!   bias) followed by a 1x1 pointwise convolution with bias; stride 1 or 2.
//! * [`BatchNorm`] — per-channel batch normalization with running statistics
//!   and an inference-time fold into the preceding conv
//!   ([`fold_batch_norm`]).
//! * [`leaky_relu`] / [`leaky_relu_backward`] — elementwise activation.
//! * [`upsample2x`] / [`upsample2x_backward`] — nearest-neighbor 2x upscale.
//! * [`concat()`] / [`concat_backward`] — channel concatenation for skip
//!   connections.
//! * [`sigmoid`] and the binary cross-entropy losses ([`bce_loss`],
//!   [`bce_with_logits`]) for the multi-label pixel head.
//!
//! Every `*_backward` is the exact adjoint of its forward; the test suite
//! checks each one against central finite differences at `f64`.

mod common;
mod conv;
mod norm;

pub use common::{
    bce_loss, bce_with_logits, concat, concat_backward, leaky_relu, leaky_relu_backward,
    sigmoid, sigmoid_backward, upsample2x, upsample2x_backward, BCE_CLAMP,
};
pub use conv::{fold_batch_norm, ConvCache, SeparableConv2d, SeparableConvGrads};
pub use norm::{BatchNorm, BnCache, BnGrads, BN_EPSILON, BN_MOMENTUM};

/// Default negative slope of the leaky rectifier.
pub const DEFAULT_LEAKY_ALPHA: f64 = 0.01;
