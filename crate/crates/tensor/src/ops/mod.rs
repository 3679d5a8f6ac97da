//! Stateless forward/backward kernels.

mod conv;
mod dense;
mod kernels;
mod pool;

pub use conv::{conv_backward, conv_forward, deconv_backward, deconv_forward, ConvGeometry, ConvGrads};
pub use dense::{dense_backward, dense_forward, relu_backward, relu_forward, DenseGrads};
pub use pool::{maxpool2_backward, maxpool2_forward, upsample2_backward, upsample2_forward, Pooled};
