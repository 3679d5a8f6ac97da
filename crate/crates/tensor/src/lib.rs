//! Dense 4-d tensors and the small layer set needed by an encoder-decoder
//! action-value network: convolution, transposed convolution, 2x2 max-pool,
//! nearest-neighbour upsampling, fully connected and rectifier layers, with
//! exact reverse-mode gradients, an adaptive-moment optimizer, finite
//! difference checking and a binary checkpoint format.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod network;
pub mod ops;
pub mod optim;
pub mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, relative_error, Differentiable, GradCheckConfig};
pub use network::{Layer, LayerSpec, Network, SampleShape};
pub use ops::ConvGeometry;
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use tensor::{Scalar, Shape4, Tensor4};
