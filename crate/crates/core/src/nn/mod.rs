//! Minimal reverse-mode network kernel: layers, MSE, Adam, gradient checks
//! and the parameter container.

pub mod container;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod tensor;

pub use container::{LayerBlob, LayerKind, Persist};
pub use gradcheck::{check_params, gradient_check, relative_error};
pub use layers::{
    global_avg_pool, relu, sigmoid, softmax_channels, BatchNorm2d, BnStats, Conv2d, Dense, GlobalAvgPool, Layer,
    Relu, Sequential, Sigmoid, SoftmaxChannels,
};
pub use loss::mse_loss;
pub use optim::{Adam, LrSchedule};
pub use tensor::{Tensor, TensorGrad, Trainable};
