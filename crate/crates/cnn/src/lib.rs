//! A minimal CNN for pose regression: valid convolutions, 2×2 max pooling,
//! fully connected layers and a linear output, trained with plain SGD.

mod activation;
pub mod checkpoint;
mod error;
pub mod layers;
mod network;
mod spec;

pub use activation::{activate, Activation};
pub use error::{Error, Result};
pub use layers::{conv_forward, maxpool_forward};
pub use network::{
    backward, extract_features, forward, loss, sgd_step, train, train_epoch, Cache, LayerParams, NetworkState,
    TrainOpts,
};
pub use spec::{LayerKind, LayerSpec, NetworkSpec, Shape};

pub use m2dl_core::{Matrix, Tensor4};
