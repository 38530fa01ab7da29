//! Minimal numerical core for the forecasting networks: dense layers, the
//! LSTM cell, squared loss with exact gradients (backpropagation through
//! time), Adam, and a deterministic early-stopping training loop.

pub mod activation;
pub mod adam;
pub mod dense;
pub mod loss;
pub mod lstm;
pub mod network;
pub mod tensor;
pub mod train;

pub use activation::Activation;
pub use adam::{adam_step, AdamConfig, AdamState};
pub use dense::{dense_forward, DenseLayer};
pub use loss::mse_loss;
pub use lstm::{lstm_forward, lstm_step, LstmCell};
pub use network::{gradient_check, Axis, Branch, NetInput, Network};
pub use tensor::Tensor;
pub use train::{train, Dataset, EpochRecord, TrainConfig, TrainHistory};
