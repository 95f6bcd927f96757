//! Dense layers, parameter banks and losses.
//!
//! A [`Network`] runs a forward pass that records an [`ActivationTape`]; the
//! tape is later consumed by exactly one backward pass. Keeping the tape
//! separate from the network lets two heads backpropagate into one shared core
//! forward pass.

mod bank;
mod layer;
pub mod loss;
mod network;
mod tensor;

pub use bank::{GradientBank, ParamBank, ParamGroup};
pub use layer::{sigmoid, LayerSpec};
pub use loss::{bce_loss, mse_loss, softmax, softmax_ce_loss};
pub use network::{build_network, ActivationTape, Mode, Network, NetworkState};
pub use tensor::Tensor2;
