//! Regression networks trained with an auxiliary "drawer" classification head.
//!
//! The regression network `f = g ∘ h` is extended during training with a second
//! head `s` on the last hidden layer of `h`. The head `s` learns which
//! quantile-defined interval of the target range ("drawer") each example falls
//! into. Gradients flowing into `h` from both heads are mixed after rescaling
//! the auxiliary one to the L1 norm of the regression one. At evaluation time
//! only `g ∘ h` runs.

pub mod data;
pub mod drawers;
mod error;
pub mod harness;
pub mod nn;
pub mod trainer;

pub use error::{Error, Result};
