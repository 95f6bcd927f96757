//! Joint training of the regression head and the auxiliary drawer head.
//!
//! Each step runs one forward pass through the shared core `h`, then either
//! two separate backward passes into `h` (exact mode) or, between ratio
//! refreshes, a single fused one (cached mode). The auxiliary core gradient is
//! rescaled to the L1 norm of the regression core gradient before mixing:
//!
//! `grad_h = α·grad_hg + (1-α)·(‖grad_hg‖₁/‖grad_hs‖₁)·grad_hs`

mod adam;
mod mix;
mod model;
mod step;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mix::{
    balance_ratio, l1_norm, mix, mix_with_floor, s_term, MixConfig, MixMode, Mixed,
    DEFAULT_RATIO_FLOOR,
};
pub use model::{DraweredModel, DualGrads, FusedGrads, ModelSpec, ModelState, TrainRng};
pub use step::{StepLog, StepStats, Trainer};
