use std::io::Write;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::mix::{balance_ratio, mix_with_floor, MixConfig, MixMode};
use super::model::{DraweredModel, TrainRng};
use crate::drawers::DrawerTargets;
use crate::error::{Error, Result};
use crate::nn::Tensor2;

/// Per-step diagnostics, one NDJSON record each when logging is enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: u64,
    pub loss_g: f64,
    pub loss_s: f64,
    /// `‖grad_hg‖₁`; absent on fused steps, which never form it.
    pub a_g: Option<f64>,
    /// `‖grad_hs‖₁`; absent on fused steps.
    pub a_s: Option<f64>,
    /// Ratio applied to the auxiliary core gradient (`None` when dropped).
    pub ratio: Option<f64>,
    /// L1 norm of the auxiliary contribution actually applied to `h`.
    pub s_term_l1: Option<f64>,
    pub fused: bool,
}

/// Optimizer state for a [`DraweredModel`]: one Adam state per part, the
/// mixing rule and the cached ratio.
#[derive(Debug, Clone)]
pub struct Trainer {
    mix: MixConfig,
    adam_h: AdamState,
    adam_g: AdamState,
    adam_s: Option<AdamState>,
    cached_ratio: Option<Option<f64>>,
    steps: u64,
}

impl Trainer {
    pub fn new(model: &DraweredModel, mix: MixConfig, adam: AdamConfig) -> Result<Self> {
        mix.validate()?;
        adam.validate()?;
        Ok(Self {
            mix,
            adam_h: AdamState::new(model.core().params(), adam),
            adam_g: AdamState::new(model.head_g().params(), adam),
            adam_s: model.head_s().map(|s| AdamState::new(s.params(), adam)),
            cached_ratio: None,
            steps: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn mix_config(&self) -> &MixConfig {
        &self.mix
    }

    fn refresh_due(&self) -> bool {
        self.cached_ratio.is_none()
            || self
                .steps
                .is_multiple_of(self.mix.ratio_refresh_period as u64)
    }

    /// One optimization step on a mini-batch.
    ///
    /// `h` receives the mixed gradient, `g` and `s` their own head gradients.
    /// Without an auxiliary head this is a plain regression step.
    pub fn train_step(
        &mut self,
        model: &mut DraweredModel,
        batch: &Tensor2,
        y: &[f64],
        labels: Option<&DrawerTargets>,
        rng: &mut TrainRng,
    ) -> Result<StepStats> {
        let alpha = self.mix.alpha;
        let has_aux = model.head_s().is_some();
        let fused = has_aux && self.mix.mode == MixMode::Cached && !self.refresh_due();

        let (grad_g, grad_s, grad_h, stats) = if fused {
            let ratio = self.cached_ratio.flatten();
            let s_weight = ratio.map_or(0.0, |r| (1.0 - alpha) * r);
            let out = model.fused_backward(batch, y, labels, alpha, s_weight, rng)?;
            let stats = StepStats {
                step: self.steps,
                loss_g: out.loss_g,
                loss_s: out.loss_s,
                a_g: None,
                a_s: None,
                ratio,
                s_term_l1: None,
                fused: true,
            };
            (out.grad_g, out.grad_s, out.grad_h, stats)
        } else {
            let out = model.dual_backward(batch, y, labels, rng)?;
            let a_g = out.grad_hg.l1_norm();
            let a_s = out.grad_hs.l1_norm();
            let (grad_h, ratio, s_term_l1) = if has_aux {
                let mixed = mix_with_floor(
                    &out.grad_hg,
                    &out.grad_hs,
                    alpha,
                    None,
                    self.mix.ratio_floor,
                )?;
                (mixed.grad, mixed.ratio, mixed.s_term_l1)
            } else {
                (out.grad_hg, None, 0.0)
            };
            if self.mix.mode == MixMode::Cached {
                self.cached_ratio = Some(balance_ratio(a_g, a_s, self.mix.ratio_floor));
            }
            let stats = StepStats {
                step: self.steps,
                loss_g: out.loss_g,
                loss_s: out.loss_s,
                a_g: Some(a_g),
                a_s: Some(a_s),
                ratio,
                s_term_l1: Some(s_term_l1),
                fused: false,
            };
            (out.grad_g, out.grad_s, grad_h, stats)
        };

        if !(stats.loss_g.is_finite() && stats.loss_s.is_finite()) {
            return Err(Error::NonFinite(format!("loss at step {}", self.steps)));
        }

        adam_step(model.core_mut().params_mut(), &grad_h, &mut self.adam_h)?;
        adam_step(model.head_g_mut().params_mut(), &grad_g, &mut self.adam_g)?;
        if let (Some(head_s), Some(state)) = (model.head_s_mut(), self.adam_s.as_mut()) {
            adam_step(head_s.params_mut(), &grad_s, state)?;
        }
        self.steps += 1;
        Ok(stats)
    }
}

/// Writes step statistics as newline-delimited JSON.
pub struct StepLog<W: Write> {
    out: W,
}

impl<W: Write> StepLog<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn record(&mut self, stats: &StepStats) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, stats)?;
        self.out.write_all(b"\n")
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
