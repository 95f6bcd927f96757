use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::GradientBank;

pub const DEFAULT_RATIO_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixMode {
    /// Two core backward passes every step; ratio from the current batch.
    Exact,
    /// Ratio refreshed every `ratio_refresh_period` steps; a single fused
    /// core backward pass in between.
    Cached,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixConfig {
    pub alpha: f64,
    pub mode: MixMode,
    pub ratio_refresh_period: usize,
    /// The auxiliary term is dropped when `a_s < ratio_floor · a_g`.
    pub ratio_floor: f64,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            mode: MixMode::Exact,
            ratio_refresh_period: 50,
            ratio_floor: DEFAULT_RATIO_FLOOR,
        }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.ratio_refresh_period < 1 {
            return Err(Error::Config(
                "ratio_refresh_period must be at least 1".into(),
            ));
        }
        if !(self.ratio_floor >= 0.0 && self.ratio_floor.is_finite()) {
            return Err(Error::Config(format!(
                "invalid ratio_floor {}",
                self.ratio_floor
            )));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha {alpha} outside (0, 1]")))
    }
}

/// Sum of absolute values over every entry of the bank.
pub fn l1_norm(bank: &GradientBank) -> f64 {
    bank.l1_norm()
}

/// The balancing ratio `a_g / a_s`, or `None` when the auxiliary gradient is
/// too small relative to the main one to be rescaled safely.
pub fn balance_ratio(a_g: f64, a_s: f64, ratio_floor: f64) -> Option<f64> {
    if a_s == 0.0 || a_s < ratio_floor * a_g {
        None
    } else {
        Some(a_g / a_s)
    }
}

#[derive(Debug, Clone)]
pub struct Mixed {
    pub grad: GradientBank,
    /// Ratio applied to the auxiliary gradient; `None` when it was dropped.
    pub ratio: Option<f64>,
    /// L1 norm of the applied auxiliary contribution `(1-α)·r·grad_hs`.
    pub s_term_l1: f64,
}

/// `α·grad_hg + (1-α)·r·grad_hs` with `r = ‖grad_hg‖₁ / ‖grad_hs‖₁` unless
/// `ratio_override` supplies it.
pub fn mix(
    grad_hg: &GradientBank,
    grad_hs: &GradientBank,
    alpha: f64,
    ratio_override: Option<f64>,
) -> Result<GradientBank> {
    Ok(mix_with_floor(grad_hg, grad_hs, alpha, ratio_override, DEFAULT_RATIO_FLOOR)?.grad)
}

pub fn mix_with_floor(
    grad_hg: &GradientBank,
    grad_hs: &GradientBank,
    alpha: f64,
    ratio_override: Option<f64>,
    ratio_floor: f64,
) -> Result<Mixed> {
    check_alpha(alpha)?;
    if !grad_hg.is_congruent(grad_hs) {
        return Err(Error::Shape(
            "mixed gradient banks are not congruent".into(),
        ));
    }
    let ratio = match ratio_override {
        Some(r) => Some(r),
        None => {
            let (a_g, a_s) = (grad_hg.l1_norm(), grad_hs.l1_norm());
            let r = balance_ratio(a_g, a_s, ratio_floor);
            if r.is_none() {
                log::debug!("auxiliary gradient dropped: a_g={a_g:e}, a_s={a_s:e}");
            }
            r
        }
    };
    if alpha == 1.0 {
        return Ok(Mixed {
            grad: grad_hg.clone(),
            ratio,
            s_term_l1: 0.0,
        });
    }
    match ratio {
        Some(r) => {
            let weight = (1.0 - alpha) * r;
            Ok(Mixed {
                grad: GradientBank::linear_combination(alpha, grad_hg, weight, grad_hs)?,
                ratio,
                s_term_l1: grad_hs.l1_norm() * weight,
            })
        }
        None => Ok(Mixed {
            grad: grad_hg.scaled(alpha),
            ratio,
            s_term_l1: 0.0,
        }),
    }
}

/// The auxiliary term `(1-α)·(a_g/a_s)·grad_hs` on its own, or `None` when
/// it would be dropped.
pub fn s_term(
    grad_hg: &GradientBank,
    grad_hs: &GradientBank,
    alpha: f64,
    ratio_floor: f64,
) -> Result<Option<GradientBank>> {
    check_alpha(alpha)?;
    if !grad_hg.is_congruent(grad_hs) {
        return Err(Error::Shape(
            "mixed gradient banks are not congruent".into(),
        ));
    }
    Ok(
        balance_ratio(grad_hg.l1_norm(), grad_hs.l1_norm(), ratio_floor)
            .map(|r| grad_hs.scaled((1.0 - alpha) * r)),
    )
}
