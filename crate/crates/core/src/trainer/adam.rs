use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{GradientBank, ParamBank};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid Adam hyperparameters {self:?}"
            )))
        }
    }
}

/// Moment estimates for one parameter bank.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: ParamBank,
    v: ParamBank,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamBank, config: AdamConfig) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut ParamBank,
    grads: &GradientBank,
    state: &mut AdamState,
) -> Result<()> {
    if !params.is_congruent(grads) || !params.is_congruent(&state.m) {
        return Err(Error::Shape(
            "Adam: parameters, gradients and moments differ in shape".into(),
        ));
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);

    let moments = state.m.values_mut().zip(state.v.values_mut());
    for ((p, &g), (m, v)) in params.values_mut().zip(grads.values()).zip(moments) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ParamGroup, Tensor2};

    fn scalar(v: f64) -> ParamBank {
        ParamBank::new(vec![ParamGroup {
            weight: Tensor2::new(1, 1, vec![v]).unwrap(),
            bias: Vec::new(),
        }])
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(0.0);
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(&p, cfg);
        adam_step(&mut p, &scalar(1.0), &mut st).unwrap();
        let want = -0.1 / (1.0 + 1e-8);
        assert!((p.flatten()[0] - want).abs() < 1e-15);
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = scalar(1.25);
        let mut st = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &scalar(0.0), &mut st).unwrap();
        assert_eq!(p.flatten(), vec![1.25]);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut p = scalar(0.0);
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(&p, cfg);
        let mut steps = 0;
        while (p.flatten()[0] - 3.0).abs() >= 1e-3 {
            let x = p.flatten()[0];
            adam_step(&mut p, &scalar(2.0 * (x - 3.0)), &mut st).unwrap();
            steps += 1;
            assert!(steps <= 5_000, "no convergence, p = {x}");
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut p = scalar(0.0);
        let mut st = AdamState::new(&p, AdamConfig::default());
        assert!(adam_step(&mut p, &ParamBank::default(), &mut st).is_err());
    }
}
