use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::drawers::{DrawerMode, DrawerTargets};
use crate::error::{Error, Result};
use crate::nn::{
    bce_loss, mse_loss, sigmoid, softmax, softmax_ce_loss, GradientBank, LayerSpec, Mode, Network,
    NetworkState, ParamBank, Tensor2,
};

/// Initialization streams. Each part draws from its own ChaCha stream so
/// adding or removing the auxiliary head never perturbs the others.
const CORE_INIT_STREAM: u64 = 1;
const HEAD_G_INIT_STREAM: u64 = 2;
const HEAD_S_INIT_STREAM: u64 = 3;
const CORE_DROPOUT_STREAM: u64 = 11;
const HEAD_G_DROPOUT_STREAM: u64 = 12;
const HEAD_S_DROPOUT_STREAM: u64 = 13;

/// Layer lists for the core `h` and the heads `g` and `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub core: Vec<LayerSpec>,
    pub head_g: Vec<LayerSpec>,
    #[serde(default)]
    pub head_s: Option<Vec<LayerSpec>>,
}

/// Dropout randomness, one stream per model part.
#[derive(Debug, Clone)]
pub struct TrainRng {
    pub core: ChaCha8Rng,
    pub head_g: ChaCha8Rng,
    pub head_s: ChaCha8Rng,
}

impl TrainRng {
    pub fn new(seed: u64) -> Self {
        let stream = |id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            core: stream(CORE_DROPOUT_STREAM),
            head_g: stream(HEAD_G_DROPOUT_STREAM),
            head_s: stream(HEAD_S_DROPOUT_STREAM),
        }
    }
}

/// A regression network `g ∘ h` with an optional auxiliary head `s` on the
/// output of `h`.
#[derive(Debug, Clone)]
pub struct DraweredModel {
    core: Network,
    head_g: Network,
    head_s: Option<Network>,
    mode: DrawerMode,
}

/// Output of [`DraweredModel::dual_backward`].
#[derive(Debug, Clone)]
pub struct DualGrads {
    pub grad_g: GradientBank,
    pub grad_s: GradientBank,
    pub grad_hg: GradientBank,
    pub grad_hs: GradientBank,
    pub loss_g: f64,
    pub loss_s: f64,
}

/// Output of [`DraweredModel::fused_backward`].
#[derive(Debug, Clone)]
pub struct FusedGrads {
    pub grad_g: GradientBank,
    pub grad_s: GradientBank,
    pub grad_h: GradientBank,
    pub loss_g: f64,
    pub loss_s: f64,
}

impl DraweredModel {
    pub fn build(spec: &ModelSpec, mode: DrawerMode, seed: u64) -> Result<Self> {
        let core = Network::build(&spec.core, seed, CORE_INIT_STREAM)?;
        let head_g = Network::build(&spec.head_g, seed, HEAD_G_INIT_STREAM)?;
        let head_s = spec
            .head_s
            .as_deref()
            .map(|s| Network::build(s, seed, HEAD_S_INIT_STREAM))
            .transpose()?;
        Self::from_parts(core, head_g, head_s, mode)
    }

    pub fn from_parts(
        core: Network,
        head_g: Network,
        head_s: Option<Network>,
        mode: DrawerMode,
    ) -> Result<Self> {
        let z = core
            .output_dim()
            .ok_or_else(|| Error::Spec("core has no fixed output width".into()))?;
        if head_g.input_dim() != Some(z) {
            return Err(Error::Spec(format!(
                "head g must take the core's {z} outputs"
            )));
        }
        if head_g.output_dim() != Some(1) {
            return Err(Error::Spec("head g must produce exactly one output".into()));
        }
        if let Some(s) = &head_s {
            if s.input_dim() != Some(z) {
                return Err(Error::Spec(format!(
                    "head s must take the core's {z} outputs"
                )));
            }
            if s.output_dim().is_none() {
                return Err(Error::Spec("head s has no fixed output width".into()));
            }
        }
        Ok(Self {
            core,
            head_g,
            head_s,
            mode,
        })
    }

    pub fn core(&self) -> &Network {
        &self.core
    }

    pub fn head_g(&self) -> &Network {
        &self.head_g
    }

    pub fn head_s(&self) -> Option<&Network> {
        self.head_s.as_ref()
    }

    pub fn core_mut(&mut self) -> &mut Network {
        &mut self.core
    }

    pub fn head_g_mut(&mut self) -> &mut Network {
        &mut self.head_g
    }

    pub fn head_s_mut(&mut self) -> Option<&mut Network> {
        self.head_s.as_mut()
    }

    pub fn mode(&self) -> DrawerMode {
        self.mode
    }

    /// The regression model without its auxiliary head.
    pub fn without_aux(&self) -> Self {
        Self {
            core: self.core.clone(),
            head_g: self.head_g.clone(),
            head_s: None,
            mode: self.mode,
        }
    }

    fn check_labels(&self, rows: usize, labels: Option<&DrawerTargets>) -> Result<()> {
        let Some(s) = &self.head_s else {
            return Ok(());
        };
        let width = s.output_dim().expect("checked at construction");
        let labels =
            labels.ok_or_else(|| Error::Config("auxiliary head needs drawer labels".into()))?;
        if labels.rows() != rows {
            return Err(Error::Shape(format!(
                "{} label rows for a batch of {rows}",
                labels.rows()
            )));
        }
        match (labels, self.mode) {
            (DrawerTargets::Disjoint(c), DrawerMode::Disjoint) => {
                if let Some(&k) = c.iter().find(|&&k| k >= width) {
                    return Err(Error::Shape(format!(
                        "drawer index {k} for an auxiliary head of width {width}"
                    )));
                }
            }
            (DrawerTargets::Nested(t), DrawerMode::Nested) => {
                if t.cols() != width {
                    return Err(Error::Shape(format!(
                        "{} nested labels for an auxiliary head of width {width}",
                        t.cols()
                    )));
                }
            }
            _ => {
                return Err(Error::Config(format!(
                    "labels do not match the model's {} drawer mode",
                    self.mode
                )))
            }
        }
        Ok(())
    }

    fn aux_loss(logits: &Tensor2, labels: &DrawerTargets) -> Result<(f64, Tensor2)> {
        match labels {
            DrawerTargets::Disjoint(c) => softmax_ce_loss(logits, c),
            DrawerTargets::Nested(t) => bce_loss(logits, t),
        }
    }

    /// One shared forward pass through `h`, then separate backward passes for
    /// the regression loss (through `g`) and the auxiliary loss (through `s`).
    ///
    /// Without an auxiliary head `grad_s` is empty, `grad_hs` is zero and
    /// `loss_s` is zero.
    pub fn dual_backward(
        &self,
        batch: &Tensor2,
        y: &[f64],
        labels: Option<&DrawerTargets>,
        rng: &mut TrainRng,
    ) -> Result<DualGrads> {
        self.check_labels(batch.rows(), labels)?;
        let (z, tape_h) = self.core.forward(batch, Mode::Train, Some(&mut rng.core))?;

        let (pred, tape_g) = self
            .head_g
            .forward(&z, Mode::Train, Some(&mut rng.head_g))?;
        let (loss_g, d_pred) = mse_loss(&pred, y)?;
        let (grad_g, dz_g) = self.head_g.backward(tape_g, &d_pred)?;

        let Some(head_s) = &self.head_s else {
            let (grad_hg, _) = self.core.backward(tape_h, &dz_g)?;
            let grad_hs = grad_hg.zeros_like();
            return Ok(DualGrads {
                grad_g,
                grad_s: ParamBank::default(),
                grad_hg,
                grad_hs,
                loss_g,
                loss_s: 0.0,
            });
        };
        let labels = labels.expect("checked above");
        let (logits, tape_s) = head_s.forward_logits(&z, Mode::Train, Some(&mut rng.head_s))?;
        let (loss_s, d_logits) = Self::aux_loss(&logits, labels)?;
        let (grad_s, dz_s) = head_s.backward(tape_s, &d_logits)?;

        let (grad_hg, _) = self.core.backward(tape_h.clone(), &dz_g)?;
        let (grad_hs, _) = self.core.backward(tape_h, &dz_s)?;
        Ok(DualGrads {
            grad_g,
            grad_s,
            grad_hg,
            grad_hs,
            loss_g,
            loss_s,
        })
    }

    /// Single backward pass through `h` for the combined loss
    /// `alpha·L_g + s_weight·L_s`. Head gradients stay unweighted.
    pub fn fused_backward(
        &self,
        batch: &Tensor2,
        y: &[f64],
        labels: Option<&DrawerTargets>,
        alpha: f64,
        s_weight: f64,
        rng: &mut TrainRng,
    ) -> Result<FusedGrads> {
        self.check_labels(batch.rows(), labels)?;
        let (z, tape_h) = self.core.forward(batch, Mode::Train, Some(&mut rng.core))?;

        let (pred, tape_g) = self
            .head_g
            .forward(&z, Mode::Train, Some(&mut rng.head_g))?;
        let (loss_g, d_pred) = mse_loss(&pred, y)?;
        let (grad_g, dz_g) = self.head_g.backward(tape_g, &d_pred)?;
        let mut dz = dz_g.map(|v| alpha * v);

        let (grad_s, loss_s) = match &self.head_s {
            Some(head_s) => {
                let labels = labels.expect("checked above");
                let (logits, tape_s) =
                    head_s.forward_logits(&z, Mode::Train, Some(&mut rng.head_s))?;
                let (loss_s, d_logits) = Self::aux_loss(&logits, labels)?;
                let (grad_s, dz_s) = head_s.backward(tape_s, &d_logits)?;
                if s_weight != 0.0 {
                    dz.add_scaled(s_weight, &dz_s)?;
                }
                (grad_s, loss_s)
            }
            None => (ParamBank::default(), 0.0),
        };

        let (grad_h, _) = self.core.backward(tape_h, &dz)?;
        Ok(FusedGrads {
            grad_g,
            grad_s,
            grad_h,
            loss_g,
            loss_s,
        })
    }

    /// Regression predictions from `g ∘ h`. The auxiliary head is never run.
    pub fn predict(&self, batch: &Tensor2) -> Result<Vec<f64>> {
        let z = self.core.predict(batch)?;
        Ok(self.head_g.predict(&z)?.into_data())
    }

    /// Auxiliary head probabilities: sigmoid per boundary in nested mode,
    /// softmax over drawers in disjoint mode.
    pub fn aux_probabilities(&self, batch: &Tensor2) -> Result<Tensor2> {
        let head_s = self
            .head_s
            .as_ref()
            .ok_or_else(|| Error::Config("model has no auxiliary head".into()))?;
        let logits = head_s.predict_logits(&self.core.predict(batch)?)?;
        Ok(match self.mode {
            DrawerMode::Nested => logits.map(sigmoid),
            DrawerMode::Disjoint => softmax(&logits),
        })
    }

    pub fn reset_op_counts(&self) {
        self.core.reset_op_count();
        self.head_g.reset_op_count();
        if let Some(s) = &self.head_s {
            s.reset_op_count();
        }
    }

    /// Operations executed by (core, head g, head s) since the last reset.
    pub fn op_counts(&self) -> (u64, u64, u64) {
        (
            self.core.op_count(),
            self.head_g.op_count(),
            self.head_s.as_ref().map_or(0, Network::op_count),
        )
    }
}

/// Serializable snapshot of a [`DraweredModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub core: NetworkState,
    pub head_g: NetworkState,
    pub head_s: Option<NetworkState>,
    pub mode: DrawerMode,
}

impl From<&DraweredModel> for ModelState {
    fn from(m: &DraweredModel) -> Self {
        Self {
            core: (&m.core).into(),
            head_g: (&m.head_g).into(),
            head_s: m.head_s.as_ref().map(Into::into),
            mode: m.mode,
        }
    }
}

impl TryFrom<ModelState> for DraweredModel {
    type Error = Error;

    fn try_from(state: ModelState) -> Result<Self> {
        DraweredModel::from_parts(
            state.core.try_into()?,
            state.head_g.try_into()?,
            state.head_s.map(TryInto::try_into).transpose()?,
            state.mode,
        )
    }
}
