use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{EncodedDataset, SchemaConfig, SplitStrategy};
use crate::drawers::{DrawerConfig, DrawerKind, DrawerMode, DrawerSet, DEFAULT_MIN_OCCUPANCY};
use crate::error::{Error, Result};
use crate::nn::LayerSpec;
use crate::trainer::{AdamConfig, MixConfig, ModelSpec};

/// Unit of early-stopping progress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "unit", rename_all = "snake_case")]
pub enum IterationUnit {
    /// One full pass over the training split.
    #[default]
    Epoch,
    /// A fixed number of mini-batches.
    Batches { count: usize },
}

fn default_batch_size() -> usize {
    256
}

fn default_min_occupancy() -> usize {
    DEFAULT_MIN_OCCUPANCY
}

/// Everything a single training run needs besides the data.
///
/// Layer lists leave data-dependent sizes as `0`: the first Linear layer of
/// the core takes the encoded input width, and the last Linear layer of `s`
/// gets one output per drawer label. Embedding layers for categorical columns
/// are prepended to the core automatically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelSpec,
    pub drawers: DrawerConfig,
    #[serde(default)]
    pub mix: MixConfig,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub patience: usize,
    pub min_iterations: usize,
    /// Hard cap on iterations; `None` trains until early stopping fires.
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub iteration: IterationUnit,
    #[serde(default)]
    pub seed: u64,
    /// Fail instead of warning when a drawer is under-populated.
    #[serde(default)]
    pub strict_occupancy: bool,
    #[serde(default = "default_min_occupancy")]
    pub min_occupancy: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.min_iterations == 0 {
            return Err(Error::Config("min_iterations must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if let IterationUnit::Batches { count: 0 } = self.iteration {
            return Err(Error::Config(
                "an iteration needs at least one batch".into(),
            ));
        }
        self.mix.validate()?;
        self.adam.validate()
    }

    /// The same configuration without the auxiliary head.
    pub fn original(&self) -> Self {
        let mut cfg = self.clone();
        cfg.model.head_s = None;
        cfg
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn has_aux(&self) -> bool {
        self.model.head_s.is_some()
    }

    /// Concrete model spec for a dataset and (when `s` is present) a fitted
    /// drawer set.
    pub fn resolve_model(
        &self,
        data: &EncodedDataset,
        drawers: Option<&DrawerSet>,
    ) -> Result<ModelSpec> {
        let mut core = data.embedding_layers();
        let mut user_core = self.model.core.clone();
        if let Some(LayerSpec::Linear { input, .. }) = user_core
            .iter_mut()
            .find(|l| matches!(l, LayerSpec::Linear { .. }))
        {
            if *input == 0 {
                *input = data.encoded_width();
            }
        }
        core.extend(user_core);

        let head_s = match (&self.model.head_s, drawers) {
            (None, _) => None,
            (Some(_), None) => {
                return Err(Error::Config("auxiliary head needs fitted drawers".into()));
            }
            (Some(layers), Some(ds)) => {
                let mut layers = layers.clone();
                if let Some(LayerSpec::Linear { output, .. }) = layers
                    .iter_mut()
                    .rev()
                    .find(|l| matches!(l, LayerSpec::Linear { .. }))
                {
                    if *output == 0 {
                        *output = ds.head_width();
                    }
                }
                Some(layers)
            }
        };
        Ok(ModelSpec {
            core,
            head_g: self.model.head_g.clone(),
            head_s,
        })
    }

    /// A small architecture that trains in seconds on tens of thousands of
    /// rows: core `in→64→64`, `g` linear, `s` `64→32→labels`.
    pub fn desk_scale() -> Self {
        Self {
            model: ModelSpec {
                core: vec![
                    LayerSpec::linear(0, 64),
                    LayerSpec::Relu,
                    LayerSpec::linear(64, 64),
                    LayerSpec::Relu,
                ],
                head_g: vec![LayerSpec::linear(64, 1)],
                head_s: Some(vec![
                    LayerSpec::linear(64, 32),
                    LayerSpec::Relu,
                    LayerSpec::linear(32, 0),
                    LayerSpec::Sigmoid,
                ]),
            },
            drawers: DrawerConfig {
                kind: DrawerKind::Uneven,
                mode: DrawerMode::Nested,
                n: 5,
            },
            mix: MixConfig::default(),
            adam: AdamConfig::default(),
            batch_size: default_batch_size(),
            patience: 5,
            min_iterations: 10,
            max_iterations: Some(40),
            iteration: IterationUnit::Epoch,
            seed: 0,
            strict_occupancy: false,
            min_occupancy: DEFAULT_MIN_OCCUPANCY,
        }
    }
}

/// Where the data comes from and how to split it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema: SchemaConfig,
    pub split: SplitStrategy,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        self.train.validate()
    }
}
