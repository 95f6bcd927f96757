use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::run::{RunResult, TrainedRun};
use crate::data::Encoder;
use crate::drawers::DrawerSet;
use crate::error::{Error, Result};
use crate::trainer::{DraweredModel, ModelState};

/// A trained model with everything needed to encode new data for it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBundle {
    pub config: TrainConfig,
    pub encoder: Encoder,
    pub drawers: Option<DrawerSet>,
    pub result: RunResult,
    pub model: ModelState,
}

impl ModelBundle {
    pub fn new(config: TrainConfig, encoder: Encoder, run: &TrainedRun) -> Self {
        Self {
            config,
            encoder,
            drawers: run.drawers.clone(),
            result: run.result.clone(),
            model: ModelState::from(&run.model),
        }
    }

    pub fn model(&self) -> Result<DraweredModel> {
        DraweredModel::try_from(self.model.clone())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
