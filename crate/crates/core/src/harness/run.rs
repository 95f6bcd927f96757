use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{IterationUnit, TrainConfig};
use super::early_stop::EarlyStopping;
use crate::data::{EncodedDataset, SplitSpec};
use crate::drawers::{validate_occupancy, DrawerSet, DrawerTargets};
use crate::error::{Error, Result};
use crate::trainer::{DraweredModel, StepStats, TrainRng, Trainer};

const SHUFFLE_STREAM: u64 = 20;
const EVAL_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean regression loss over the iteration's mini-batches.
    pub train_loss: f64,
    pub validation: f64,
}

/// Outcome of one training run. Scores are mean squared errors on the
/// standardized target scale, measured with `g ∘ h` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub best_iteration: usize,
    pub best_validation: f64,
    pub test: f64,
    pub train: f64,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
}

/// A finished run together with the parameters it selected.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub result: RunResult,
    pub model: DraweredModel,
    pub drawers: Option<DrawerSet>,
}

/// Mean squared error of `model` on `rows`, evaluated in chunks.
pub fn evaluate_mse(model: &DraweredModel, data: &EncodedDataset, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Split("cannot score an empty split".into()));
    }
    let mut sum = 0.0;
    for chunk in rows.chunks(EVAL_CHUNK) {
        let pred = model.predict(&data.batch(chunk))?;
        sum += pred
            .iter()
            .zip(chunk)
            .map(|(p, &i)| (p - data.targets()[i]).powi(2))
            .sum::<f64>();
    }
    Ok(sum / rows.len() as f64)
}

/// Fits drawers on the training targets and checks their occupancy.
pub fn fit_drawers(cfg: &TrainConfig, train_targets: &[f64]) -> Result<DrawerSet> {
    let drawers = cfg.drawers.fit(train_targets)?;
    let report = validate_occupancy(&drawers, train_targets, cfg.min_occupancy);
    if !report.pass {
        let msg = format!(
            "drawers {:?} hold fewer than {} training targets (counts {:?})",
            report.flagged, report.min_count, report.counts
        );
        if cfg.strict_occupancy {
            return Err(Error::Drawer(msg));
        }
        log::warn!("{msg}");
    }
    Ok(drawers)
}

/// Cycles through shuffled training rows, reshuffling after each pass.
struct BatchStream {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    fn new(rows: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SHUFFLE_STREAM);
        Self {
            order: rows.to_vec(),
            pos: rows.len(),
            rng,
        }
    }

    /// Next batch of at most `size` row positions; a pass ends with a short
    /// batch rather than wrapping around.
    fn next(&mut self, size: usize) -> Vec<usize> {
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + size).min(self.order.len());
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        batch
    }

    fn batches_per_pass(&self, size: usize) -> usize {
        self.order.len().div_ceil(size)
    }
}

pub fn train_once(
    cfg: &TrainConfig,
    data: &EncodedDataset,
    splits: &SplitSpec,
) -> Result<RunResult> {
    Ok(train_model(cfg, data, splits, None)?.result)
}

/// Trains until early stopping fires and returns the validation-best model.
///
/// `on_step` sees every optimizer step's statistics.
pub fn train_model(
    cfg: &TrainConfig,
    data: &EncodedDataset,
    splits: &SplitSpec,
    mut on_step: Option<&mut dyn FnMut(&StepStats)>,
) -> Result<TrainedRun> {
    cfg.validate()?;
    if splits.train.is_empty() || splits.validation.is_empty() || splits.test.is_empty() {
        return Err(Error::Split(
            "train, validation and test splits must be non-empty".into(),
        ));
    }

    let train_targets = data.targets_of(&splits.train);
    let (drawers, labels) = if cfg.has_aux() {
        let ds = fit_drawers(cfg, &train_targets)?;
        let labels = ds.encode_targets(&train_targets)?;
        (Some(ds), Some(labels))
    } else {
        (None, None)
    };

    let spec = cfg.resolve_model(data, drawers.as_ref())?;
    let mode = cfg.drawers.mode;
    let mut model = DraweredModel::build(&spec, mode, cfg.seed)?;
    let mut trainer = Trainer::new(&model, cfg.mix, cfg.adam)?;
    let mut rng = TrainRng::new(cfg.seed);
    // Positions into the train split, so labels can be selected alongside.
    let positions: Vec<usize> = (0..splits.train.len()).collect();
    let mut stream = BatchStream::new(&positions, cfg.seed);
    let per_iteration = match cfg.iteration {
        IterationUnit::Epoch => stream.batches_per_pass(cfg.batch_size),
        IterationUnit::Batches { count } => count,
    };

    let mut stopper = EarlyStopping::new(cfg.patience, cfg.min_iterations);
    let mut best_model = model.clone();
    let mut trace = Vec::new();
    loop {
        let mut loss_sum = 0.0;
        for _ in 0..per_iteration {
            let pos = stream.next(cfg.batch_size);
            let rows: Vec<usize> = pos.iter().map(|&p| splits.train[p]).collect();
            let batch = data.batch(&rows);
            let y: Vec<f64> = pos.iter().map(|&p| train_targets[p]).collect();
            let batch_labels: Option<DrawerTargets> = labels.as_ref().map(|l| l.select(&pos));
            let stats = trainer
                .train_step(&mut model, &batch, &y, batch_labels.as_ref(), &mut rng)
                .map_err(|e| match e {
                    Error::NonFinite(what) => Error::NonFinite(format!(
                        "{what} (seed {}, iteration {})",
                        cfg.seed,
                        stopper.iteration() + 1
                    )),
                    other => other,
                })?;
            loss_sum += stats.loss_g;
            if let Some(f) = on_step.as_deref_mut() {
                f(&stats);
            }
        }

        let validation = evaluate_mse(&model, data, &splits.validation)?;
        if !validation.is_finite() {
            return Err(Error::NonFinite(format!(
                "validation score (seed {})",
                cfg.seed
            )));
        }
        let decision = stopper.observe(validation);
        trace.push(IterationRecord {
            iteration: stopper.iteration(),
            train_loss: loss_sum / per_iteration as f64,
            validation,
        });
        log::debug!(
            "seed {} iteration {}: validation {validation:.6}",
            cfg.seed,
            stopper.iteration()
        );
        if decision.improved {
            best_model = model.clone();
        }
        if decision.stop || cfg.max_iterations.is_some_and(|m| stopper.iteration() >= m) {
            break;
        }
    }

    let (best_iteration, best_validation) = stopper.best().expect("at least one iteration ran");
    let result = RunResult {
        seed: cfg.seed,
        best_iteration,
        best_validation,
        test: evaluate_mse(&best_model, data, &splits.test)?,
        train: evaluate_mse(&best_model, data, &splits.train)?,
        iterations: stopper.iteration(),
        trace,
    };
    log::info!(
        "seed {}: best iteration {} of {}, validation {:.6}, test {:.6}",
        cfg.seed,
        result.best_iteration,
        result.iterations,
        result.best_validation,
        result.test
    );
    Ok(TrainedRun {
        result,
        model: best_model,
        drawers,
    })
}
