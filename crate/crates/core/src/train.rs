//! Per-example training with Adam and validation-based early stopping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Adam, AdamConfig, ShapeError};
use crate::corpus::{permutation, EncodedTree};
use crate::eval::evaluate_tally;
use crate::model::{Model, ModelError, ModelKind};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub dim: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub max_epochs: usize,
    /// Consecutive validation drops below the best score before stopping.
    pub patience: usize,
    /// Validate every this many epochs; the final epoch is always validated.
    pub eval_every: usize,
    /// Reshuffle the training trees each epoch with a seed derived from
    /// `seed` and the epoch number.
    pub shuffle: bool,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::Hlm,
            dim: 128,
            seed: 0,
            adam: AdamConfig::default(),
            max_epochs: 20,
            patience: 1,
            eval_every: 1,
            shuffle: true,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::BadConfig(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        if !(self.adam.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Training loss per node, averaged over the epoch.
    pub mean_train_loss: f64,
    pub valid_top1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best validation score; a score strictly below the best is a
/// drop, anything else resets the drop count. Ties keep the earlier epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    drops: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience: patience.max(1), best: None, drops: 0 }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> Verdict {
        match self.best {
            Some((_, best)) if score < best => {
                self.drops += 1;
                if self.drops >= self.patience {
                    Verdict::Stop
                } else {
                    Verdict::Continue
                }
            }
            Some((_, best)) if score <= best => {
                self.drops = 0;
                Verdict::Continue
            }
            _ => {
                self.best = Some((epoch, score));
                self.drops = 0;
                Verdict::Improved
            }
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// A model and its optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    adam: Adam,
}

impl Trainer {
    pub fn new(model: Model, config: AdamConfig) -> Self {
        let adam = Adam::new(config, model.params());
        Trainer { model, adam }
    }

    /// One Adam update on the loss of `tree`; returns the loss before the
    /// update.
    pub fn step(&mut self, tree: &EncodedTree) -> Result<f64, TrainError> {
        let (loss, grads) = self.model.loss_and_gradients(tree)?;
        self.adam.step(self.model.params_mut(), &grads)?;
        Ok(loss)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validated epoch.
    pub model: Model,
    pub best_epoch: usize,
    pub best_valid_top1: f64,
    pub log: Vec<EpochLog>,
    pub stopped_early: bool,
}

/// Tree order for `epoch` (1-based).
pub fn epoch_order(n: usize, config: &TrainConfig, epoch: usize) -> Vec<usize> {
    if config.shuffle {
        permutation(n, config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    } else {
        (0..n).collect()
    }
}

/// Trains on `train`, validating with top-1 accuracy on `valid`.
pub fn train(
    train: &[EncodedTree],
    valid: &[EncodedTree],
    vocab_size: usize,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if valid.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let workers = config.workers;
    train_with(train, vocab_size, config, |m| Ok(evaluate_tally(m, valid, workers)?.accuracy(0)), |_| {})
}

/// Like [`train`] with a caller-supplied validation score and a callback
/// run after each epoch.
pub fn train_with<V, L>(
    train: &[EncodedTree],
    vocab_size: usize,
    config: &TrainConfig,
    mut validate: V,
    mut on_epoch: L,
) -> Result<TrainOutcome, TrainError>
where
    V: FnMut(&Model) -> Result<f64, TrainError>,
    L: FnMut(&EpochLog),
{
    config.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    let model = Model::new(config.model, vocab_size, config.dim, config.seed)?;
    let mut trainer = Trainer::new(model.clone(), config.adam);
    let mut best_model = model;
    let mut stopping = EarlyStopping::new(config.patience);
    let mut log = Vec::new();
    let mut stopped_early = false;
    let nodes: usize = train.iter().map(|t| t.len()).sum();

    for epoch in 1..=config.max_epochs {
        let mut total = 0.0;
        for i in epoch_order(train.len(), config, epoch) {
            total += trainer.step(&train[i])?;
        }
        let validated = epoch % config.eval_every == 0 || epoch == config.max_epochs;
        let valid_top1 = if validated { Some(validate(&trainer.model)?) } else { None };
        let entry = EpochLog { epoch, mean_train_loss: total / nodes as f64, valid_top1 };
        on_epoch(&entry);
        log.push(entry);
        if let Some(score) = valid_top1 {
            match stopping.observe(epoch, score) {
                Verdict::Improved => best_model = trainer.model.clone(),
                Verdict::Continue => {}
                Verdict::Stop => {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    let (best_epoch, best_valid_top1) = stopping.best().unwrap_or((0, 0.0));
    Ok(TrainOutcome { model: best_model, best_epoch, best_valid_top1, log, stopped_early })
}
