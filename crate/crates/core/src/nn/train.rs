use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::model::{backward, batch_mse, forward, ModelParams, ModelShape, Mode};
use crate::{Error, Result};

/// Whether targets are min-max scaled per time index before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetScaling {
    None,
    #[default]
    PerIndexMinMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub target_scaling: TargetScaling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        TrainConfig {
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
            batch_size: 64,
            max_epochs: 500,
            patience: 10,
            seed: 0,
            target_scaling: TargetScaling::PerIndexMinMax,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn check(&self) -> Result<()> {
        let positive = [self.learning_rate, self.beta1, self.beta2, self.epsilon]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive || self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::InvalidArgument("optimizer settings must be positive with betas < 1".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::InvalidArgument(
                "batch_size, max_epochs and patience must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Improved,
    Waiting,
    Stop,
}

/// Tracks the best validation loss and how long since it improved.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    best: f64,
    best_epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
        }
    }

    pub fn update(&mut self, epoch: usize, val_loss: f64) -> Progress {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.wait = 0;
            Progress::Improved
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                Progress::Stop
            } else {
                Progress::Waiting
            }
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn rows(a: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    a.select(Axis(0), idx)
}

/// Mean-squared error of eval-mode predictions, evaluated in chunks.
pub fn evaluate_mse(params: &ModelParams, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    const CHUNK: usize = 256;
    let mut total = 0.0;
    for (xc, yc) in x.axis_chunks_iter(Axis(0), CHUNK).zip(y.axis_chunks_iter(Axis(0), CHUNK)) {
        let cache = forward(params, xc, Mode::Eval)?;
        let (loss, _) = batch_mse(&cache.y, yc)?;
        total += loss * xc.nrows() as f64;
    }
    Ok(total / x.nrows() as f64)
}

/// One optimizer step on a minibatch; returns the batch loss before the step.
pub fn train_step(
    params: &mut ModelParams,
    adam: &mut Adam,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    mode: Mode<'_>,
) -> Result<f64> {
    let cache = forward(params, x, mode)?;
    let (loss, d_y) = batch_mse(&cache.y, y)?;
    let grads = backward(params, &cache, d_y.view())?;
    adam.step(params, &grads.params);
    Ok(loss)
}

/// Minibatch Adam with per-epoch validation and early stopping.
pub fn train(
    shape: ModelShape,
    config: &TrainConfig,
    train_x: ArrayView2<f64>,
    train_y: ArrayView2<f64>,
    val_x: ArrayView2<f64>,
    val_y: ArrayView2<f64>,
) -> Result<TrainOutcome> {
    config.check()?;
    let n = train_x.nrows();
    if n == 0 || val_x.nrows() == 0 {
        return Err(Error::InvalidArgument("training and validation splits must be non-empty".into()));
    }
    if train_y.nrows() != n || val_y.nrows() != val_x.nrows() {
        return Err(Error::LengthMismatch {
            expected: n,
            got: train_y.nrows(),
        });
    }

    let mut params = ModelParams::init(shape, config.seed);
    let mut adam = Adam::new(config.adam(), &params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(1);

    let mut order: Vec<usize> = (0..n).collect();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = params.clone();
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let xb = rows(train_x, idx);
            let yb = rows(train_y, idx);
            let loss = train_step(&mut params, &mut adam, xb.view(), yb.view(), Mode::Train(&mut dropout_rng))
                .map_err(|e| match e {
                    Error::NonFinite { .. } => Error::NonFiniteLoss { epoch, batch },
                    e => e,
                })?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            sum += loss * idx.len() as f64;
        }
        let train_loss = sum / n as f64;
        let val_loss = evaluate_mse(&params, val_x, val_y)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        match stopper.update(epoch, val_loss) {
            Progress::Improved => best.clone_from(&params),
            Progress::Waiting => {}
            Progress::Stop => {
                stopped_early = true;
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best,
        history,
        best_epoch: stopper.best_epoch(),
        stopped_early,
    })
}
