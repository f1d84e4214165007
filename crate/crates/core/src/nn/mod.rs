//! LSTM regressor from 16 room features to an energy decay curve.
//!
//! Forward and backward passes, Adam and the training loop run in f64.
//! Checkpoints store parameters as f32, and a freshly trained checkpoint is
//! rounded to f32 so that in-memory and reloaded models predict identically.

mod adam;
mod checkpoint;
mod model;
mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{ModelCheckpoint, FORMAT_VERSION, MAGIC};
pub use model::{
    backward, batch_mse, forward, forward_from, mse_grad, mse_loss, ForwardCache, Gradients, LstmParams, Mode,
    ModelParams, ModelShape, TENSOR_NAMES,
};
pub use train::{
    evaluate_mse, train, train_step, EarlyStopping, EpochStats, Progress, TargetScaling, TrainConfig, TrainOutcome,
};

use ndarray::Array2;

use crate::dataset::{Dataset, MinMaxScaler};
use crate::decay::{EdcGrid, EnergyDecayCurve};
use crate::room::RoomConfig;
use crate::{Error, Result};

/// Stacks equal-length rows into a matrix.
pub fn to_matrix(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows
        .iter()
        .map(|r| {
            if r.len() == cols {
                Ok(r.as_slice())
            } else {
                Err(Error::LengthMismatch {
                    expected: cols,
                    got: r.len(),
                })
            }
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    Ok(Array2::from_shape_vec((rows.len(), cols), flat).expect("row lengths checked"))
}

/// Trains on the dataset's train split with early stopping on its val split.
pub fn train_on_dataset(ds: &Dataset, shape: ModelShape, config: &TrainConfig) -> Result<ModelCheckpoint> {
    if shape.output != ds.manifest.grid.len {
        return Err(Error::GridMismatch(format!(
            "model output {} vs dataset grid {}",
            shape.output, ds.manifest.grid.len
        )));
    }
    let (tx, mut ty) = ds.xy(&ds.splits.train);
    let (vx, mut vy) = ds.xy(&ds.splits.val);
    let target_scaler = match config.target_scaling {
        TargetScaling::None => None,
        TargetScaling::PerIndexMinMax => {
            let s = MinMaxScaler::fit(ty.iter().map(Vec::as_slice), shape.output)?;
            for row in ty.iter_mut().chain(vy.iter_mut()) {
                *row = s.transform(row);
            }
            Some(s)
        }
    };
    let out = train(
        shape,
        config,
        to_matrix(&tx)?.view(),
        to_matrix(&ty)?.view(),
        to_matrix(&vx)?.view(),
        to_matrix(&vy)?.view(),
    )?;
    let mut params = out.params;
    params.round_to_f32();
    Ok(ModelCheckpoint {
        params,
        train_config: *config,
        scaler: ds.scaler.clone(),
        target_scaler,
        grid: ds.manifest.grid,
        history: out.history,
        best_epoch: out.best_epoch,
    })
}

/// Clamps to `[0, 1]`, pins the first value to 1 and makes the curve
/// non-increasing with a running minimum.
pub fn postprocess(raw: &[f64]) -> Vec<f64> {
    let mut run = 1.0f64;
    raw.iter()
        .enumerate()
        .map(|(k, &v)| {
            let v = if k == 0 || v.is_nan() { 1.0 } else { v.clamp(0.0, 1.0) };
            run = run.min(v);
            run
        })
        .collect()
}

/// Raw network output for already-unscaled feature rows, in target units.
pub fn predict_raw(ckpt: &ModelCheckpoint, features: &[Vec<f64>]) -> Result<Array2<f64>> {
    if ckpt.scaler.dim() != crate::room::N_FEATURES {
        return Err(Error::InvalidArgument("checkpoint has no feature scaler".into()));
    }
    let scaled: Vec<Vec<f64>> = features.iter().map(|f| ckpt.scaler.transform(f)).collect();
    let x = to_matrix(&scaled)?;
    let mut y = forward(&ckpt.params, x.view(), Mode::Eval)?.y;
    if let Some(ts) = &ckpt.target_scaler {
        for mut row in y.rows_mut() {
            let inv = ts.inverse_transform(row.as_slice().unwrap());
            row.assign(&ndarray::ArrayView1::from(&inv));
        }
    }
    Ok(y)
}

/// Post-processed EDCs for a batch of feature rows.
pub fn predict_features(ckpt: &ModelCheckpoint, features: &[Vec<f64>]) -> Result<Vec<EnergyDecayCurve>> {
    let y = predict_raw(ckpt, features)?;
    let dt = ckpt.grid.time_step_s();
    Ok(y.rows()
        .into_iter()
        .map(|r| EnergyDecayCurve {
            values: postprocess(r.as_slice().unwrap()),
            time_step_s: dt,
        })
        .collect())
}

pub fn predict(ckpt: &ModelCheckpoint, config: &RoomConfig) -> Result<EnergyDecayCurve> {
    let f = config.to_features().0.to_vec();
    Ok(predict_features(ckpt, &[f])?.remove(0))
}

/// Like [`predict`], but first checks the checkpoint against `grid`.
pub fn predict_on_grid(ckpt: &ModelCheckpoint, config: &RoomConfig, grid: &EdcGrid) -> Result<EnergyDecayCurve> {
    if ckpt.grid != *grid || ckpt.params.shape.output != grid.len {
        return Err(Error::GridMismatch(format!(
            "checkpoint grid {}×{:.3} s vs requested {}×{:.3} s",
            ckpt.grid.len, ckpt.grid.window_s, grid.len, grid.window_s
        )));
    }
    predict(ckpt, config)
}
