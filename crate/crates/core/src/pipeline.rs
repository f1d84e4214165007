//! End-to-end stages as used by the command-line tool: generate, train,
//! evaluate, predict and simulate. Each stage writes into one output
//! directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, Dataset, DatasetManifest, SamplerRanges};
use crate::decay::{self, EdcGrid, EnergyDecayCurve};
use crate::eval::{self, Evaluation};
use crate::ism::{simulate_rir, SimParams};
use crate::nn::{self, ModelCheckpoint, ModelShape, TrainConfig};
use crate::room::RoomConfig;
use crate::{Error, Result};

pub const CHECKPOINT_FILE: &str = "model.edcn";
pub const LOSS_HISTORY_FILE: &str = "loss_history.csv";
pub const T60_HISTOGRAM_FILE: &str = "t60_histogram.csv";
pub const T60_BIN_WIDTH_S: f64 = 0.05;

/// Rows per inference batch. Fixed so that results do not depend on the
/// number of worker threads.
const INFERENCE_CHUNK: usize = 64;

/// Creates `dir`, refusing a non-empty one unless `overwrite` is set.
pub fn prepare_out_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        if entries.next().is_some() && !overwrite {
            return Err(Error::OutputExists(dir.to_path_buf()));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateOptions {
    pub n_rooms: usize,
    pub seed: u64,
    pub grid: EdcGrid,
    pub sim: SimParams,
    pub ranges: SamplerRanges,
    pub split_fractions: [f64; 3],
}

impl Default for GenerateOptions {
    fn default() -> Self {
        let m = DatasetManifest::new(0, 6000);
        GenerateOptions {
            n_rooms: m.n_rooms,
            seed: m.seed,
            grid: m.grid,
            sim: m.sim,
            ranges: m.ranges,
            split_fractions: m.split_fractions,
        }
    }
}

impl GenerateOptions {
    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            grid: self.grid,
            sim: self.sim,
            ranges: self.ranges,
            split_fractions: self.split_fractions,
            ..DatasetManifest::new(self.seed, self.n_rooms)
        }
    }
}

/// Samples rooms, simulates them and assembles the dataset in memory.
pub fn build_dataset(opts: &GenerateOptions, threads: usize) -> Result<Dataset> {
    let manifest = opts.manifest();
    manifest.check()?;
    let configs = dataset::sample_configs(opts.n_rooms, opts.seed, &opts.ranges)?;
    let samples = dataset::build(&configs, &manifest, threads)?;
    Dataset::assemble(manifest, &samples)
}

/// Builds the dataset and writes it plus `t60_histogram.csv` into `out`.
pub fn generate(opts: &GenerateOptions, threads: usize, out: &Path) -> Result<Dataset> {
    let mut ds = build_dataset(opts, threads)?;
    ds.manifest = dataset::save(&ds, out)?;
    write_file(
        &out.join(T60_HISTOGRAM_FILE),
        dataset::t60_histogram_csv(&ds.t60, T60_BIN_WIDTH_S).as_bytes(),
    )?;
    Ok(ds)
}

pub fn loss_history_csv(ckpt: &ModelCheckpoint) -> String {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for e in &ckpt.history {
        let _ = writeln!(s, "{},{},{}", e.epoch, e.train_loss, e.val_loss);
    }
    s
}

/// Trains on `ds` and writes `model.edcn` and `loss_history.csv` into `out`.
pub fn train(ds: &Dataset, shape: ModelShape, config: &TrainConfig, out: &Path) -> Result<ModelCheckpoint> {
    let ckpt = nn::train_on_dataset(ds, shape, config)?;
    ckpt.save(&out.join(CHECKPOINT_FILE))?;
    write_file(&out.join(LOSS_HISTORY_FILE), loss_history_csv(&ckpt).as_bytes())?;
    Ok(ckpt)
}

/// Post-processed predictions for `features`, batched in fixed-size chunks.
pub fn predict_batch(ckpt: &ModelCheckpoint, features: &[Vec<f64>], threads: usize) -> Result<Vec<EnergyDecayCurve>> {
    let run = || -> Result<Vec<EnergyDecayCurve>> {
        let chunks: Vec<Vec<EnergyDecayCurve>> = features
            .par_chunks(INFERENCE_CHUNK)
            .map(|c| nn::predict_features(ckpt, c))
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    };
    if threads <= 1 {
        features
            .chunks(INFERENCE_CHUNK)
            .map(|c| nn::predict_features(ckpt, c))
            .collect::<Result<Vec<_>>>()
            .map(|v| v.into_iter().flatten().collect())
    } else {
        pool(threads)?.install(run)
    }
}

/// Predicts the test split and compares against the simulated targets.
pub fn evaluate_test_split(ds: &Dataset, ckpt: &ModelCheckpoint, threads: usize) -> Result<Evaluation> {
    if ckpt.grid != ds.manifest.grid {
        return Err(Error::GridMismatch(format!(
            "checkpoint grid {:?} vs dataset grid {:?}",
            ckpt.grid, ds.manifest.grid
        )));
    }
    let idx = &ds.splits.test;
    let features: Vec<Vec<f64>> = idx.iter().map(|&i| ds.feature_row(i)).collect();
    let preds = predict_batch(ckpt, &features, threads)?;
    let targets: Vec<EnergyDecayCurve> = idx.iter().map(|&i| ds.target_edc(i)).collect();
    eval::evaluate(&preds, &targets, idx)
}

/// Runs [`evaluate_test_split`] and writes every report file into `out`.
pub fn evaluate(ds: &Dataset, ckpt: &ModelCheckpoint, threads: usize, out: &Path) -> Result<Evaluation> {
    let e = evaluate_test_split(ds, ckpt, threads)?;
    eval::export_report(&e, out)?;
    Ok(e)
}

/// Decay parameters of one curve; `None` where the curve cannot support the
/// fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayParams {
    pub edt_s: Option<f64>,
    pub t20_s: Option<f64>,
    pub t30_s: Option<f64>,
    pub c50_db: Option<f64>,
}

impl DecayParams {
    pub fn of(edc: &EnergyDecayCurve) -> Self {
        DecayParams {
            edt_s: decay::edt(edc).ok(),
            t20_s: decay::t20(edc).ok(),
            t30_s: decay::t30(edc).ok(),
            c50_db: decay::c50(edc).ok(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub sabine_t60_s: Option<f64>,
    pub eyring_t60_s: Option<f64>,
}

impl Baselines {
    pub fn of(config: &RoomConfig) -> Self {
        Baselines {
            sabine_t60_s: decay::sabine_t60(config).ok(),
            eyring_t60_s: decay::eyring_t60(config).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictSummary {
    pub room: RoomConfig,
    pub predicted: DecayParams,
    pub baselines: Baselines,
    pub grid: EdcGrid,
}

/// Predicts one room; writes `predicted_edc.csv` and `summary.json`.
pub fn predict(ckpt: &ModelCheckpoint, room: &RoomConfig, out: &Path) -> Result<(EnergyDecayCurve, PredictSummary)> {
    let room = (*room).validate()?;
    let edc = nn::predict(ckpt, &room)?;
    let summary = PredictSummary {
        predicted: DecayParams::of(&edc),
        baselines: Baselines::of(&room),
        grid: ckpt.grid,
        room,
    };
    edc.write_csv(&out.join("predicted_edc.csv"))?;
    write_file(&out.join("summary.json"), &serde_json::to_vec_pretty(&summary)?)?;
    Ok((edc, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub room: RoomConfig,
    pub sample_rate_hz: u32,
    pub rir_samples: usize,
    /// From the full-rate Schroeder curve.
    pub full_rate: DecayParams,
    pub t60_s: Option<f64>,
    /// From the curve resampled onto the network grid.
    pub on_grid: DecayParams,
    pub baselines: Baselines,
}

/// Ground-truth simulation of one room. Writes `rir.bin`, `rir.wav`,
/// `edc.csv` (full rate), `edc_grid.csv` and `parameters.json`.
pub fn simulate(room: &RoomConfig, sim: &SimParams, grid: &EdcGrid, out: &Path) -> Result<SimulateSummary> {
    let room = (*room).validate()?;
    let rir = simulate_rir(&room, sim)?;
    let edc = decay::schroeder_edc(&rir)?;
    let on_grid = decay::resample_edc(&edc, grid);
    rir.write_binary(&out.join("rir.bin"))?;
    rir.write_wav(&out.join("rir.wav"))?;
    edc.write_csv(&out.join("edc.csv"))?;
    on_grid.write_csv(&out.join("edc_grid.csv"))?;
    let summary = SimulateSummary {
        sample_rate_hz: rir.sample_rate_hz,
        rir_samples: rir.samples.len(),
        full_rate: DecayParams::of(&edc),
        t60_s: decay::t60_from_edc(&edc).ok(),
        on_grid: DecayParams::of(&on_grid),
        baselines: Baselines::of(&room),
        room,
    };
    write_file(&out.join("parameters.json"), &serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}

/// Paths of a dataset directory's data files, in a fixed order.
pub fn dataset_files(dir: &Path) -> Vec<PathBuf> {
    ["manifest.json", "features.f32", "targets.f32", "t60.f32", "splits.json", "scaler.json"]
        .iter()
        .map(|f| dir.join(f))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_opts() -> GenerateOptions {
        GenerateOptions {
            n_rooms: 12,
            seed: 21,
            sim: SimParams {
                max_order: 8,
                ..SimParams::default()
            },
            ..GenerateOptions::default()
        }
    }

    fn reference_room() -> RoomConfig {
        RoomConfig {
            length_m: 5.0,
            width_m: 4.0,
            height_m: 3.0,
            source: [1.0, 1.0, 1.0],
            receiver: [3.0, 2.0, 1.5],
            absorption: [0.3; 7],
        }
    }

    #[test]
    fn out_dir_guard() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("run");
        prepare_out_dir(&d, false).unwrap();
        prepare_out_dir(&d, false).unwrap();
        fs::write(d.join("x"), b"1").unwrap();
        assert!(matches!(prepare_out_dir(&d, false), Err(Error::OutputExists(_))));
        prepare_out_dir(&d, true).unwrap();
    }

    #[test]
    fn generate_writes_dataset_and_histogram() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate(&tiny_opts(), 2, dir.path()).unwrap();
        assert_eq!(ds.n_rooms(), 12);
        for f in dataset_files(dir.path()) {
            assert!(f.exists(), "{}", f.display());
        }
        let hist = fs::read_to_string(dir.path().join(T60_HISTOGRAM_FILE)).unwrap();
        let total: usize = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
        assert_eq!(total, 12);
        assert_eq!(dataset::load(dir.path()).unwrap(), ds);
    }

    #[test]
    fn batch_prediction_is_thread_independent() {
        let ckpt = {
            let mut params = nn::ModelParams::init(ModelShape::default(), 2);
            params.round_to_f32();
            ModelCheckpoint {
                params,
                train_config: TrainConfig::default(),
                scaler: dataset::MinMaxScaler {
                    min: vec![0.0; 16],
                    max: vec![6.0; 16],
                },
                target_scaler: None,
                grid: EdcGrid::default(),
                history: vec![],
                best_epoch: 0,
            }
        };
        let rows: Vec<Vec<f64>> = (0..150)
            .map(|i| (0..16).map(|j| ((i * 17 + j) as f64 * 0.3).sin().abs() * 5.0).collect())
            .collect();
        let a = predict_batch(&ckpt, &rows, 1).unwrap();
        let b = predict_batch(&ckpt, &rows, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 150);
    }

    #[test]
    fn simulate_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let s = simulate(&reference_room(), &SimParams::default(), &EdcGrid::default(), dir.path()).unwrap();
        for f in ["rir.bin", "rir.wav", "edc.csv", "edc_grid.csv", "parameters.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let t60 = s.t60_s.unwrap();
        let eyring = s.baselines.eyring_t60_s.unwrap();
        assert!((t60 / eyring - 1.0).abs() < 0.25, "{t60} vs {eyring}");
        let grid_rows = fs::read_to_string(dir.path().join("edc_grid.csv")).unwrap().lines().count();
        assert_eq!(grid_rows, 257);
    }

    #[test]
    fn simulate_rejects_invalid_rooms() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = reference_room();
        r.receiver = [9.0, 2.0, 1.5];
        assert!(matches!(
            simulate(&r, &SimParams::default(), &EdcGrid::default(), dir.path()),
            Err(Error::InvalidRoom(_))
        ));
    }
}
