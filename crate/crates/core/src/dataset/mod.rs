//! Room sampling, simulation of feature/EDC pairs, splitting and scaling.

mod io;
mod scaler;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{load, save};
pub use scaler::{FeatureScaler, MinMaxScaler, SCALE_EPS};

use crate::decay::{resample_edc, schroeder_edc, t60_from_edc, EdcGrid, EnergyDecayCurve};
use crate::ism::{simulate_rir, SimParams};
use crate::room::{distance, FeatureVector, Point3, RoomConfig, N_BANDS, N_FEATURES};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Attempts per room before the placement rejection loop gives up.
pub const MAX_REJECTIONS: usize = 10_000;

const SPLIT_STREAM: u64 = 1;

/// Ranges the sampler draws from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerRanges {
    pub length_m: (f64, f64),
    pub width_m: (f64, f64),
    pub height_m: (f64, f64),
    pub wall_margin_m: f64,
    pub distance_m: (f64, f64),
    pub absorption: (f64, f64),
    pub band_jitter: f64,
}

impl Default for SamplerRanges {
    fn default() -> Self {
        SamplerRanges {
            length_m: (3.0, 6.0),
            width_m: (3.0, 6.0),
            height_m: (2.5, 4.0),
            wall_margin_m: 0.5,
            distance_m: (1.0, 4.0),
            absorption: (0.14, 0.65),
            band_jitter: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub n_rooms: usize,
    pub grid: EdcGrid,
    /// Train, validation, test.
    pub split_fractions: [f64; 3],
    pub sim: SimParams,
    pub ranges: SamplerRanges,
    /// SHA-256 of every data file, filled in on save.
    #[serde(default)]
    pub checksums: std::collections::BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn new(seed: u64, n_rooms: usize) -> Self {
        DatasetManifest {
            schema_version: SCHEMA_VERSION,
            seed,
            n_rooms,
            grid: EdcGrid::default(),
            split_fractions: [0.6, 0.2, 0.2],
            sim: SimParams::default(),
            ranges: SamplerRanges::default(),
            checksums: Default::default(),
        }
    }

    pub fn check(&self) -> Result<()> {
        let sum: f64 = self.split_fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.split_fractions.iter().any(|f| *f < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "split fractions {:?} must be non-negative and sum to 1",
                self.split_fractions
            )));
        }
        if self.grid.len < 2 || !(self.grid.window_s > 0.0) {
            return Err(Error::InvalidArgument(format!("bad EDC grid {:?}", self.grid)));
        }
        self.sim.check()?;
        Ok(())
    }

    /// `(train, val, test)` sizes; validation and test are floored, the
    /// remainder goes to training.
    pub fn split_counts(&self, n: usize) -> (usize, usize, usize) {
        let take = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
        let n_val = take(self.split_fractions[1]);
        let n_test = take(self.split_fractions[2]);
        (n - n_val - n_test, n_val, n_test)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: FeatureVector,
    pub target: EnergyDecayCurve,
    pub t60_s: f64,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn sample_one(rng: &mut ChaCha8Rng, r: &SamplerRanges) -> Result<RoomConfig> {
    let dims = [
        uniform(rng, r.length_m),
        uniform(rng, r.width_m),
        uniform(rng, r.height_m),
    ];
    let point = |rng: &mut ChaCha8Rng| -> Point3 {
        std::array::from_fn(|i| uniform(rng, (r.wall_margin_m, dims[i] - r.wall_margin_m)))
    };
    let mut placed = None;
    for _ in 0..MAX_REJECTIONS {
        let src = point(rng);
        let rcv = point(rng);
        let d = distance(&src, &rcv);
        if d >= r.distance_m.0 && d <= r.distance_m.1 {
            placed = Some((src, rcv));
            break;
        }
    }
    let (source, receiver) = placed.ok_or(Error::SamplerExhausted(MAX_REJECTIONS))?;

    let base = uniform(rng, r.absorption);
    let absorption: [f64; N_BANDS] = std::array::from_fn(|_| {
        let jitter = uniform(rng, (-r.band_jitter, r.band_jitter));
        (base + jitter).clamp(r.absorption.0, r.absorption.1)
    });

    Ok(RoomConfig {
        length_m: dims[0],
        width_m: dims[1],
        height_m: dims[2],
        source,
        receiver,
        absorption,
    })
}

/// `n` room configurations drawn deterministically from `seed`.
pub fn sample_configs(n: usize, seed: u64, ranges: &SamplerRanges) -> Result<Vec<RoomConfig>> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one room".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sample_one(&mut rng, ranges)).collect()
}

/// Simulates one room and reduces it to a training sample.
pub fn simulate_sample(config: &RoomConfig, sim: &SimParams, grid: &EdcGrid) -> Result<Sample> {
    let rir = simulate_rir(config, sim)?;
    let edc = schroeder_edc(&rir)?;
    let t60_s = t60_from_edc(&edc)?;
    Ok(Sample {
        features: config.to_features(),
        target: resample_edc(&edc, grid),
        t60_s,
    })
}

/// Simulates every config on up to `threads` workers. Output order and values
/// do not depend on the worker count.
pub fn build(configs: &[RoomConfig], manifest: &DatasetManifest, threads: usize) -> Result<Vec<Sample>> {
    manifest.check()?;
    let one = |(index, c): (usize, &RoomConfig)| {
        simulate_sample(c, &manifest.sim, &manifest.grid).map_err(|e| Error::RoomFailed {
            index,
            source: Box::new(e),
        })
    };
    if threads <= 1 {
        return configs.iter().enumerate().map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| configs.par_iter().enumerate().map(one).collect())
}

/// Index sets of the three partitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n`, then contiguous train/val/test slices.
pub fn split(n: usize, manifest: &DatasetManifest) -> Splits {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    rng.set_stream(SPLIT_STREAM);
    idx.shuffle(&mut rng);
    let (n_train, n_val, _) = manifest.split_counts(n);
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Splits {
        train: idx,
        val,
        test,
    }
}

/// Flat f32 arrays plus everything needed to reproduce them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    /// Row-major `[n_rooms × 16]`.
    pub features: Vec<f32>,
    /// Row-major `[n_rooms × grid.len]`.
    pub targets: Vec<f32>,
    pub t60: Vec<f32>,
    pub splits: Splits,
    pub scaler: FeatureScaler,
}

impl Dataset {
    /// Quantizes samples to f32, splits them and fits the feature scaler on
    /// the training part.
    pub fn assemble(mut manifest: DatasetManifest, samples: &[Sample]) -> Result<Self> {
        manifest.n_rooms = samples.len();
        let len = manifest.grid.len;
        let mut features = Vec::with_capacity(samples.len() * N_FEATURES);
        let mut targets = Vec::with_capacity(samples.len() * len);
        for s in samples {
            if s.target.len() != len {
                return Err(Error::LengthMismatch {
                    expected: len,
                    got: s.target.len(),
                });
            }
            features.extend(s.features.0.iter().map(|&v| v as f32));
            targets.extend(s.target.values.iter().map(|&v| v as f32));
        }
        let t60 = samples.iter().map(|s| s.t60_s as f32).collect();
        let splits = split(samples.len(), &manifest);
        let mut ds = Dataset {
            manifest,
            features,
            targets,
            t60,
            splits,
            scaler: MinMaxScaler {
                min: vec![],
                max: vec![],
            },
        };
        ds.scaler = ds.fit_scaler()?;
        Ok(ds)
    }

    pub fn n_rooms(&self) -> usize {
        self.t60.len()
    }

    pub fn feature_row(&self, i: usize) -> Vec<f64> {
        self.features[i * N_FEATURES..(i + 1) * N_FEATURES]
            .iter()
            .map(|&v| v as f64)
            .collect()
    }

    pub fn target_row(&self, i: usize) -> Vec<f64> {
        let len = self.manifest.grid.len;
        self.targets[i * len..(i + 1) * len]
            .iter()
            .map(|&v| v as f64)
            .collect()
    }

    pub fn target_edc(&self, i: usize) -> EnergyDecayCurve {
        EnergyDecayCurve {
            values: self.target_row(i),
            time_step_s: self.manifest.grid.time_step_s(),
        }
    }

    pub fn room(&self, i: usize) -> RoomConfig {
        RoomConfig::from_features(&FeatureVector(self.feature_row(i).try_into().unwrap()))
    }

    /// Min-max statistics of the training rows.
    pub fn fit_scaler(&self) -> Result<FeatureScaler> {
        let rows: Vec<Vec<f64>> = self.splits.train.iter().map(|&i| self.feature_row(i)).collect();
        MinMaxScaler::fit(rows.iter().map(|r| r.as_slice()), N_FEATURES)
    }

    /// `(scaled features, targets)` for the rows in `idx`.
    pub fn xy(&self, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        idx.iter()
            .map(|&i| (self.scaler.transform(&self.feature_row(i)), self.target_row(i)))
            .unzip()
    }
}

/// `(bin_lo, bin_hi, count)` for consecutive bins of `bin_width_s` starting at 0.
pub fn t60_histogram(t60: &[f32], bin_width_s: f64) -> Vec<(f64, f64, usize)> {
    let max = t60.iter().fold(0.0f64, |m, &v| m.max(v as f64));
    let n_bins = ((max / bin_width_s).floor() as usize + 1).max(1);
    let mut counts = vec![0usize; n_bins];
    for &v in t60 {
        let b = ((v as f64 / bin_width_s).floor().max(0.0) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i as f64 * bin_width_s, (i + 1) as f64 * bin_width_s, c))
        .collect()
}

pub fn t60_histogram_csv(t60: &[f32], bin_width_s: f64) -> String {
    let mut s = String::from("bin_lo_s,bin_hi_s,count\n");
    for (lo, hi, c) in t60_histogram(t60, bin_width_s) {
        s.push_str(&format!("{lo:.3},{hi:.3},{c}\n"));
    }
    s
}
