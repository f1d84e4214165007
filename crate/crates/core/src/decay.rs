//! Schroeder energy decay curves and the parameters derived from them.
//!
//! Decay times come from least-squares lines fitted to the dB curve
//! (`10·log10(EDC / EDC(0))`) inside a level window: EDT over 0…−10 dB,
//! T20 over −5…−25 dB, T30 over −5…−35 dB, all extrapolated to 60 dB.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::ism::Rir;
use crate::room::RoomConfig;
use crate::{Error, Result};

/// Fewest in-window samples a line fit accepts.
pub const MIN_FIT_SAMPLES: usize = 5;

/// Normalized, non-increasing decay curve sampled every `time_step_s` from
/// `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDecayCurve {
    pub values: Vec<f64>,
    pub time_step_s: f64,
}

/// Fixed time grid the network predicts on.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EdcGrid {
    pub len: usize,
    pub window_s: f64,
}

impl Default for EdcGrid {
    fn default() -> Self {
        EdcGrid {
            len: 256,
            window_s: 0.5,
        }
    }
}

impl EdcGrid {
    pub fn time_step_s(&self) -> f64 {
        self.window_s / (self.len - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub slope_db_per_s: f64,
    pub intercept_db: f64,
    pub fit_range_db: (f64, f64),
    pub n_samples: usize,
}

impl DecayFit {
    /// Time to decay by 60 dB along the fitted line.
    pub fn t60(&self) -> f64 {
        -60.0 / self.slope_db_per_s
    }
}

impl EnergyDecayCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| i as f64 * self.time_step_s)
    }

    /// Level relative to `values[0]`, in dB.
    pub fn db(&self) -> Vec<f64> {
        let reference = self.values.first().copied().unwrap_or(1.0);
        self.values
            .iter()
            .map(|&v| 10.0 * (v / reference).log10())
            .collect()
    }

    /// Linear interpolation at time `t`; the last value is held past the end.
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.values.len();
        let pos = (t / self.time_step_s).max(0.0);
        let nearest = pos.round();
        if (pos - nearest).abs() < 1e-9 {
            return self.values[(nearest as usize).min(n - 1)];
        }
        let i = pos.floor() as usize;
        if i + 1 >= n {
            return self.values[n - 1];
        }
        let frac = pos - i as f64;
        self.values[i] + (self.values[i + 1] - self.values[i]) * frac
    }

    /// `time_s,edc_linear,edc_db` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time_s,edc_linear,edc_db\n");
        for ((t, v), db) in self.times().zip(&self.values).zip(self.db()) {
            writeln!(s, "{t},{v},{db}").unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// True when the curve starts at 1, stays in [0, 1] and never increases.
    pub fn is_valid(&self) -> bool {
        self.values.first() == Some(&1.0)
            && self.values.iter().all(|v| (0.0..=1.0).contains(v))
            && self.values.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Backward-integrated squared RIR, normalized by its total energy.
pub fn schroeder_edc(rir: &Rir) -> Result<EnergyDecayCurve> {
    if rir.samples.is_empty() {
        return Err(Error::SilentRir);
    }
    let mut acc = 0.0;
    let mut values: Vec<f64> = rir
        .samples
        .iter()
        .rev()
        .map(|h| {
            acc += h * h;
            acc
        })
        .collect();
    values.reverse();
    let total = values[0];
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::SilentRir);
    }
    for v in &mut values {
        *v /= total;
    }
    Ok(EnergyDecayCurve {
        values,
        time_step_s: 1.0 / rir.sample_rate_hz as f64,
    })
}

/// Interpolates `edc` onto `grid`: `grid.len` points spanning `[0, window_s]`.
pub fn resample_edc(edc: &EnergyDecayCurve, grid: &EdcGrid) -> EnergyDecayCurve {
    let step = grid.time_step_s();
    EnergyDecayCurve {
        values: (0..grid.len).map(|k| edc.value_at(k as f64 * step)).collect(),
        time_step_s: step,
    }
}

/// Least-squares line through the samples whose level lies in
/// `[lower_db, upper_db]`.
pub fn fit_decay(edc: &EnergyDecayCurve, upper_db: f64, lower_db: f64) -> Result<DecayFit> {
    let insufficient = Error::InsufficientRange {
        upper_db,
        lower_db,
        min_samples: MIN_FIT_SAMPLES,
    };
    let db = edc.db();
    if !db.iter().any(|&l| l <= lower_db) {
        return Err(insufficient);
    }
    let (t, y): (Vec<f64>, Vec<f64>) = edc
        .times()
        .zip(db)
        .filter(|(_, l)| *l >= lower_db && *l <= upper_db)
        .unzip();
    if t.len() < MIN_FIT_SAMPLES {
        return Err(insufficient);
    }
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (ti, yi) in t.iter().zip(&y) {
        sxy += (ti - mt) * (yi - my);
        sxx += (ti - mt) * (ti - mt);
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(insufficient);
    }
    Ok(DecayFit {
        slope_db_per_s: slope,
        intercept_db: my - slope * mt,
        fit_range_db: (upper_db, lower_db),
        n_samples: t.len(),
    })
}

pub fn edt(edc: &EnergyDecayCurve) -> Result<f64> {
    fit_decay(edc, 0.0, -10.0).map(|f| f.t60())
}

pub fn t20(edc: &EnergyDecayCurve) -> Result<f64> {
    fit_decay(edc, -5.0, -25.0).map(|f| f.t60())
}

pub fn t30(edc: &EnergyDecayCurve) -> Result<f64> {
    fit_decay(edc, -5.0, -35.0).map(|f| f.t60())
}

/// Reverberation time from a full decay: T30, or T20 when the curve stops
/// short of −35 dB.
pub fn t60_from_edc(edc: &EnergyDecayCurve) -> Result<f64> {
    t30(edc).or_else(|_| t20(edc))
}

/// Early-to-late energy ratio around 50 ms, in dB.
pub fn c50(edc: &EnergyDecayCurve) -> Result<f64> {
    let e0 = edc.values[0];
    let late = edc.value_at(0.050);
    if !(late > 0.0) {
        return Err(Error::C50Undefined);
    }
    Ok(10.0 * ((e0 - late) / late).log10())
}

pub fn sabine_t60(config: &RoomConfig) -> Result<f64> {
    let a = config.mean_absorption();
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("mean absorption {a}")));
    }
    Ok(0.161 * config.volume() / (a * config.surface_area()))
}

pub fn eyring_t60(config: &RoomConfig) -> Result<f64> {
    let a = config.mean_absorption();
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::EyringDomain(a));
    }
    Ok(0.161 * config.volume() / (-config.surface_area() * (1.0 - a).ln()))
}
