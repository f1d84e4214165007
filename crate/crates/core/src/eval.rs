//! Test-set metrics: per-time EDC error profile and EDT/T20/C50 agreement.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decay::{self, EnergyDecayCurve};
use crate::{Error, Result};

fn check_pair(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            got: pred.len(),
        });
    }
    Ok(())
}

pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target)?;
    let mse = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target)?;
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let ss_tot: f64 = target.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::InvalidArgument("R² is undefined for constant targets".into()));
    }
    let ss_res: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Error statistics across rooms at each time index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdcErrorProfile {
    pub time_step_s: f64,
    pub mae: Vec<f64>,
    pub rmse: Vec<f64>,
    /// Standard deviation of the absolute error.
    pub std_abs: Vec<f64>,
}

impl EdcErrorProfile {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,time_s,mae,rmse,std_abs_error\n");
        for k in 0..self.mae.len() {
            let _ = writeln!(
                s,
                "{k},{},{},{},{}",
                k as f64 * self.time_step_s,
                self.mae[k],
                self.rmse[k],
                self.std_abs[k]
            );
        }
        s
    }

    pub fn mean_mae(&self) -> f64 {
        self.mae.iter().sum::<f64>() / self.mae.len() as f64
    }

    pub fn mean_rmse(&self) -> f64 {
        self.rmse.iter().sum::<f64>() / self.rmse.len() as f64
    }
}

pub fn edc_error_profile(preds: &[EnergyDecayCurve], targets: &[EnergyDecayCurve]) -> Result<EdcErrorProfile> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::LengthMismatch {
            expected: targets.len(),
            got: preds.len(),
        });
    }
    let len = targets[0].len();
    let dt = targets[0].time_step_s;
    for c in preds.iter().chain(targets) {
        if c.len() != len || (c.time_step_s - dt).abs() > 1e-12 * dt {
            return Err(Error::GridMismatch(format!(
                "curve of {} points every {} s vs {len} every {dt} s",
                c.len(),
                c.time_step_s
            )));
        }
    }
    let n = preds.len() as f64;
    let mut out = EdcErrorProfile {
        time_step_s: dt,
        mae: vec![0.0; len],
        rmse: vec![0.0; len],
        std_abs: vec![0.0; len],
    };
    for k in 0..len {
        let abs: Vec<f64> = preds
            .iter()
            .zip(targets)
            .map(|(p, t)| (p.values[k] - t.values[k]).abs())
            .collect();
        let m = abs.iter().sum::<f64>() / n;
        let sq = abs.iter().map(|a| a * a).sum::<f64>() / n;
        out.mae[k] = m;
        out.rmse[k] = sq.sqrt();
        out.std_abs[k] = abs.iter().map(|a| (a - m) * (a - m)).sum::<f64>().sqrt() / n.sqrt();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Edt,
    T20,
    C50,
}

impl Param {
    pub const ALL: [Param; 3] = [Param::Edt, Param::T20, Param::C50];

    pub fn name(self) -> &'static str {
        match self {
            Param::Edt => "edt",
            Param::T20 => "t20",
            Param::C50 => "c50",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Param::C50 => "dB",
            _ => "s",
        }
    }

    /// The one extraction path used for both predicted and target curves.
    pub fn extract(self, edc: &EnergyDecayCurve) -> Result<f64> {
        match self {
            Param::Edt => decay::edt(edc),
            Param::T20 => decay::t20(edc),
            Param::C50 => decay::c50(edc),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub room_index: usize,
    pub target: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub room_index: usize,
    pub param: Param,
    /// `"target"`, `"predicted"` or `"both"`.
    pub curve: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamStats {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when fewer than two rooms are included or targets are constant.
    pub r2: Option<f64>,
    pub n_included: usize,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamReport {
    pub param: Param,
    pub stats: ParamStats,
    pub points: Vec<ScatterPoint>,
}

impl ParamReport {
    pub fn scatter_csv(&self) -> String {
        let mut s = String::from("room_index,target,predicted,residual\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{},{}", p.room_index, p.target, p.predicted, p.predicted - p.target);
        }
        s
    }
}

/// Derives one parameter from every (prediction, target) pair; rooms where
/// either curve cannot support the fit are left out and listed.
pub fn param_report(
    param: Param,
    preds: &[EnergyDecayCurve],
    targets: &[EnergyDecayCurve],
    room_indices: &[usize],
) -> (ParamReport, Vec<Exclusion>) {
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for ((p, t), &room_index) in preds.iter().zip(targets).zip(room_indices) {
        match (param.extract(t), param.extract(p)) {
            (Ok(target), Ok(predicted)) => points.push(ScatterPoint {
                room_index,
                target,
                predicted,
            }),
            (t, p) => {
                let (curve, err) = match (t, p) {
                    (Err(e), Ok(_)) => ("target", e),
                    (Ok(_), Err(e)) => ("predicted", e),
                    (Err(e), Err(_)) => ("both", e),
                    (Ok(_), Ok(_)) => unreachable!(),
                };
                excluded.push(Exclusion {
                    room_index,
                    param,
                    curve: curve.into(),
                    reason: err.to_string(),
                })
            }
        }
    }
    let tv: Vec<f64> = points.iter().map(|p| p.target).collect();
    let pv: Vec<f64> = points.iter().map(|p| p.predicted).collect();
    let stats = ParamStats {
        mae: mae(&pv, &tv).unwrap_or(f64::NAN),
        rmse: rmse(&pv, &tv).unwrap_or(f64::NAN),
        r2: if points.len() >= 2 { r2(&pv, &tv).ok() } else { None },
        n_included: points.len(),
        n_excluded: excluded.len(),
    };
    (ParamReport { param, stats, points }, excluded)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdcSummary {
    pub mean_mae: f64,
    pub mean_rmse: f64,
    pub max_mae: f64,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub n_test_rooms: usize,
    pub edc: EdcSummary,
    pub edt: ParamStats,
    pub t20: ParamStats,
    pub c50: ParamStats,
}

impl EvaluationSummary {
    pub fn param(&self, p: Param) -> &ParamStats {
        match p {
            Param::Edt => &self.edt,
            Param::T20 => &self.t20,
            Param::C50 => &self.c50,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub summary: EvaluationSummary,
    pub profile: EdcErrorProfile,
    pub params: Vec<ParamReport>,
    pub exclusions: Vec<Exclusion>,
}

pub fn evaluate(preds: &[EnergyDecayCurve], targets: &[EnergyDecayCurve], room_indices: &[usize]) -> Result<Evaluation> {
    if room_indices.len() != preds.len() {
        return Err(Error::LengthMismatch {
            expected: preds.len(),
            got: room_indices.len(),
        });
    }
    let profile = edc_error_profile(preds, targets)?;
    let mut params = Vec::new();
    let mut exclusions = Vec::new();
    for p in Param::ALL {
        let (r, ex) = param_report(p, preds, targets, room_indices);
        params.push(r);
        exclusions.extend(ex);
    }
    let summary = EvaluationSummary {
        n_test_rooms: preds.len(),
        edc: EdcSummary {
            mean_mae: profile.mean_mae(),
            mean_rmse: profile.mean_rmse(),
            max_mae: profile.mae.iter().cloned().fold(0.0, f64::max),
        },
        edt: params[0].stats,
        t20: params[1].stats,
        c50: params[2].stats,
    };
    Ok(Evaluation {
        summary,
        profile,
        params,
        exclusions,
    })
}

/// Writes `report.json`, `edc_error_profile.csv`, `scatter_{edt,t20,c50}.csv`
/// and `exclusions.json` into `dir`.
pub fn export_report(eval: &Evaluation, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(path, e))
    };
    write("report.json", &serde_json::to_vec_pretty(&eval.summary)?)?;
    write("edc_error_profile.csv", eval.profile.to_csv().as_bytes())?;
    for r in &eval.params {
        write(&format!("scatter_{}.csv", r.param.name()), r.scatter_csv().as_bytes())?;
    }
    write("exclusions.json", &serde_json::to_vec_pretty(&eval.exclusions)?)
}
