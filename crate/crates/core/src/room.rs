//! Shoebox room scenarios and their 16-dimensional feature encoding.
//!
//! Coordinates have their origin at one room corner with axes running along
//! the walls, so a point is inside the room when `0 < x < length`,
//! `0 < y < width` and `0 < z < height`.

use std::fmt;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Octave-band center frequencies, in Hz, of the absorption coefficients.
pub const OCTAVE_BANDS_HZ: [f64; 7] = [125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0];

pub const N_BANDS: usize = OCTAVE_BANDS_HZ.len();

/// Number of values in a [`FeatureVector`].
pub const N_FEATURES: usize = 16;

pub type Point3 = [f64; 3];

/// One simulated scenario: geometry, source/receiver placement and the
/// wall-averaged absorption coefficient of every octave band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomConfig {
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub source: Point3,
    pub receiver: Point3,
    pub absorption: [f64; N_BANDS],
}

impl RoomConfig {
    pub fn dims(&self) -> Point3 {
        [self.length_m, self.width_m, self.height_m]
    }

    pub fn volume(&self) -> f64 {
        self.length_m * self.width_m * self.height_m
    }

    pub fn surface_area(&self) -> f64 {
        let (l, w, h) = (self.length_m, self.width_m, self.height_m);
        2.0 * (l * w + l * h + w * h)
    }

    pub fn source_receiver_distance(&self) -> f64 {
        distance(&self.source, &self.receiver)
    }

    /// Arithmetic mean of the seven band coefficients.
    pub fn mean_absorption(&self) -> f64 {
        self.absorption.iter().sum::<f64>() / N_BANDS as f64
    }

    pub fn validate(self) -> Result<Self> {
        self.validate_with(&ValidationLimits::default())
    }

    /// Returns the config unchanged if every invariant holds, otherwise every
    /// violated invariant.
    pub fn validate_with(self, limits: &ValidationLimits) -> Result<Self> {
        let mut errs = Vec::new();

        for (axis, (value, range)) in [
            (Axis::Length, (self.length_m, &limits.length_m)),
            (Axis::Width, (self.width_m, &limits.width_m)),
            (Axis::Height, (self.height_m, &limits.height_m)),
        ] {
            if !value.is_finite() || !range.contains(&value) {
                errs.push(Violation::Dimension {
                    axis,
                    value,
                    min: *range.start(),
                    max: *range.end(),
                });
            }
        }

        let dims = self.dims();
        for (role, p) in [(Role::Source, &self.source), (Role::Receiver, &self.receiver)] {
            let clearance = (0..3)
                .map(|i| p[i].min(dims[i] - p[i]))
                .fold(f64::INFINITY, f64::min);
            if !(clearance >= limits.wall_margin_m) {
                errs.push(Violation::Placement {
                    role,
                    position: *p,
                    clearance,
                    margin: limits.wall_margin_m,
                });
            }
        }

        let d = self.source_receiver_distance();
        if !limits.distance_m.contains(&d) {
            errs.push(Violation::Distance {
                distance: d,
                min: *limits.distance_m.start(),
                max: *limits.distance_m.end(),
            });
        }

        for (band, &a) in self.absorption.iter().enumerate() {
            if !(a > 0.0 && a < 1.0) {
                errs.push(Violation::Absorption {
                    band_hz: OCTAVE_BANDS_HZ[band],
                    value: a,
                });
            }
        }

        if errs.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidRoom(errs))
        }
    }

    pub fn to_features(&self) -> FeatureVector {
        let mut v = [0.0; N_FEATURES];
        v[0] = self.length_m;
        v[1] = self.width_m;
        v[2] = self.height_m;
        v[3..6].copy_from_slice(&self.source);
        v[6..9].copy_from_slice(&self.receiver);
        v[9..16].copy_from_slice(&self.absorption);
        FeatureVector(v)
    }

    pub fn from_features(f: &FeatureVector) -> Self {
        let v = &f.0;
        RoomConfig {
            length_m: v[0],
            width_m: v[1],
            height_m: v[2],
            source: [v[3], v[4], v[5]],
            receiver: [v[6], v[7], v[8]],
            absorption: v[9..16].try_into().unwrap(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("room config serializes")
    }
}

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// `[L, W, H, sx, sy, sz, rx, ry, rz, α125 … α8000]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl TryFrom<&[f64]> for FeatureVector {
    type Error = Error;

    fn try_from(v: &[f64]) -> Result<Self> {
        let arr: [f64; N_FEATURES] = v.try_into().map_err(|_| Error::LengthMismatch {
            expected: N_FEATURES,
            got: v.len(),
        })?;
        if arr.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        Ok(FeatureVector(arr))
    }
}

/// Accepted ranges for [`RoomConfig::validate_with`]. The default matches the
/// sampler's ranges; widen them to accept rooms outside the generated set.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationLimits {
    pub length_m: RangeInclusive<f64>,
    pub width_m: RangeInclusive<f64>,
    pub height_m: RangeInclusive<f64>,
    pub wall_margin_m: f64,
    pub distance_m: RangeInclusive<f64>,
}

impl Default for ValidationLimits {
    fn default() -> Self {
        ValidationLimits {
            length_m: 3.0..=6.0,
            width_m: 3.0..=6.0,
            height_m: 2.5..=4.0,
            wall_margin_m: 0.5,
            distance_m: 1.0..=4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Length,
    Width,
    Height,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Source,
    Receiver,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension {
        axis: Axis,
        value: f64,
        min: f64,
        max: f64,
    },
    Placement {
        role: Role,
        position: Point3,
        clearance: f64,
        margin: f64,
    },
    Distance {
        distance: f64,
        min: f64,
        max: f64,
    },
    Absorption {
        band_hz: f64,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension {
                axis,
                value,
                min,
                max,
            } => write!(f, "{axis:?} {value} m outside [{min}, {max}] m"),
            Violation::Placement {
                role,
                position,
                clearance,
                margin,
            } => write!(
                f,
                "{role:?} at {position:?} has wall clearance {clearance:.3} m < {margin} m"
            ),
            Violation::Distance { distance, min, max } => write!(
                f,
                "source-receiver distance {distance:.3} m outside [{min}, {max}] m"
            ),
            Violation::Absorption { band_hz, value } => {
                write!(f, "absorption {value} at {band_hz} Hz outside (0, 1)")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room(dims: Point3, src: Point3, rcv: Point3, alpha: f64) -> RoomConfig {
        RoomConfig {
            length_m: dims[0],
            width_m: dims[1],
            height_m: dims[2],
            source: src,
            receiver: rcv,
            absorption: [alpha; N_BANDS],
        }
    }

    fn violations(r: RoomConfig) -> Vec<Violation> {
        match r.validate() {
            Err(Error::InvalidRoom(v)) => v,
            other => panic!("expected invalid room, got {other:?}"),
        }
    }

    #[test]
    fn valid_room_passes_unchanged() {
        let r = room([5.0, 4.0, 3.0], [1.0, 1.0, 1.0], [3.0, 2.0, 1.5], 0.3);
        assert_eq!(r.validate().unwrap(), r);
        assert!((r.source_receiver_distance() - 2.2913).abs() < 1e-4);
    }

    #[test]
    fn too_close_receiver_is_rejected() {
        let r = room([5.0, 4.0, 3.0], [1.0, 1.0, 1.0], [1.2, 1.0, 1.0], 0.3);
        let v = violations(r);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::Distance { distance, .. } if (distance - 0.2).abs() < 1e-12));
    }

    #[test]
    fn short_room_is_rejected() {
        let r = room([2.0, 4.0, 3.0], [0.6, 1.0, 1.0], [1.4, 2.5, 1.5], 0.3);
        let v = violations(r);
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::Dimension { axis: Axis::Length, value, .. } if *value == 2.0)));
    }

    #[test]
    fn every_violation_is_reported() {
        let mut r = room([7.0, 4.0, 3.0], [0.1, 1.0, 1.0], [0.2, 1.0, 1.0], 0.3);
        r.absorption[3] = 1.0;
        r.absorption[6] = 0.0;
        let v = violations(r);
        // length, source margin, receiver margin, distance, two absorptions
        assert_eq!(v.len(), 6, "{v:?}");
    }

    #[test]
    fn wider_limits_accept_larger_rooms() {
        let r = room([8.0, 4.0, 3.0], [1.0, 1.0, 1.0], [3.0, 2.0, 1.5], 0.3);
        assert!(r.validate().is_err());
        let limits = ValidationLimits {
            length_m: 2.0..=10.0,
            ..Default::default()
        };
        assert!(r.validate_with(&limits).is_ok());
    }

    #[test]
    fn features_pack_in_fixed_order() {
        let r = room([5.0, 4.0, 3.0], [1.0, 2.0, 1.0], [3.0, 3.0, 2.0], 0.3);
        let expected = [
            5.0, 4.0, 3.0, 1.0, 2.0, 1.0, 3.0, 3.0, 2.0, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3,
        ];
        assert_eq!(r.to_features().0, expected);
        assert_eq!(RoomConfig::from_features(&r.to_features()), r);
    }

    #[test]
    fn distinct_configs_give_distinct_features() {
        let a = room([5.0, 4.0, 3.0], [1.0, 2.0, 1.0], [3.0, 3.0, 2.0], 0.3);
        let b = room([5.0, 4.0, 3.0], [3.0, 3.0, 2.0], [1.0, 2.0, 1.0], 0.3);
        assert_ne!(a.to_features(), b.to_features());
    }

    #[test]
    fn json_uses_documented_keys() {
        let r = room([5.0, 4.0, 3.0], [1.0, 2.0, 1.0], [3.0, 3.0, 2.0], 0.3);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["length_m", "width_m", "height_m", "source", "receiver", "absorption"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["absorption"].as_array().unwrap().len(), 7);
        assert_eq!(RoomConfig::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn feature_vector_rejects_wrong_length() {
        assert!(FeatureVector::try_from(&[1.0; 15][..]).is_err());
        assert!(FeatureVector::try_from(&[1.0; 16][..]).is_ok());
    }

    #[test]
    fn geometry_helpers() {
        let r = room([5.0, 4.0, 3.0], [1.0, 1.0, 1.0], [3.0, 2.0, 1.5], 0.3);
        assert_eq!(r.volume(), 60.0);
        assert_eq!(r.surface_area(), 94.0);
        assert!((r.mean_absorption() - 0.3).abs() < 1e-15);
    }
}
