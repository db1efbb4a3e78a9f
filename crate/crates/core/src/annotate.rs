//! Semantic levels for light, sound and temperature, plus barometric altitude.
//!
//! Every band is half-open and lower-inclusive, so a value sitting exactly on a
//! boundary belongs to the higher band.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::AudioClip;

/// ISA sea-level reference pressure.
pub const SEA_LEVEL_HPA: f64 = 1013.25;
/// Lower clamp for [`rms_dbfs`] so digital silence stays finite.
pub const DBFS_FLOOR: f64 = -120.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotateError {
    #[error("input must be non-negative, got {0}")]
    NegativeInput(f64),
    #[error("dBFS must be <= 0, got {0}")]
    PositiveDbfs(f64),
    #[error("input must be finite, got {0}")]
    NonFinite(f64),
    #[error("audio clip is empty")]
    EmptyClip,
    #[error("pressure must be in (0, 1100] hPa, got {0}")]
    NonpositivePressure(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IlluminationLevel {
    ExtremelyDark = 1,
    Dim = 2,
    ModerateBrightness = 3,
    Bright = 4,
    HarshLight = 5,
}

impl IlluminationLevel {
    pub const ALL: [IlluminationLevel; 5] = [
        IlluminationLevel::ExtremelyDark,
        IlluminationLevel::Dim,
        IlluminationLevel::ModerateBrightness,
        IlluminationLevel::Bright,
        IlluminationLevel::HarshLight,
    ];

    pub fn level(self) -> u8 {
        self as u8
    }

    pub fn label(self) -> &'static str {
        match self {
            IlluminationLevel::ExtremelyDark => "Extremely dark",
            IlluminationLevel::Dim => "Dim",
            IlluminationLevel::ModerateBrightness => "Moderate brightness",
            IlluminationLevel::Bright => "Bright",
            IlluminationLevel::HarshLight => "Harsh light",
        }
    }

    pub fn from_level(level: u8) -> Option<Self> {
        Self::ALL.get(usize::from(level).checked_sub(1)?).copied()
    }

    /// Human-readable band, e.g. `Level 1 (0–5 Lux): Extremely dark`.
    pub fn describe(self) -> String {
        let (lo, hi) = LIGHT_BANDS[usize::from(self.level()) - 1];
        let range = if hi.is_infinite() {
            format!(">{lo} Lux")
        } else {
            format!("{lo}–{hi} Lux")
        };
        format!("Level {} ({range}): {}", self.level(), self.label())
    }
}

impl fmt::Display for IlluminationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Level {} ({})", self.level(), self.label())
    }
}

#[derive(Serialize, Deserialize)]
struct IlluminationRepr {
    level: u8,
    label: String,
}

impl Serialize for IlluminationLevel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        IlluminationRepr {
            level: self.level(),
            label: self.label().to_string(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for IlluminationLevel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = IlluminationRepr::deserialize(d)?;
        let level = IlluminationLevel::from_level(repr.level)
            .ok_or_else(|| serde::de::Error::custom(format!("illumination level {} not in 1..=5", repr.level)))?;
        if level.label() != repr.label {
            return Err(serde::de::Error::custom(format!(
                "label {:?} does not match level {}",
                repr.label, repr.level
            )));
        }
        Ok(level)
    }
}

/// Lux bands as `(lower, upper)`; level = index + 1.
pub const LIGHT_BANDS: [(f64, f64); 5] = [
    (0.0, 5.0),
    (5.0, 50.0),
    (50.0, 300.0),
    (300.0, 1000.0),
    (1000.0, f64::INFINITY),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SoundLevel {
    #[serde(rename = "Very Quiet")]
    VeryQuiet,
    #[serde(rename = "Soft Sound")]
    SoftSound,
    #[serde(rename = "Normal Sound")]
    NormalSound,
    #[serde(rename = "Noisy")]
    Noisy,
    #[serde(rename = "Very Noisy")]
    VeryNoisy,
}

impl SoundLevel {
    pub const ALL: [SoundLevel; 5] = [
        SoundLevel::VeryQuiet,
        SoundLevel::SoftSound,
        SoundLevel::NormalSound,
        SoundLevel::Noisy,
        SoundLevel::VeryNoisy,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SoundLevel::VeryQuiet => "Very Quiet",
            SoundLevel::SoftSound => "Soft Sound",
            SoundLevel::NormalSound => "Normal Sound",
            SoundLevel::Noisy => "Noisy",
            SoundLevel::VeryNoisy => "Very Noisy",
        }
    }

    pub fn describe(self) -> String {
        let (lo, hi) = SOUND_BANDS[self as usize];
        let range = match (lo.is_infinite(), hi == 0.0) {
            (true, _) => format!("< {hi} dBFS"),
            (_, true) => format!("> {lo} dBFS"),
            _ => format!("({lo}, {hi}) dBFS"),
        };
        format!("{range}: {}", self.label()).replace('-', "–")
    }
}

impl fmt::Display for SoundLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// dBFS bands as `(lower, upper)` in [`SoundLevel::ALL`] order.
pub const SOUND_BANDS: [(f64, f64); 5] = [
    (f64::NEG_INFINITY, -70.0),
    (-70.0, -50.0),
    (-50.0, -30.0),
    (-30.0, -10.0),
    (-10.0, 0.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemperatureLevel {
    Cold,
    Cool,
    Comfortable,
    Warm,
    Hot,
}

impl TemperatureLevel {
    pub const ALL: [TemperatureLevel; 5] = [
        TemperatureLevel::Cold,
        TemperatureLevel::Cool,
        TemperatureLevel::Comfortable,
        TemperatureLevel::Warm,
        TemperatureLevel::Hot,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TemperatureLevel::Cold => "Cold",
            TemperatureLevel::Cool => "Cool",
            TemperatureLevel::Comfortable => "Comfortable",
            TemperatureLevel::Warm => "Warm",
            TemperatureLevel::Hot => "Hot",
        }
    }

    pub fn describe(self) -> String {
        let (lo, hi) = TEMPERATURE_BANDS[self as usize];
        let range = match (lo.is_infinite(), hi.is_infinite()) {
            (true, _) => format!("<{hi}°C"),
            (_, true) => format!(">{lo}°C"),
            _ => format!("{lo}–{hi}°C"),
        };
        format!("{range}: {}", self.label())
    }
}

impl fmt::Display for TemperatureLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Celsius bands as `(lower, upper)` in [`TemperatureLevel::ALL`] order.
pub const TEMPERATURE_BANDS: [(f64, f64); 5] = [
    (f64::NEG_INFINITY, 10.0),
    (10.0, 18.0),
    (18.0, 26.0),
    (26.0, 30.0),
    (30.0, f64::INFINITY),
];

/// Index of the first band whose upper bound exceeds `v`.
fn band_index(bands: &[(f64, f64); 5], v: f64) -> usize {
    bands.iter().position(|(_, hi)| v < *hi).unwrap_or(bands.len() - 1)
}

pub fn annotate_light(lux: f64) -> Result<IlluminationLevel, AnnotateError> {
    if lux.is_nan() {
        return Err(AnnotateError::NonFinite(lux));
    }
    if lux < 0.0 {
        return Err(AnnotateError::NegativeInput(lux));
    }
    Ok(IlluminationLevel::ALL[band_index(&LIGHT_BANDS, lux)])
}

pub fn annotate_sound(dbfs: f64) -> Result<SoundLevel, AnnotateError> {
    if dbfs.is_nan() {
        return Err(AnnotateError::NonFinite(dbfs));
    }
    if dbfs > 0.0 {
        return Err(AnnotateError::PositiveDbfs(dbfs));
    }
    Ok(SoundLevel::ALL[band_index(&SOUND_BANDS, dbfs)])
}

pub fn annotate_temperature(celsius: f64) -> Result<TemperatureLevel, AnnotateError> {
    if !celsius.is_finite() {
        return Err(AnnotateError::NonFinite(celsius));
    }
    Ok(TemperatureLevel::ALL[band_index(&TEMPERATURE_BANDS, celsius)])
}

/// Whole-clip RMS level relative to a full scale of 1.0, clamped at [`DBFS_FLOOR`].
pub fn rms_dbfs(clip: &AudioClip) -> Result<f64, AnnotateError> {
    if clip.samples.is_empty() {
        return Err(AnnotateError::EmptyClip);
    }
    let mean_sq = clip.samples.iter().map(|s| s * s).sum::<f64>() / clip.samples.len() as f64;
    let db = 10.0 * mean_sq.log10();
    Ok(if db.is_finite() { db.max(DBFS_FLOOR) } else { DBFS_FLOOR })
}

/// Altitude in metres from the international standard atmosphere formula.
pub fn estimate_altitude(pressure_hpa: f64) -> Result<f64, AnnotateError> {
    estimate_altitude_with_reference(pressure_hpa, SEA_LEVEL_HPA)
}

/// As [`estimate_altitude`], with a local reference pressure in place of 1013.25 hPa.
pub fn estimate_altitude_with_reference(pressure_hpa: f64, reference_hpa: f64) -> Result<f64, AnnotateError> {
    if !(pressure_hpa > 0.0 && pressure_hpa <= 1100.0) {
        return Err(AnnotateError::NonpositivePressure(pressure_hpa));
    }
    if !(reference_hpa.is_finite() && reference_hpa > 0.0) {
        return Err(AnnotateError::NonpositivePressure(reference_hpa));
    }
    Ok(44330.0 * (1.0 - (pressure_hpa / reference_hpa).powf(1.0 / 5.255)))
}

/// Annotation bundle embedded in every log entry.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvironmentAnnotation {
    pub light: Option<IlluminationLevel>,
    pub sound: Option<SoundLevel>,
    pub temperature: Option<TemperatureLevel>,
    pub altitude_m: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn light_examples() {
        assert_eq!(annotate_light(3.0).unwrap(), IlluminationLevel::ExtremelyDark);
        assert_eq!(annotate_light(3.0).unwrap().label(), "Extremely dark");
        assert_eq!(annotate_light(0.0).unwrap().level(), 1);
        assert_eq!(annotate_light(5.0).unwrap().level(), 2);
        assert_eq!(annotate_light(1e6).unwrap().level(), 5);
        assert_eq!(annotate_light(-0.1), Err(AnnotateError::NegativeInput(-0.1)));
    }

    #[test]
    fn sound_examples() {
        assert_eq!(annotate_sound(-80.0).unwrap(), SoundLevel::VeryQuiet);
        assert_eq!(annotate_sound(-40.0).unwrap(), SoundLevel::NormalSound);
        assert_eq!(annotate_sound(-5.0).unwrap(), SoundLevel::VeryNoisy);
        assert_eq!(annotate_sound(0.0).unwrap(), SoundLevel::VeryNoisy);
        assert_eq!(annotate_sound(-70.0).unwrap(), SoundLevel::SoftSound);
        assert_eq!(annotate_sound(0.5), Err(AnnotateError::PositiveDbfs(0.5)));
    }

    #[test]
    fn temperature_examples() {
        assert_eq!(annotate_temperature(5.0).unwrap(), TemperatureLevel::Cold);
        assert_eq!(annotate_temperature(20.0).unwrap(), TemperatureLevel::Comfortable);
        assert_eq!(annotate_temperature(35.0).unwrap(), TemperatureLevel::Hot);
        assert_eq!(annotate_temperature(30.0).unwrap(), TemperatureLevel::Hot);
        assert!(annotate_temperature(f64::NAN).is_err());
    }

    #[test]
    fn dbfs_examples() {
        let clip = |v: f64| AudioClip {
            sample_rate_hz: 8000.0,
            samples: vec![v; 64],
        };
        assert_eq!(rms_dbfs(&clip(1.0)).unwrap(), 0.0);
        assert!((rms_dbfs(&clip(0.1)).unwrap() + 20.0).abs() < 1e-12);
        assert_eq!(rms_dbfs(&clip(0.0)).unwrap(), DBFS_FLOOR);
        let empty = AudioClip {
            sample_rate_hz: 8000.0,
            samples: vec![],
        };
        assert_eq!(rms_dbfs(&empty), Err(AnnotateError::EmptyClip));
    }

    #[test]
    fn altitude_examples() {
        assert_eq!(estimate_altitude(1013.25).unwrap(), 0.0);
        assert!((estimate_altitude(900.0).unwrap() - 988.8).abs() < 0.5);
        assert!((estimate_altitude(226.32).unwrap() - 11000.0).abs() < 10.0);
        assert!(estimate_altitude(0.0).is_err());
        assert!(estimate_altitude(1200.0).is_err());
        assert_eq!(estimate_altitude_with_reference(1000.0, 1000.0).unwrap(), 0.0);
    }

    #[test]
    fn band_descriptions() {
        assert_eq!(
            IlluminationLevel::ExtremelyDark.describe(),
            "Level 1 (0–5 Lux): Extremely dark"
        );
        assert_eq!(
            IlluminationLevel::HarshLight.describe(),
            "Level 5 (>1000 Lux): Harsh light"
        );
        assert_eq!(SoundLevel::VeryQuiet.describe(), "< –70 dBFS: Very Quiet");
        assert_eq!(SoundLevel::SoftSound.describe(), "(–70, –50) dBFS: Soft Sound");
        assert_eq!(SoundLevel::VeryNoisy.describe(), "> –10 dBFS: Very Noisy");
        assert_eq!(TemperatureLevel::Cold.describe(), "<10°C: Cold");
        assert_eq!(TemperatureLevel::Comfortable.describe(), "18–26°C: Comfortable");
        assert_eq!(TemperatureLevel::Hot.describe(), ">30°C: Hot");
    }

    #[test]
    fn illumination_serde_shape() {
        let v = serde_json::to_value(IlluminationLevel::Dim).unwrap();
        assert_eq!(v, serde_json::json!({"level": 2, "label": "Dim"}));
        let back: IlluminationLevel = serde_json::from_value(v).unwrap();
        assert_eq!(back, IlluminationLevel::Dim);
        assert!(
            serde_json::from_value::<IlluminationLevel>(serde_json::json!({"level": 2, "label": "Bright"})).is_err()
        );
        assert_eq!(serde_json::to_value(SoundLevel::VeryNoisy).unwrap(), "Very Noisy");
    }
}
