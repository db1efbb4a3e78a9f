//! Seeded generator for labelled day-long activity streams.
//!
//! Randomness comes from ChaCha8 seeded with `SynthConfig::seed`, never from the
//! platform, so a seed reproduces the same bytes everywhere. Independent parts
//! use separate ChaCha streams of the same key:
//!
//! | stream | draws |
//! |---|---|
//! | 0 | activity and location sequence |
//! | 1 | physiological noise |
//! | 2 + i | sensor signals of window `i` |
//!
//! Heart rate is `baseline(activity) + e_t` with `e_t = phi * e_{t-1} + u_t`,
//! `u_t ~ Uniform[-a, a]`, `a = 1.5 * hr_noise_sigma`, `phi = 0.5`. The stationary
//! standard deviation of `e` is then `hr_noise_sigma` and `|e_t| <= 2a = 3 * hr_noise_sigma`.
//! EDA and skin temperature move toward per-activity set points by exponential
//! smoothing with `physio_smoothing`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geoloc::{BeaconLocation, BeaconMap, Gazetteer, GazetteerEntry};
use crate::imu_features::extract_imu_features;
use crate::inference::{Activity, CentroidModel};
use crate::ingest::{
    to_civil_time, AudioClip, GpsPoint, Modality, Payload, PhysioSnapshot, SensorRecord, SensorWindow, TriAxisSeries,
};

pub const IMU_RATE_HZ: f64 = 20.0;
pub const IMU_SAMPLES: usize = 128;
pub const AUDIO_RATE_HZ: f64 = 8000.0;
pub const AUDIO_SAMPLES: usize = 800;
const GRAVITY: f64 = 9.81;
const PRIOR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthClass {
    Lying,
    Sitting,
    Standing,
    Walking,
    Stairs,
}

impl SynthClass {
    pub const ALL: [SynthClass; 5] = [
        SynthClass::Lying,
        SynthClass::Sitting,
        SynthClass::Standing,
        SynthClass::Walking,
        SynthClass::Stairs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SynthClass::Lying => "lying",
            SynthClass::Sitting => "sitting",
            SynthClass::Standing => "standing",
            SynthClass::Walking => "walking",
            SynthClass::Stairs => "stairs",
        }
    }

    /// Stair windows are labelled as climbing.
    pub fn activity(self) -> Activity {
        match self {
            SynthClass::Lying => Activity::Lying,
            SynthClass::Sitting => Activity::Sitting,
            SynthClass::Standing => Activity::Standing,
            SynthClass::Walking => Activity::Walking,
            SynthClass::Stairs => Activity::AscendingStairs,
        }
    }
}

impl fmt::Display for SynthClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("{field}: {message}")]
    InvalidConfig { field: String, message: String },
    #[error("no physiological baseline for {0}")]
    MissingBaseline(SynthClass),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> SynthError {
    SynthError::InvalidConfig {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassPrior {
    pub lying: f64,
    pub sitting: f64,
    pub standing: f64,
    pub walking: f64,
    pub stairs: f64,
}

impl ClassPrior {
    pub fn get(&self, c: SynthClass) -> f64 {
        match c {
            SynthClass::Lying => self.lying,
            SynthClass::Sitting => self.sitting,
            SynthClass::Standing => self.standing,
            SynthClass::Walking => self.walking,
            SynthClass::Stairs => self.stairs,
        }
    }

    pub fn sum(&self) -> f64 {
        SynthClass::ALL.iter().map(|c| self.get(*c)).sum()
    }

    fn validate(&self, field: &str) -> Result<(), SynthError> {
        if let Some(c) = SynthClass::ALL
            .iter()
            .find(|c| !(self.get(**c) >= 0.0 && self.get(**c).is_finite()))
        {
            return Err(invalid(
                format!("{field}.{c}"),
                "must be a finite non-negative probability",
            ));
        }
        let sum = self.sum();
        if (sum - 1.0).abs() > PRIOR_TOLERANCE {
            return Err(invalid(field, format!("probabilities sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysioBaseline {
    pub hr_bpm: f64,
    pub eda_microsiemens: f64,
    pub temp_celsius: f64,
}

/// A forced activity over `[start_s, end_s)` seconds from the stream start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptSpan {
    pub start_s: f64,
    pub end_s: f64,
    pub activity: SynthClass,
    #[serde(default)]
    pub location_id: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub window_s: f64,
    pub start_unix_ts: f64,
    pub utc_offset_minutes: i32,
    pub night_prior: ClassPrior,
    pub day_prior: ClassPrior,
    pub transition_map: BTreeMap<SynthClass, Vec<SynthClass>>,
    pub move_prob_night: f64,
    pub move_prob_day: f64,
    pub physio_baselines: BTreeMap<SynthClass, PhysioBaseline>,
    pub hr_noise_sigma: f64,
    pub hr_ar_phi: f64,
    pub physio_smoothing: f64,
    pub script: Vec<ScriptSpan>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        use SynthClass::*;
        let baseline = |hr, eda, temp| PhysioBaseline {
            hr_bpm: hr,
            eda_microsiemens: eda,
            temp_celsius: temp,
        };
        SynthConfig {
            seed: 1,
            window_s: 120.0,
            // 2023-11-15 00:00:00 UTC
            start_unix_ts: 1_700_006_400.0,
            utc_offset_minutes: 0,
            night_prior: ClassPrior {
                lying: 0.80,
                sitting: 0.05,
                standing: 0.05,
                walking: 0.05,
                stairs: 0.05,
            },
            day_prior: ClassPrior {
                lying: 0.05,
                sitting: 0.50,
                standing: 0.20,
                walking: 0.15,
                stairs: 0.10,
            },
            transition_map: BTreeMap::from([
                (Lying, vec![Sitting, Standing]),
                (Stairs, vec![Walking]),
                (Sitting, vec![Standing, Lying]),
            ]),
            move_prob_night: 0.01,
            move_prob_day: 0.08,
            physio_baselines: BTreeMap::from([
                (Lying, baseline(60.0, 0.3, 36.3)),
                (Sitting, baseline(70.0, 0.5, 36.5)),
                (Standing, baseline(75.0, 0.6, 36.6)),
                (Walking, baseline(95.0, 1.2, 36.9)),
                (Stairs, baseline(110.0, 1.6, 37.1)),
            ]),
            hr_noise_sigma: 2.0,
            hr_ar_phi: 0.5,
            physio_smoothing: 0.3,
            script: Vec::new(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        self.night_prior.validate("night_prior")?;
        self.day_prior.validate("day_prior")?;
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return Err(invalid("window_s", format!("must be positive, got {}", self.window_s)));
        }
        if !(self.start_unix_ts >= 0.0 && self.start_unix_ts.is_finite()) {
            return Err(invalid("start_unix_ts", "must be a non-negative epoch time"));
        }
        if self.utc_offset_minutes.abs() >= 24 * 60 {
            return Err(invalid("utc_offset_minutes", "must be within a day"));
        }
        for (field, p) in [
            ("move_prob_night", self.move_prob_night),
            ("move_prob_day", self.move_prob_day),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(field, format!("must be in [0, 1], got {p}")));
            }
        }
        for (from, to) in &self.transition_map {
            if to.is_empty() {
                return Err(invalid(
                    format!("transition_map.{from}"),
                    "needs at least one successor",
                ));
            }
        }
        if !(self.hr_noise_sigma >= 0.0 && self.hr_noise_sigma.is_finite()) {
            return Err(invalid("hr_noise_sigma", "must be non-negative"));
        }
        if !(self.hr_ar_phi >= 0.0 && self.hr_ar_phi < 1.0) {
            return Err(invalid("hr_ar_phi", "must be in [0, 1)"));
        }
        if !(self.physio_smoothing > 0.0 && self.physio_smoothing <= 1.0) {
            return Err(invalid("physio_smoothing", "must be in (0, 1]"));
        }
        for (i, s) in self.script.iter().enumerate() {
            if !(s.start_s >= 0.0 && s.end_s > s.start_s) {
                return Err(invalid(format!("script[{i}]"), "needs 0 <= start_s < end_s"));
            }
            if s.location_id.is_some_and(|l| l >= PLACES.len()) {
                return Err(invalid(format!("script[{i}].location_id"), "no such place"));
            }
        }
        Ok(())
    }

    pub fn is_night(hour: u8) -> bool {
        hour <= 7
    }

    pub fn prior_for_hour(&self, hour: u8) -> &ClassPrior {
        if Self::is_night(hour) {
            &self.night_prior
        } else {
            &self.day_prior
        }
    }

    /// Successors allowed after `prev`; `None` means unconstrained.
    pub fn allowed_after(&self, prev: SynthClass) -> Option<&[SynthClass]> {
        self.transition_map.get(&prev).map(Vec::as_slice)
    }

    pub fn permits(&self, prev: SynthClass, next: SynthClass) -> bool {
        self.allowed_after(prev).is_none_or(|a| a.contains(&next))
    }

    fn scripted(&self, offset_s: f64) -> Option<&ScriptSpan> {
        self.script.iter().find(|s| offset_s >= s.start_s && offset_s < s.end_s)
    }
}

/// Draws one class for a window. A location change always means walking.
///
/// Otherwise the hour's prior is restricted to the successors allowed after
/// `prev` and renormalised; if the prior puts no mass there the allowed set is
/// drawn uniformly.
pub fn sample_activity<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    prev: Option<SynthClass>,
    civil_hour: u8,
    location_changed: bool,
    rng: &mut R,
) -> SynthClass {
    if location_changed {
        return SynthClass::Walking;
    }
    let prior = cfg.prior_for_hour(civil_hour);
    let allowed: Vec<SynthClass> = match prev.and_then(|p| cfg.allowed_after(p)) {
        Some(a) => SynthClass::ALL.iter().copied().filter(|c| a.contains(c)).collect(),
        None => SynthClass::ALL.to_vec(),
    };
    let mut weights: Vec<f64> = allowed.iter().map(|c| prior.get(*c)).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        weights = vec![1.0; allowed.len()];
    }
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (c, w) in allowed.iter().zip(&weights) {
        if u < *w {
            return *c;
        }
        u -= w;
    }
    *allowed
        .iter()
        .zip(&weights)
        .rev()
        .find(|(_, w)| **w > 0.0)
        .expect("some weight")
        .0
}

/// Count of adjacent pairs that break the transition map.
pub fn transition_violations(cfg: &SynthConfig, seq: &[SynthClass]) -> usize {
    seq.windows(2).filter(|w| !cfg.permits(w[0], w[1])).count()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneProfile {
    pub scene: &'static str,
    pub tones_hz: [f64; 3],
    pub tone_amp: f64,
    pub noise_amp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Place {
    pub name: &'static str,
    pub lat: f64,
    pub lon: f64,
    pub street: &'static str,
    pub district: &'static str,
    pub place_type: &'static str,
    pub indoor: bool,
    pub wifi_ssid: &'static str,
    pub bt_mac: &'static str,
    pub audio: SceneProfile,
}

const fn scene(scene: &'static str, tones_hz: [f64; 3], tone_amp: f64, noise_amp: f64) -> SceneProfile {
    SceneProfile {
        scene,
        tones_hz,
        tone_amp,
        noise_amp,
    }
}

/// Places around Hanover, NH, each with its own acoustic scene category.
pub const PLACES: [Place; 7] = [
    Place {
        name: "home",
        lat: 43.7022,
        lon: -72.2896,
        street: "12 School Street",
        district: "Downtown",
        place_type: "residential area",
        indoor: true,
        wifi_ssid: "home-net",
        bt_mac: "a4:c1:38:00:00:01",
        audio: scene("home", [120.0, 440.0, 0.0], 0.002, 0.001),
    },
    Place {
        name: "library",
        lat: 43.7056,
        lon: -72.2887,
        street: "25 North Main Street",
        district: "Campus",
        place_type: "library",
        indoor: true,
        wifi_ssid: "campus-library",
        bt_mac: "a4:c1:38:00:00:02",
        audio: scene("library", [60.0, 0.0, 0.0], 0.0002, 0.0001),
    },
    Place {
        name: "cafe",
        lat: 43.6995,
        lon: -72.2905,
        street: "41 South Main Street",
        district: "Downtown",
        place_type: "restaurant",
        indoor: true,
        wifi_ssid: "cafe-guest",
        bt_mac: "a4:c1:38:00:00:03",
        audio: scene("cafe/restaurant", [300.0, 950.0, 2100.0], 0.05, 0.06),
    },
    Place {
        name: "office",
        lat: 43.7046,
        lon: -72.2958,
        street: "6 Maynard Street",
        district: "West End",
        place_type: "office",
        indoor: true,
        wifi_ssid: "office-corp",
        bt_mac: "a4:c1:38:00:00:04",
        audio: scene("office", [50.0, 1000.0, 0.0], 0.004, 0.004),
    },
    Place {
        name: "grocery",
        lat: 43.6960,
        lon: -72.2870,
        street: "45 South Park Street",
        district: "South End",
        place_type: "grocery store",
        indoor: true,
        wifi_ssid: "coop-free",
        bt_mac: "a4:c1:38:00:00:05",
        audio: scene("grocery store", [220.0, 1760.0, 3000.0], 0.02, 0.02),
    },
    Place {
        name: "park",
        lat: 43.7090,
        lon: -72.2830,
        street: "Occom Pond Road",
        district: "North End",
        place_type: "park",
        indoor: false,
        wifi_ssid: "",
        bt_mac: "",
        audio: scene("park", [2500.0, 3200.0, 0.0], 0.006, 0.008),
    },
    Place {
        name: "city center",
        lat: 43.7010,
        lon: -72.2940,
        street: "1 West Wheelock Street",
        district: "Downtown",
        place_type: "city center",
        indoor: false,
        wifi_ssid: "",
        bt_mac: "",
        audio: scene("city center", [90.0, 180.0, 700.0], 0.1, 0.12),
    },
];

pub const HOME: usize = 0;

pub fn default_gazetteer() -> Gazetteer {
    Gazetteer::new(
        PLACES
            .iter()
            .map(|p| GazetteerEntry {
                lat: p.lat,
                lon: p.lon,
                street: p.street.into(),
                district: p.district.into(),
                city: "Hanover".into(),
                country: "United States".into(),
                place_type: p.place_type.into(),
            })
            .collect(),
    )
    .expect("built-in places are valid")
}

/// Indoor positions for the synthetic Wi-Fi networks.
pub fn default_beacons() -> BeaconMap {
    let mut map = BeaconMap::default();
    for (i, p) in PLACES.iter().enumerate().filter(|(_, p)| p.indoor) {
        map.entries.insert(
            p.wifi_ssid.into(),
            BeaconLocation {
                building: p.name.to_string(),
                floor: 1 + (i as i32 % 3),
                room: String::new(),
            },
        );
    }
    map
}

/// One labelled step of the day before any signals are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayStep {
    pub label: SynthClass,
    pub location_id: usize,
    pub location_changed: bool,
}

pub fn window_count(duration_s: f64, window_s: f64) -> usize {
    (duration_s / window_s).ceil() as usize
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn civil_hour(cfg: &SynthConfig, i: usize) -> u8 {
    to_civil_time(cfg.start_unix_ts + i as f64 * cfg.window_s, cfg.utc_offset_minutes)
        .expect("validated start time")
        .hour_of_day()
}

/// Activity and location sequence for `duration_s` seconds.
///
/// A location change is only drawn when walking may follow the previous class,
/// so the forced walk never breaks the transition map. Scripted spans override
/// both rules.
pub fn synthesize_labels(cfg: &SynthConfig, duration_s: f64) -> Result<Vec<DayStep>, SynthError> {
    cfg.validate()?;
    let mut rng = rng_stream(cfg.seed, 0);
    let n = window_count(duration_s, cfg.window_s);
    let mut out = Vec::with_capacity(n);
    let mut prev: Option<SynthClass> = None;
    let mut location = HOME;
    for i in 0..n {
        let offset = i as f64 * cfg.window_s;
        let hour = civil_hour(cfg, i);
        if let Some(span) = cfg.scripted(offset) {
            let next_location = span.location_id.unwrap_or(location);
            out.push(DayStep {
                label: span.activity,
                location_id: next_location,
                location_changed: next_location != location,
            });
            location = next_location;
            prev = Some(span.activity);
            continue;
        }
        let p_move = if SynthConfig::is_night(hour) {
            cfg.move_prob_night
        } else {
            cfg.move_prob_day
        };
        let can_walk = prev.is_none_or(|p| cfg.permits(p, SynthClass::Walking));
        let moved = can_walk && rng.random::<f64>() < p_move;
        if moved {
            // every place has its own scene, so any other place changes the scene
            let k = rng.random_range(0..PLACES.len() - 1);
            location = if k >= location { k + 1 } else { k };
        }
        let label = sample_activity(cfg, prev, hour, moved, &mut rng);
        out.push(DayStep {
            label,
            location_id: location,
            location_changed: moved,
        });
        prev = Some(label);
    }
    Ok(out)
}

/// Heart rate, IBI, EDA, skin temperature and SpO2 per step.
pub fn physio_series(cfg: &SynthConfig, labels: &[SynthClass]) -> Result<Vec<PhysioSnapshot>, SynthError> {
    for c in labels {
        if !cfg.physio_baselines.contains_key(c) {
            return Err(SynthError::MissingBaseline(*c));
        }
    }
    let mut rng = rng_stream(cfg.seed, 1);
    let a = 1.5 * cfg.hr_noise_sigma;
    let alpha = cfg.physio_smoothing;
    let mut e = 0.0;
    let mut state: Option<(f64, f64)> = None;
    Ok(labels
        .iter()
        .map(|c| {
            let base = cfg.physio_baselines[c];
            let u = if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };
            e = cfg.hr_ar_phi * e + u;
            let hr = base.hr_bpm + e;
            let (eda, temp) = match state {
                None => (base.eda_microsiemens, base.temp_celsius),
                Some((eda, temp)) => (
                    eda + alpha * (base.eda_microsiemens - eda),
                    temp + alpha * (base.temp_celsius - temp),
                ),
            };
            state = Some((eda, temp));
            let spo2 = 97.0 + rng.random_range(-1.0..=1.0);
            PhysioSnapshot {
                eda_microsiemens: Some(eda),
                hr_bpm: Some(hr),
                ibi_ms: Some(60000.0 / hr),
                temp_celsius: Some(temp),
                spo2_percent: Some(spo2),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSample {
    pub unix_ts: f64,
    pub label: SynthClass,
    pub activity: Activity,
    pub scene: String,
    pub location_id: usize,
    pub window: SensorWindow,
}

impl SynthSample {
    pub fn physio(&self) -> Option<&PhysioSnapshot> {
        self.window.physio.as_ref()
    }
}

/// Sets each sample's physiological snapshot.
pub fn attach_physio(samples: &mut [SynthSample], cfg: &SynthConfig) -> Result<(), SynthError> {
    let labels: Vec<SynthClass> = samples.iter().map(|s| s.label).collect();
    for (s, p) in samples.iter_mut().zip(physio_series(cfg, &labels)?) {
        if s.window.physio.is_none() {
            s.window.record_count += 1;
        }
        s.window.physio = Some(p);
    }
    Ok(())
}

fn quantize(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

struct MotionPattern {
    gravity_dir: [f64; 3],
    noise: f64,
    step_hz: Option<(f64, f64)>,
    bounce: f64,
    sway: f64,
    gyro_amp: f64,
    gyro_noise: f64,
}

fn motion_pattern(c: SynthClass) -> MotionPattern {
    let rest = |dir, noise, gyro_noise| MotionPattern {
        gravity_dir: dir,
        noise,
        step_hz: None,
        bounce: 0.0,
        sway: 0.0,
        gyro_amp: 0.0,
        gyro_noise,
    };
    match c {
        SynthClass::Lying => rest([0.05, 0.1, 0.99], 0.02, 0.005),
        SynthClass::Sitting => rest([0.9, 0.1, 0.42], 0.04, 0.01),
        SynthClass::Standing => MotionPattern {
            sway: 0.15,
            ..rest([0.1, 0.98, 0.15], 0.08, 0.03)
        },
        SynthClass::Walking => MotionPattern {
            gravity_dir: [0.1, 0.98, 0.15],
            noise: 0.3,
            step_hz: Some((1.7, 2.1)),
            bounce: 2.5,
            sway: 1.0,
            gyro_amp: 0.6,
            gyro_noise: 0.05,
        },
        SynthClass::Stairs => MotionPattern {
            gravity_dir: [0.2, 0.95, 0.25],
            noise: 0.4,
            step_hz: Some((1.3, 1.6)),
            bounce: 3.5,
            sway: 1.5,
            gyro_amp: 0.9,
            gyro_noise: 0.08,
        },
    }
}

fn imu_signals(c: SynthClass, rng: &mut ChaCha8Rng) -> (TriAxisSeries, TriAxisSeries) {
    let p = motion_pattern(c);
    let jitter = Normal::new(0.0, 0.04).expect("valid sigma");
    let mut g: Vec<f64> = p.gravity_dir.iter().map(|d| d + jitter.sample(rng)).collect();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    g.iter_mut().for_each(|v| *v *= GRAVITY / norm);
    let f = p.step_hz.map_or(0.3, |(lo, hi)| rng.random_range(lo..hi));
    let phase = rng.random_range(0.0..2.0 * PI);
    let noise = Normal::new(0.0, p.noise).expect("valid sigma");
    let gnoise = Normal::new(0.0, p.gyro_noise).expect("valid sigma");
    let mut acc = [vec![0.0; IMU_SAMPLES], vec![0.0; IMU_SAMPLES], vec![0.0; IMU_SAMPLES]];
    let mut gyr = [vec![0.0; IMU_SAMPLES], vec![0.0; IMU_SAMPLES], vec![0.0; IMU_SAMPLES]];
    for i in 0..IMU_SAMPLES {
        let t = i as f64 / IMU_RATE_HZ;
        let w = 2.0 * PI * f * t + phase;
        let bounce = p.bounce * w.sin() + 0.3 * p.bounce * (2.0 * w).sin();
        let sway = p.sway * (0.5 * w).sin();
        acc[0][i] = g[0] + sway + noise.sample(rng);
        acc[1][i] = g[1] + bounce + noise.sample(rng);
        acc[2][i] = g[2] + 0.3 * sway + noise.sample(rng);
        gyr[0][i] = p.gyro_amp * w.sin() + gnoise.sample(rng);
        gyr[1][i] = 0.3 * p.gyro_amp * (0.5 * w).cos() + gnoise.sample(rng);
        gyr[2][i] = 0.6 * p.gyro_amp * (0.5 * w).sin() + gnoise.sample(rng);
    }
    let series = |axes: [Vec<f64>; 3]| {
        let [x, y, z] = axes.map(|a| a.into_iter().map(|v| quantize(v, 1e-4)).collect::<Vec<_>>());
        TriAxisSeries::new(IMU_RATE_HZ, x, y, z).expect("synthetic series are well formed")
    };
    (series(acc), series(gyr))
}

fn audio_signal(profile: &SceneProfile, rng: &mut ChaCha8Rng) -> AudioClip {
    let phases: Vec<f64> = profile
        .tones_hz
        .iter()
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect();
    let samples = (0..AUDIO_SAMPLES)
        .map(|i| {
            let t = i as f64 / AUDIO_RATE_HZ;
            let tones: f64 = profile
                .tones_hz
                .iter()
                .zip(&phases)
                .filter(|(f, _)| **f > 0.0)
                .map(|(f, ph)| (2.0 * PI * f * t + ph).sin())
                .sum();
            let v = profile.tone_amp * tones + profile.noise_amp * rng.random_range(-1.0..=1.0);
            quantize(v.clamp(-1.0, 1.0), 1e-6)
        })
        .collect();
    AudioClip::new(AUDIO_RATE_HZ, samples).expect("clamped samples")
}

/// Barometric pressure for a place's elevation, with a small per-window wobble.
fn pressure_for(place: &Place, rng: &mut ChaCha8Rng) -> f64 {
    let base = if place.indoor { 994.0 } else { 993.2 };
    quantize(base + rng.random_range(-0.2..0.2), 1e-2)
}

fn light_for(place: &Place, hour: u8, c: SynthClass, rng: &mut ChaCha8Rng) -> f64 {
    let night = SynthConfig::is_night(hour) || hour >= 22;
    let lux = match (place.indoor, night) {
        (true, true) if c == SynthClass::Lying => 2.0,
        (true, true) => 60.0,
        (true, false) => 350.0,
        (false, true) => 8.0,
        (false, false) => 4000.0,
    };
    quantize(lux * rng.random_range(0.85..1.15), 1e-2)
}

fn temperature_for(place: &Place, rng: &mut ChaCha8Rng) -> f64 {
    let base = if place.indoor { 21.5 } else { 14.0 };
    quantize(base + rng.random_range(-1.0..1.0), 1e-2)
}

/// Sensor window for step `i`, drawn from the step's own RNG stream.
pub fn synth_window(cfg: &SynthConfig, i: usize, step: &DayStep) -> SensorWindow {
    let mut rng = rng_stream(cfg.seed, 2 + i as u64);
    let place = &PLACES[step.location_id];
    let start = cfg.start_unix_ts + i as f64 * cfg.window_s;
    let (accel, gyro) = imu_signals(step.label, &mut rng);
    let audio = audio_signal(&place.audio, &mut rng);
    let gps_jitter = 2e-5;
    let gps = GpsPoint {
        lat: quantize(place.lat + rng.random_range(-gps_jitter..gps_jitter), 1e-6),
        lon: quantize(place.lon + rng.random_range(-gps_jitter..gps_jitter), 1e-6),
    };
    let hour = civil_hour(cfg, i);
    let wifi: Vec<String> = [place.wifi_ssid]
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| s.to_string())
        .collect();
    let bt: Vec<String> = [place.bt_mac]
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| s.to_string())
        .collect();
    let mut w = SensorWindow {
        start_unix_ts: start,
        end_unix_ts: start + cfg.window_s,
        record_count: 2 * IMU_SAMPLES + 4 + usize::from(!wifi.is_empty()) + usize::from(!bt.is_empty()),
        accel: Some(accel),
        gyro: Some(gyro),
        mag: None,
        audio: Some(audio),
        gps: Some(gps),
        pressure_hpa: Some(pressure_for(place, &mut rng)),
        wifi_ssids: wifi,
        bt_macs: bt,
        light_lux: Some(light_for(place, hour, step.label, &mut rng)),
        ambient_temp_c: Some(temperature_for(place, &mut rng)),
        physio: None,
    };
    w.record_count += 1; // the audio chunk
    w
}

pub fn synthesize_span(cfg: &SynthConfig, duration_s: f64) -> Result<Vec<SynthSample>, SynthError> {
    let steps = synthesize_labels(cfg, duration_s)?;
    let mut samples: Vec<SynthSample> = steps
        .iter()
        .enumerate()
        .map(|(i, step)| SynthSample {
            unix_ts: cfg.start_unix_ts + i as f64 * cfg.window_s,
            label: step.label,
            activity: step.label.activity(),
            scene: PLACES[step.location_id].audio.scene.to_string(),
            location_id: step.location_id,
            window: synth_window(cfg, i, step),
        })
        .collect();
    attach_physio(&mut samples, cfg)?;
    Ok(samples)
}

pub fn synthesize_day(cfg: &SynthConfig) -> Result<Vec<SynthSample>, SynthError> {
    synthesize_span(cfg, 86_400.0)
}

/// The raw sensor records a device would have emitted for one window.
pub fn window_records(w: &SensorWindow) -> Vec<SensorRecord> {
    let mut out = Vec::with_capacity(w.record_count);
    let t0 = w.start_unix_ts;
    let mut push = |ts: f64, modality: Modality, payload: Payload| {
        out.push(SensorRecord {
            unix_ts: ts,
            modality,
            payload,
        })
    };
    if let Some(gps) = w.gps {
        push(
            t0 + 0.5,
            Modality::Gps,
            Payload::Position {
                lat: gps.lat,
                lon: gps.lon,
            },
        );
    }
    if !w.wifi_ssids.is_empty() {
        push(t0 + 0.5, Modality::Wifi, Payload::Ssids(w.wifi_ssids.clone()));
    }
    if !w.bt_macs.is_empty() {
        push(t0 + 0.5, Modality::Bluetooth, Payload::Macs(w.bt_macs.clone()));
    }
    if let Some(a) = &w.audio {
        push(
            t0 + 1.0,
            Modality::Audio,
            Payload::Audio {
                sample_rate_hz: a.sample_rate_hz,
                samples: a.samples.clone(),
            },
        );
    }
    if let Some(v) = w.light_lux {
        push(t0 + 2.0, Modality::Light, Payload::Scalar(v));
    }
    if let Some(v) = w.ambient_temp_c {
        push(t0 + 2.0, Modality::Temperature, Payload::Scalar(v));
    }
    if let Some(v) = w.pressure_hpa {
        push(t0 + 2.0, Modality::Barometer, Payload::Scalar(v));
    }
    if let Some(p) = &w.physio {
        push(t0 + 3.0, Modality::Physio, Payload::Physio(p.clone()));
    }
    for (modality, series) in [
        (Modality::ImuAccel, &w.accel),
        (Modality::ImuGyro, &w.gyro),
        (Modality::ImuMag, &w.mag),
    ] {
        if let Some(s) = series {
            for i in 0..s.len() {
                let ts = quantize(t0 + i as f64 / s.sample_rate_hz, 1e-3);
                push(ts, modality, Payload::Axes([s.x[i], s.y[i], s.z[i]]));
            }
        }
    }
    out.sort_by(|a, b| a.unix_ts.total_cmp(&b.unix_ts));
    out
}

/// Record stream for `duration_s` seconds, in time order.
pub fn synthesize_stream(cfg: &SynthConfig, duration_s: f64) -> Result<Vec<SensorRecord>, SynthError> {
    Ok(synthesize_span(cfg, duration_s)?
        .iter()
        .flat_map(|s| window_records(&s.window))
        .collect())
}

pub fn sample_to_json_line(s: &SynthSample) -> String {
    serde_json::to_string(s).expect("samples serialize")
}

/// Nearest-centroid model fitted to synthetic accelerometer windows of every class.
pub fn reference_model() -> CentroidModel {
    const PER_CLASS: usize = 40;
    let cfg = SynthConfig {
        seed: 0x5EED_CE47,
        ..SynthConfig::default()
    };
    let mut samples: Vec<(&'static str, Vec<f64>)> = Vec::new();
    for (ci, c) in SynthClass::ALL.iter().enumerate() {
        for k in 0..PER_CLASS {
            let step = DayStep {
                label: *c,
                location_id: HOME,
                location_changed: false,
            };
            let w = synth_window(&cfg, ci * PER_CLASS + k, &step);
            let f = extract_imu_features(&w).expect("synthetic windows have IMU data");
            let accel = f
                .block(crate::ingest::ImuSensor::Accel)
                .expect("accel present")
                .to_vec();
            samples.push((c.activity().as_str(), accel));
        }
    }
    CentroidModel::fit(samples.iter().map(|(l, v)| (*l, v.as_slice()))).expect("five labels")
}
