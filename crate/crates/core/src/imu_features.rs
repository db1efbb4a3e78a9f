//! The 26-value motion feature block computed per inertial sensor.
//!
//! Layout of one block:
//!
//! | index | group           | values |
//! |-------|-----------------|--------|
//! | 0..9  | time domain     | mean, std, skewness, kurtosis, max, min, iqr, signal entropy, temporal entropy |
//! | 9..15 | frequency domain| ln energy of 5 equal bands over (0, fs/2], spectral entropy |
//! | 15..17| autocorrelation | dominant lag (s), peak value |
//! | 17..26| axis            | mean x/y/z, std x/y/z, corr xy/xz/yz |
//!
//! The first three groups are computed on the magnitude series, the last on the
//! raw axes. Degenerate zero-variance inputs produce zeros instead of NaN.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, distribution_entropy, histogram_entropy, mean, pop_std, quantile_sorted};
use crate::ingest::{ImuSensor, SensorWindow, TriAxisSeries};

pub const BLOCK_LEN: usize = 26;
pub const ENTROPY_BINS: usize = 16;
pub const N_BANDS: usize = 5;
pub const LOG_ENERGY_FLOOR: f64 = 1e-12;

pub const IMU_FEATURE_NAMES: [&str; BLOCK_LEN] = [
    "mean",
    "std",
    "skewness",
    "kurtosis",
    "max",
    "min",
    "iqr",
    "signal_entropy",
    "temporal_entropy",
    "log_energy_band1",
    "log_energy_band2",
    "log_energy_band3",
    "log_energy_band4",
    "log_energy_band5",
    "spectral_entropy",
    "dominant_lag_s",
    "dominant_peak_value",
    "mean_x",
    "mean_y",
    "mean_z",
    "std_x",
    "std_y",
    "std_z",
    "corr_xy",
    "corr_xz",
    "corr_yz",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("series is empty")]
    EmptySeries,
    #[error("series too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("sample rate must be positive, got {0}")]
    BadSampleRate(f64),
    #[error("window has no IMU data")]
    NoImuData,
    #[error("{sensor} series: {source}")]
    Sensor {
        sensor: &'static str,
        #[source]
        source: Box<FeatureError>,
    },
}

/// Autocorrelation lag search range, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuFeatureConfig {
    pub min_lag_s: f64,
    pub max_lag_s: f64,
}

impl Default for ImuFeatureConfig {
    fn default() -> Self {
        ImuFeatureConfig {
            min_lag_s: 0.25,
            max_lag_s: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuFeatureBlock {
    pub time_domain: [f64; 9],
    pub freq_domain: [f64; 6],
    pub autocorr: [f64; 2],
    pub axis: [f64; 9],
}

impl ImuFeatureBlock {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(BLOCK_LEN);
        v.extend_from_slice(&self.time_domain);
        v.extend_from_slice(&self.freq_domain);
        v.extend_from_slice(&self.autocorr);
        v.extend_from_slice(&self.axis);
        v
    }

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        if v.len() != BLOCK_LEN {
            return None;
        }
        let mut b = ImuFeatureBlock {
            time_domain: [0.0; 9],
            freq_domain: [0.0; 6],
            autocorr: [0.0; 2],
            axis: [0.0; 9],
        };
        b.time_domain.copy_from_slice(&v[0..9]);
        b.freq_domain.copy_from_slice(&v[9..15]);
        b.autocorr.copy_from_slice(&v[15..17]);
        b.axis.copy_from_slice(&v[17..26]);
        Some(b)
    }
}

/// Per-sensor blocks in accel, gyro, mag order; absent sensors are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuFeatureVector {
    pub blocks: Vec<(ImuSensor, ImuFeatureBlock)>,
}

impl ImuFeatureVector {
    pub fn mask(&self) -> [bool; 3] {
        ImuSensor::ALL.map(|s| self.blocks.iter().any(|(b, _)| *b == s))
    }

    pub fn block(&self, sensor: ImuSensor) -> Option<&ImuFeatureBlock> {
        self.blocks.iter().find(|(s, _)| *s == sensor).map(|(_, b)| b)
    }

    pub fn values(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|(_, b)| b.to_vec()).collect()
    }

    /// Sidecar names matching [`values`](Self::values), e.g. `accel.mean`.
    pub fn names(&self) -> Vec<String> {
        self.blocks
            .iter()
            .flat_map(|(s, _)| IMU_FEATURE_NAMES.iter().map(move |n| format!("{}.{n}", s.as_str())))
            .collect()
    }
}

pub fn magnitude_series(s: &TriAxisSeries) -> Result<Vec<f64>, FeatureError> {
    if s.is_empty() {
        return Err(FeatureError::EmptySeries);
    }
    Ok(s.x
        .iter()
        .zip(&s.y)
        .zip(&s.z)
        .map(|((x, y), z)| (x * x + y * y + z * z).sqrt())
        .collect())
}

fn need(len: usize, needed: usize) -> Result<(), FeatureError> {
    if len < needed {
        Err(FeatureError::TooShort { needed, got: len })
    } else {
        Ok(())
    }
}

fn check_rate(fs: f64) -> Result<(), FeatureError> {
    if fs.is_finite() && fs > 0.0 {
        Ok(())
    } else {
        Err(FeatureError::BadSampleRate(fs))
    }
}

/// mean, std, skewness, excess kurtosis, max, min, iqr, signal entropy, temporal entropy.
pub fn time_domain_features(m: &[f64]) -> Result<[f64; 9], FeatureError> {
    need(m.len(), 2)?;
    let n = m.len() as f64;
    let mu = mean(m);
    let (m2, m3, m4) = m.iter().fold((0.0, 0.0, 0.0), |(a, b, c), x| {
        let d = x - mu;
        let d2 = d * d;
        (a + d2, b + d2 * d, c + d2 * d2)
    });
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let std = m2.sqrt();
    let (skew, kurt) = if std > 0.0 && !dsp::is_constant(m) {
        (m3 / std.powi(3), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let mut sorted = m.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let diffs: Vec<f64> = m.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    Ok([
        mu,
        if dsp::is_constant(m) { 0.0 } else { std },
        skew,
        kurt,
        sorted[sorted.len() - 1],
        sorted[0],
        iqr,
        histogram_entropy(m, ENTROPY_BINS),
        histogram_entropy(&diffs, ENTROPY_BINS),
    ])
}

/// Five log band energies over (0, fs/2] and the spectral entropy.
///
/// The signal is mean-removed and Hann-windowed; bin `k` of an `n`-point
/// transform belongs to band `min(10k / n, 4)`. Power is `|X_k|² / n`.
pub fn frequency_domain_features(m: &[f64], fs: f64) -> Result<[f64; 6], FeatureError> {
    need(m.len(), 8)?;
    check_rate(fs)?;
    let n = m.len();
    let mut out = [LOG_ENERGY_FLOOR.ln(); 6];
    out[5] = 0.0;
    if dsp::is_constant(m) {
        return Ok(out);
    }
    let mu = mean(m);
    let window = dsp::hann(n);
    let centered: Vec<f64> = m.iter().zip(&window).map(|(x, w)| (x - mu) * w).collect();
    let spectrum = dsp::real_fft(&centered, n);
    let power: Vec<f64> = (1..=n / 2).map(|k| spectrum[k].norm_sqr() / n as f64).collect();
    let mut bands = [0.0; N_BANDS];
    for (i, p) in power.iter().enumerate() {
        let k = i + 1;
        bands[((N_BANDS * 2 * k) / n).min(N_BANDS - 1)] += p;
    }
    for (slot, e) in out.iter_mut().zip(bands) {
        *slot = (e + LOG_ENERGY_FLOOR).ln();
    }
    out[5] = distribution_entropy(&power);
    Ok(out)
}

pub fn autocorrelation_features(m: &[f64], fs: f64) -> Result<[f64; 2], FeatureError> {
    autocorrelation_features_with(m, fs, &ImuFeatureConfig::default())
}

/// Dominant period from the biased normalised autocorrelation.
///
/// Searches lags `[round(min_lag_s·fs), min(round(max_lag_s·fs), len−1)]` (lower
/// bound at least 1) and returns `(lag / fs, r(lag))` for the first maximum.
/// Computed through a zero-padded FFT.
pub fn autocorrelation_features_with(m: &[f64], fs: f64, cfg: &ImuFeatureConfig) -> Result<[f64; 2], FeatureError> {
    check_rate(fs)?;
    need(m.len(), ((fs * 0.5).ceil() as usize).max(2))?;
    let n = m.len();
    let lo = ((cfg.min_lag_s * fs).round() as usize).max(1);
    let hi = ((cfg.max_lag_s * fs).round() as usize).min(n - 1);
    if lo > hi {
        return Err(FeatureError::TooShort { needed: lo + 1, got: n });
    }
    if dsp::is_constant(m) {
        return Ok([lo as f64 / fs, 0.0]);
    }
    let mu = mean(m);
    let centered: Vec<f64> = m.iter().map(|x| x - mu).collect();
    let len = (2 * n).next_power_of_two();
    let mut spec = dsp::real_fft(&centered, len);
    for c in spec.iter_mut() {
        *c = rustfft::num_complex::Complex::new(c.norm_sqr(), 0.0);
    }
    dsp::inverse_fft(len).process(&mut spec);
    let r0 = spec[0].re;
    if !(r0 > 0.0) {
        return Ok([lo as f64 / fs, 0.0]);
    }
    let (best_lag, best) = (lo..=hi)
        .map(|tau| (tau, spec[tau].re / r0))
        .fold(
            (lo, f64::NEG_INFINITY),
            |acc, cur| if cur.1 > acc.1 { cur } else { acc },
        );
    Ok([best_lag as f64 / fs, best])
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    if dsp::is_constant(a) || dsp::is_constant(b) {
        return 0.0;
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let denom = (saa * sbb).sqrt();
    if denom > 0.0 {
        (sab / denom).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

/// Per-axis means and population stds, then Pearson correlations xy, xz, yz.
pub fn axis_features(s: &TriAxisSeries) -> Result<[f64; 9], FeatureError> {
    need(s.len(), 2)?;
    let axes = [&s.x, &s.y, &s.z];
    let std = |v: &[f64]| if dsp::is_constant(v) { 0.0 } else { pop_std(v) };
    Ok([
        mean(&s.x),
        mean(&s.y),
        mean(&s.z),
        std(&s.x),
        std(&s.y),
        std(&s.z),
        pearson(axes[0], axes[1]),
        pearson(axes[0], axes[2]),
        pearson(axes[1], axes[2]),
    ])
}

pub fn imu_block(s: &TriAxisSeries, cfg: &ImuFeatureConfig) -> Result<ImuFeatureBlock, FeatureError> {
    let m = magnitude_series(s)?;
    Ok(ImuFeatureBlock {
        time_domain: time_domain_features(&m)?,
        freq_domain: frequency_domain_features(&m, s.sample_rate_hz)?,
        autocorr: autocorrelation_features_with(&m, s.sample_rate_hz, cfg)?,
        axis: axis_features(s)?,
    })
}

pub fn extract_imu_features(w: &SensorWindow) -> Result<ImuFeatureVector, FeatureError> {
    extract_imu_features_with(w, &ImuFeatureConfig::default())
}

pub fn extract_imu_features_with(w: &SensorWindow, cfg: &ImuFeatureConfig) -> Result<ImuFeatureVector, FeatureError> {
    let mut blocks = Vec::new();
    for sensor in ImuSensor::ALL {
        if let Some(series) = w.imu(sensor) {
            let block = imu_block(series, cfg).map_err(|e| FeatureError::Sensor {
                sensor: sensor.as_str(),
                source: Box::new(e),
            })?;
            blocks.push((sensor, block));
        }
    }
    if blocks.is_empty() {
        return Err(FeatureError::NoImuData);
    }
    Ok(ImuFeatureVector { blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn series(fs: f64, x: Vec<f64>, y: Vec<f64>, z: Vec<f64>) -> TriAxisSeries {
        TriAxisSeries::new(fs, x, y, z).unwrap()
    }

    fn sine(freq: f64, fs: f64, secs: f64) -> Vec<f64> {
        let n = (fs * secs) as usize;
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect()
    }

    #[test]
    fn magnitudes() {
        let s = series(1.0, vec![3.0, 0.0, 1.0], vec![4.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]);
        let m = magnitude_series(&s).unwrap();
        assert_eq!(m[0], 5.0);
        assert_eq!(m[1], 0.0);
        assert!((m[2] - 1.7320508).abs() < 1e-7);
    }

    #[test]
    fn time_domain_constant() {
        let f = time_domain_features(&[2.5; 10]).unwrap();
        assert_eq!(f, [2.5, 0.0, 0.0, 0.0, 2.5, 2.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn time_domain_two_points() {
        let f = time_domain_features(&[0.0, 1.0]).unwrap();
        assert_eq!(f[0], 0.5);
        assert_eq!(f[1], 0.5);
        assert_eq!(f[4], 1.0);
        assert_eq!(f[5], 0.0);
    }

    #[test]
    fn skewness_of_single_spike() {
        let f = time_domain_features(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((f[2] - 1.1547).abs() < 1e-4, "{}", f[2]);
        assert!(matches!(
            time_domain_features(&[1.0]),
            Err(FeatureError::TooShort { .. })
        ));
    }

    #[test]
    fn tone_lands_in_second_band() {
        let f = frequency_domain_features(&sine(15.0, 100.0, 4.0), 100.0).unwrap();
        let max_band = (0..5).max_by(|a, b| f[*a].total_cmp(&f[*b])).unwrap();
        assert_eq!(max_band, 1);
    }

    #[test]
    fn dc_only_hits_floor() {
        let f = frequency_domain_features(&[3.0; 64], 50.0).unwrap();
        for v in &f[..5] {
            assert_eq!(*v, LOG_ENERGY_FLOOR.ln());
        }
        assert_eq!(f[5], 0.0);
        assert!(frequency_domain_features(&[1.0; 7], 50.0).is_err());
    }

    #[test]
    fn autocorr_finds_period() {
        let a = autocorrelation_features(&sine(2.0, 100.0, 5.0), 100.0).unwrap();
        assert!((a[0] - 0.5).abs() <= 0.01, "{a:?}");
        let b = autocorrelation_features(&sine(1.0, 50.0, 5.0), 50.0).unwrap();
        assert!((b[0] - 1.0).abs() <= 0.02, "{b:?}");
    }

    #[test]
    fn autocorr_constant_convention() {
        let a = autocorrelation_features(&[1.0; 100], 20.0).unwrap();
        assert_eq!(a, [5.0 / 20.0, 0.0]);
        assert!(autocorrelation_features(&[1.0; 4], 20.0).is_err());
    }

    #[test]
    fn axis_correlations() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let f = axis_features(&series(1.0, x.clone(), x.clone(), neg.clone())).unwrap();
        assert!((f[6] - 1.0).abs() < 1e-12);
        assert!((f[7] + 1.0).abs() < 1e-12);
        let f = axis_features(&series(1.0, vec![1.0; 10], x, neg)).unwrap();
        assert_eq!(f[6], 0.0);
        assert_eq!(f[7], 0.0);
    }

    #[test]
    fn vector_arity_and_mask() {
        let s = series(20.0, sine(1.0, 20.0, 4.0), sine(2.0, 20.0, 4.0), vec![9.8; 80]);
        let mut w = SensorWindow {
            accel: Some(s.clone()),
            ..Default::default()
        };
        let v = extract_imu_features(&w).unwrap();
        assert_eq!(v.values().len(), 26);
        assert_eq!(v.mask(), [true, false, false]);
        w.gyro = Some(s.clone());
        w.mag = Some(s);
        let v = extract_imu_features(&w).unwrap();
        assert_eq!(v.values().len(), 78);
        assert_eq!(v.names()[26], "gyro.mean");
        assert_eq!(
            extract_imu_features(&SensorWindow::default()),
            Err(FeatureError::NoImuData)
        );
    }
}
