//! 120-value ambient audio descriptor: means and standard deviations of
//! 20 MFCCs, their deltas and their delta-deltas.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp;
use crate::ingest::AudioClip;

pub const AUDIO_FEATURE_LEN: usize = 120;
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AudioFeatureError {
    #[error("clip has {got} samples, one frame needs {needed}")]
    ClipTooShort { needed: usize, got: usize },
    #[error("invalid MFCC configuration: {0}")]
    BadConfig(String),
    #[error("wav: {0}")]
    Wav(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub n_mfcc: usize,
    pub n_mels: usize,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub preemphasis: f64,
    pub delta_halfwidth: usize,
    pub window: WindowKind,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            n_mfcc: 20,
            n_mels: 40,
            frame_ms: 25.0,
            hop_ms: 10.0,
            preemphasis: 0.97,
            delta_halfwidth: 2,
            window: WindowKind::Hann,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<(), AudioFeatureError> {
        let bad = |m: String| Err(AudioFeatureError::BadConfig(m));
        if self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return bad(format!("need 0 < n_mfcc ({}) <= n_mels ({})", self.n_mfcc, self.n_mels));
        }
        if !(self.frame_ms > self.hop_ms && self.hop_ms > 0.0) {
            return bad(format!(
                "need frame_ms ({}) > hop_ms ({}) > 0",
                self.frame_ms, self.hop_ms
            ));
        }
        if self.delta_halfwidth == 0 {
            return bad("delta_halfwidth must be >= 1".into());
        }
        Ok(())
    }

    /// Frame and hop lengths in samples at `fs`.
    pub fn frame_geometry(&self, fs: f64) -> (usize, usize) {
        let frame = ((fs * self.frame_ms / 1000.0).round() as usize).max(1);
        let hop = ((fs * self.hop_ms / 1000.0).round() as usize).max(1);
        (frame, hop)
    }
}

/// Number of whole frames in `len` samples; the tail shorter than a frame is dropped.
pub fn frame_count(len: usize, frame: usize, hop: usize) -> usize {
    if len < frame {
        0
    } else {
        (len - frame) / hop + 1
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters on the mel scale spanning `[0, fs/2]`.
///
/// Each filter keeps only its nonzero bins, starting at `first_bin`.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    edges_hz: Vec<f64>,
    first_bin: Vec<usize>,
    weights: Vec<Vec<f64>>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, fs: f64) -> Self {
        let top = hz_to_mel(fs / 2.0);
        let edges_hz: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let n_bins = n_fft / 2 + 1;
        let mut first_bin = Vec::with_capacity(n_mels);
        let mut weights = Vec::with_capacity(n_mels);
        for m in 0..n_mels {
            let (lo, center, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
            let full: Vec<f64> = (0..n_bins)
                .map(|k| {
                    let f = k as f64 * fs / n_fft as f64;
                    if f >= lo && f <= center {
                        (f - lo) / (center - lo)
                    } else if f > center && f <= hi {
                        (hi - f) / (hi - center)
                    } else {
                        0.0
                    }
                })
                .collect();
            let start = full.iter().position(|w| *w != 0.0).unwrap_or(0);
            let end = full.iter().rposition(|w| *w != 0.0).map_or(start, |e| e + 1);
            first_bin.push(start);
            weights.push(full[start..end].to_vec());
        }
        MelFilterbank {
            edges_hz,
            first_bin,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn center_hz(&self, m: usize) -> f64 {
        self.edges_hz[m + 1]
    }

    /// Weight of filter `m` at FFT bin `k`.
    pub fn weight(&self, m: usize, k: usize) -> f64 {
        k.checked_sub(self.first_bin[m])
            .and_then(|i| self.weights[m].get(i))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.first_bin)
            .map(|(w, start)| w.iter().zip(&power[*start..]).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Orthonormal DCT-II basis, `n_out` rows by `n_in` columns.
pub fn dct_matrix(n_out: usize, n_in: usize) -> Vec<Vec<f64>> {
    let n = n_in as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            (0..n_in)
                .map(|i| scale * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
                .collect()
        })
        .collect()
}

/// Log mel energies per frame, before the DCT.
pub fn log_mel_frames(clip: &AudioClip, cfg: &MfccConfig) -> Result<Vec<Vec<f64>>, AudioFeatureError> {
    cfg.validate()?;
    let fs = clip.sample_rate_hz;
    let (frame, hop) = cfg.frame_geometry(fs);
    let n_frames = frame_count(clip.samples.len(), frame, hop);
    if n_frames == 0 {
        return Err(AudioFeatureError::ClipTooShort {
            needed: frame,
            got: clip.samples.len(),
        });
    }
    let x = &clip.samples;
    let emphasized: Vec<f64> = std::iter::once(x[0])
        .chain(x.windows(2).map(|w| w[1] - cfg.preemphasis * w[0]))
        .collect();
    let n_fft = frame.next_power_of_two();
    let window = dsp::hann(frame);
    let bank = MelFilterbank::new(cfg.n_mels, n_fft, fs);
    let fft = dsp::forward_fft(n_fft);
    let mut buf = vec![rustfft::num_complex::Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![rustfft::num_complex::Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut power = vec![0.0; n_fft / 2 + 1];
    let mut out = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let start = t * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            let v = if i < frame {
                emphasized[start + i] * window[i]
            } else {
                0.0
            };
            *slot = rustfft::num_complex::Complex::new(v, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr() / n_fft as f64;
        }
        out.push(bank.apply(&power).into_iter().map(|e| e.max(LOG_FLOOR).ln()).collect());
    }
    Ok(out)
}

/// Frames × `n_mfcc` cepstral matrix; coefficient 1 is the 0th (energy) DCT term.
pub fn mfcc_frames(clip: &AudioClip, cfg: &MfccConfig) -> Result<Vec<Vec<f64>>, AudioFeatureError> {
    let log_mel = log_mel_frames(clip, cfg)?;
    let basis = dct_matrix(cfg.n_mfcc, cfg.n_mels);
    Ok(log_mel
        .iter()
        .map(|row| {
            basis
                .iter()
                .map(|b| b.iter().zip(row).map(|(w, v)| w * v).sum())
                .collect()
        })
        .collect())
}

/// Regression deltas over ±`halfwidth` frames with edge replication.
pub fn delta(frames: &[Vec<f64>], halfwidth: usize) -> Vec<Vec<f64>> {
    let t_len = frames.len() as isize;
    let denom = 2.0 * (1..=halfwidth).map(|n| (n * n) as f64).sum::<f64>();
    let at = |t: isize| &frames[t.clamp(0, t_len - 1) as usize];
    (0..t_len)
        .map(|t| {
            let width = frames[t as usize].len();
            (0..width)
                .map(|c| {
                    (1..=halfwidth as isize)
                        .map(|n| n as f64 * (at(t + n)[c] - at(t - n)[c]))
                        .sum::<f64>()
                        / denom
                })
                .collect()
        })
        .collect()
}

pub const AUDIO_GROUPS: [&str; 3] = ["mfcc", "delta", "delta2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AudioFeatureVector {
    pub values: Vec<f64>,
}

impl AudioFeatureVector {
    /// `mfcc_mean_1 .. delta2_mean_20, mfcc_std_1 .. delta2_std_20`.
    pub fn names() -> Vec<String> {
        ["mean", "std"]
            .iter()
            .flat_map(|stat| {
                AUDIO_GROUPS
                    .iter()
                    .flat_map(move |g| (1..=20).map(move |i| format!("{g}_{stat}_{i}")))
            })
            .collect()
    }
}

fn column_stats(frames: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let width = frames[0].len();
    (0..width)
        .map(|c| {
            let col: Vec<f64> = frames.iter().map(|r| r[c]).collect();
            let std = if dsp::is_constant(&col) {
                0.0
            } else {
                dsp::pop_std(&col)
            };
            (dsp::mean(&col), std)
        })
        .unzip()
}

pub fn extract_audio_features(clip: &AudioClip, cfg: &MfccConfig) -> Result<AudioFeatureVector, AudioFeatureError> {
    let c = mfcc_frames(clip, cfg)?;
    let d = delta(&c, cfg.delta_halfwidth);
    let dd = delta(&d, cfg.delta_halfwidth);
    let (stats_c, stats_d, stats_dd) = (column_stats(&c), column_stats(&d), column_stats(&dd));
    let mut values = Vec::with_capacity(6 * cfg.n_mfcc);
    values.extend(&stats_c.0);
    values.extend(&stats_d.0);
    values.extend(&stats_dd.0);
    values.extend(&stats_c.1);
    values.extend(&stats_d.1);
    values.extend(&stats_dd.1);
    Ok(AudioFeatureVector { values })
}

/// Reads a mono PCM16/PCM24/PCM32 or float32 WAV file into a normalised clip.
pub fn read_wav(path: &Path) -> Result<AudioClip, AudioFeatureError> {
    let wav_err = |e: hound::Error| AudioFeatureError::Wav(format!("{}: {e}", path.display()));
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioFeatureError::Wav(format!(
            "expected mono, found {} channels",
            spec.channels
        )));
    }
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = f64::from(1u32 << (spec.bits_per_sample - 1));
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<Result<_, _>>()
                .map_err(wav_err)?
        }
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(|v| f64::from(v).clamp(-1.0, 1.0)))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
    };
    AudioClip::new(f64::from(spec.sample_rate), samples).map_err(AudioFeatureError::Wav)
}

/// Linear-interpolation resampling to `target_hz`.
pub fn resample_linear(clip: &AudioClip, target_hz: f64) -> AudioClip {
    let ratio = clip.sample_rate_hz / target_hz;
    let n_out = ((clip.samples.len() as f64) / ratio).floor().max(1.0) as usize;
    let last = clip.samples.len() - 1;
    let samples = (0..n_out)
        .map(|i| {
            let pos = i as f64 * ratio;
            let lo = (pos.floor() as usize).min(last);
            let hi = (lo + 1).min(last);
            let frac = pos - lo as f64;
            clip.samples[lo] * (1.0 - frac) + clip.samples[hi] * frac
        })
        .collect();
    AudioClip {
        sample_rate_hz: target_hz,
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, fs: f64, secs: f64, amp: f64) -> AudioClip {
        let n = (fs * secs) as usize;
        AudioClip {
            sample_rate_hz: fs,
            samples: (0..n)
                .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin())
                .collect(),
        }
    }

    #[test]
    fn one_second_at_16k_has_98_frames() {
        let clip = tone(440.0, 16000.0, 1.0, 0.5);
        let frames = mfcc_frames(&clip, &MfccConfig::default()).unwrap();
        assert_eq!(frames.len(), 98);
        assert!(frames.iter().all(|f| f.len() == 20));
    }

    #[test]
    fn too_short_clip() {
        let clip = AudioClip {
            sample_rate_hz: 16000.0,
            samples: vec![0.0; 399],
        };
        assert!(matches!(
            mfcc_frames(&clip, &MfccConfig::default()),
            Err(AudioFeatureError::ClipTooShort { needed: 400, got: 399 })
        ));
    }

    #[test]
    fn delta_conventions() {
        let constant = vec![vec![1.0, 2.0]; 6];
        assert!(delta(&constant, 2).iter().flatten().all(|v| *v == 0.0));
        let ramp: Vec<Vec<f64>> = (0..10).map(|t| vec![0.5 * t as f64]).collect();
        let d = delta(&ramp, 2);
        for row in &d[2..8] {
            assert!((row[0] - 0.5).abs() < 1e-12);
        }
        assert_eq!(delta(&[vec![3.0, 4.0]], 2), vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn silence_gives_floor_cepstrum() {
        let clip = AudioClip {
            sample_rate_hz: 8000.0,
            samples: vec![0.0; 4000],
        };
        let v = extract_audio_features(&clip, &MfccConfig::default()).unwrap();
        assert_eq!(v.values.len(), 120);
        let c0 = LOG_FLOOR.ln() * 40f64.sqrt();
        assert!((v.values[0] - c0).abs() < 1e-9);
        assert!(v.values[60..].iter().all(|s| *s == 0.0));
    }

    #[test]
    fn stationary_tone_has_flat_dynamics() {
        let v = extract_audio_features(&tone(1000.0, 16000.0, 1.0, 0.5), &MfccConfig::default()).unwrap();
        for d in &v.values[20..60] {
            assert!(d.abs() < 1e-6, "{d}");
        }
    }

    #[test]
    fn config_validation() {
        let cfg = MfccConfig {
            n_mfcc: 41,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = MfccConfig {
            hop_ms: 30.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn names_layout() {
        let names = AudioFeatureVector::names();
        assert_eq!(names.len(), 120);
        assert_eq!(names[0], "mfcc_mean_1");
        assert_eq!(names[40], "delta2_mean_1");
        assert_eq!(names[119], "delta2_std_20");
    }

    #[test]
    fn resample_halves_length() {
        let clip = tone(100.0, 16000.0, 0.5, 0.5);
        let r = resample_linear(&clip, 8000.0);
        assert_eq!(r.samples.len(), 4000);
        assert_eq!(r.samples[10], clip.samples[20]);
    }
}
