mod common;

use dailylog::audio_features::{extract_audio_features, frame_count, log_mel_frames, mfcc_frames, MfccConfig};
use dailylog::imu_features::{extract_imu_features, imu_block, ImuFeatureConfig, BLOCK_LEN};
use dailylog::ingest::{AudioClip, ImuSensor, SensorWindow, TriAxisSeries};
use proptest::prelude::*;

#[test]
fn imu_block_matches_reference() {
    let cfg = ImuFeatureConfig::default();
    for seed in 500..540 {
        let s = common::random_series(seed);
        let got = imu_block(&s, &cfg).unwrap().to_vec();
        let want = common::imu_block_oracle(&s);
        assert_eq!(got.len(), BLOCK_LEN);
        for (i, (g, w)) in got.iter().zip(&want).enumerate() {
            assert!(
                common::close(*g, *w, 1e-9, 1e-12),
                "seed {seed} feature {i}: {g} vs {w}"
            );
        }
    }
}

#[test]
fn constant_series_gets_floor_values() {
    let s = TriAxisSeries::new(20.0, vec![0.0; 64], vec![9.81; 64], vec![0.0; 64]).unwrap();
    let got = imu_block(&s, &ImuFeatureConfig::default()).unwrap().to_vec();
    let want = common::imu_block_oracle(&s);
    assert_eq!(got, want);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn imu_scaling_is_equivariant(seed in 0u64..10_000, c in 0.2f64..5.0) {
        let s = common::random_series(seed);
        let scaled = TriAxisSeries::new(
            s.sample_rate_hz,
            s.x.iter().map(|v| v * c).collect(),
            s.y.iter().map(|v| v * c).collect(),
            s.z.iter().map(|v| v * c).collect(),
        ).unwrap();
        let cfg = ImuFeatureConfig::default();
        let a = imu_block(&s, &cfg).unwrap().to_vec();
        let b = imu_block(&scaled, &cfg).unwrap().to_vec();
        // linear in c: mean, std, max, min, IQR, axis means and stds
        for i in [0, 1, 4, 5, 6, 17, 18, 19, 20, 21, 22] {
            prop_assert!(common::close(b[i], a[i] * c, 1e-9, 1e-12), "feature {}", i);
        }
        // invariant: shape, spectral entropy, periodicity and correlations
        for i in [2, 3, 14, 15, 16, 23, 24, 25] {
            prop_assert!(common::close(b[i], a[i], 1e-7, 1e-9), "feature {}", i);
        }
        // band log energies shift by 2 ln c
        for i in 9..14 {
            prop_assert!((b[i] - a[i] - 2.0 * c.ln()).abs() < 1e-6, "feature {}", i);
        }
    }
}

#[test]
fn window_features_cover_present_sensors_only() {
    let s = common::random_series(3);
    let w = SensorWindow {
        accel: Some(s.clone()),
        mag: Some(s),
        ..SensorWindow::default()
    };
    let f = extract_imu_features(&w).unwrap();
    assert!(f.block(ImuSensor::Accel).is_some());
    assert!(f.block(ImuSensor::Gyro).is_none());
    assert_eq!(f.values().len(), 2 * BLOCK_LEN);
    assert!(extract_imu_features(&SensorWindow::default()).is_err());
}

fn noise_clip(seed: u64, gain: f64) -> AudioClip {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..8000).map(|_| gain * rng.random_range(-0.5..0.5)).collect();
    AudioClip::new(16000.0, samples).unwrap()
}

#[test]
fn log_mel_and_mfcc_match_reference() {
    let cfg = MfccConfig::default();
    let clip = noise_clip(1, 1.0);
    let lm = log_mel_frames(&clip, &cfg).unwrap();
    let lm_ref = common::log_mel_oracle(&clip.samples, 16000.0, 40);
    assert_eq!(lm.len(), lm_ref.len());
    assert_eq!(lm.len(), frame_count(8000, 400, 160));
    for (a, b) in lm.iter().flatten().zip(lm_ref.iter().flatten()) {
        assert!(common::close(*a, *b, 1e-9, 1e-9), "{a} vs {b}");
    }
    let mf = mfcc_frames(&clip, &cfg).unwrap();
    for (a, b) in mf
        .iter()
        .flatten()
        .zip(common::dct_oracle(&lm_ref, 20).iter().flatten())
    {
        assert!(common::close(*a, *b, 1e-9, 1e-9), "{a} vs {b}");
    }
}

#[test]
fn gain_moves_only_the_energy_coefficient() {
    let cfg = MfccConfig::default();
    let a = extract_audio_features(&noise_clip(2, 1.0), &cfg).unwrap().values;
    let b = extract_audio_features(&noise_clip(2, 0.25), &cfg).unwrap().values;
    // every log-mel value drops by 2 ln 4, which lands entirely in c0
    let shift = 2.0 * 0.25f64.ln() * 40f64.sqrt();
    assert!((b[0] - a[0] - shift).abs() < 1e-6);
    for i in 1..120 {
        assert!((a[i] - b[i]).abs() < 1e-6, "feature {i}: {} vs {}", a[i], b[i]);
    }
}

#[test]
fn too_short_clip_is_rejected() {
    let clip = AudioClip::new(16000.0, vec![0.0; 399]).unwrap();
    assert!(extract_audio_features(&clip, &MfccConfig::default()).is_err());
}
