use dailylog::ingest::{parse_stream, serialize_stream, window_align, StreamFormat};
use dailylog::synth::{
    physio_series, synthesize_labels, synthesize_span, synthesize_stream, transition_violations, ScriptSpan,
    SynthClass, SynthConfig, PLACES,
};
use proptest::prelude::*;

#[test]
fn heart_rate_follows_activity_intensity() {
    let mut means = [0.0f64; 5];
    let mut counts = [0usize; 5];
    for seed in 0..100 {
        let cfg = SynthConfig {
            seed,
            ..SynthConfig::default()
        };
        let labels: Vec<SynthClass> = synthesize_labels(&cfg, 86_400.0)
            .unwrap()
            .iter()
            .map(|s| s.label)
            .collect();
        for (c, p) in labels.iter().zip(physio_series(&cfg, &labels).unwrap()) {
            let i = SynthClass::ALL.iter().position(|x| x == c).unwrap();
            means[i] += p.hr_bpm.unwrap();
            counts[i] += 1;
        }
    }
    let means: Vec<f64> = means.iter().zip(counts).map(|(s, n)| s / n as f64).collect();
    for w in means.windows(2) {
        assert!(w[0] < w[1], "{means:?}");
    }
}

#[test]
fn heart_rate_noise_is_bounded_with_target_spread() {
    let cfg = SynthConfig::default();
    let labels = vec![SynthClass::Sitting; 20_000];
    let hr: Vec<f64> = physio_series(&cfg, &labels)
        .unwrap()
        .iter()
        .map(|p| p.hr_bpm.unwrap())
        .collect();
    let base = cfg.physio_baselines[&SynthClass::Sitting].hr_bpm;
    let sigma = cfg.hr_noise_sigma;
    assert!(hr.iter().all(|h| (h - base).abs() <= 3.0 * sigma + 1e-12));
    let mean = hr.iter().sum::<f64>() / hr.len() as f64;
    let sd = (hr.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / hr.len() as f64).sqrt();
    assert!((sd - sigma).abs() < 0.05 * sigma, "sd {sd}");
    assert!((mean - base).abs() < 0.1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn days_respect_transitions(seed in any::<u64>()) {
        let cfg = SynthConfig { seed, ..SynthConfig::default() };
        let steps = synthesize_labels(&cfg, 86_400.0).unwrap();
        let labels: Vec<SynthClass> = steps.iter().map(|s| s.label).collect();
        prop_assert_eq!(steps.len(), 720);
        prop_assert_eq!(transition_violations(&cfg, &labels), 0);
        for w in steps.windows(2) {
            if w[0].location_id != w[1].location_id {
                prop_assert_eq!(w[1].label, SynthClass::Walking);
                prop_assert_ne!(PLACES[w[0].location_id].audio.scene, PLACES[w[1].location_id].audio.scene);
            }
        }
    }
}

#[test]
fn stream_survives_serialization_and_alignment() {
    let cfg = SynthConfig {
        seed: 5,
        ..SynthConfig::default()
    };
    let records = synthesize_stream(&cfg, 600.0).unwrap();
    let bytes = serialize_stream(&records, StreamFormat::Jsonl);
    let back = parse_stream(&bytes, StreamFormat::Jsonl).unwrap();
    assert_eq!(back, records);
    let windows = window_align(&back, cfg.window_s).unwrap();
    let samples = synthesize_span(&cfg, 600.0).unwrap();
    assert_eq!(windows.len(), samples.len());
    for (w, s) in windows.iter().zip(&samples) {
        assert_eq!(w.light_lux, s.window.light_lux);
        assert_eq!(w.gps, s.window.gps);
        assert_eq!(w.physio, s.window.physio);
    }
}

#[test]
fn invalid_configs_name_the_field() {
    let cfg = SynthConfig {
        window_s: 0.0,
        ..SynthConfig::default()
    };
    assert!(synthesize_labels(&cfg, 10.0)
        .unwrap_err()
        .to_string()
        .starts_with("window_s"));
    let cfg = SynthConfig {
        script: vec![ScriptSpan {
            start_s: 10.0,
            end_s: 5.0,
            activity: SynthClass::Lying,
            location_id: None,
        }],
        ..SynthConfig::default()
    };
    assert!(synthesize_labels(&cfg, 10.0)
        .unwrap_err()
        .to_string()
        .starts_with("script[0]"));
}

#[test]
fn config_reads_from_json_with_defaults() {
    let cfg: SynthConfig = serde_json::from_str(r#"{"seed": 9, "window_s": 60}"#).unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.window_s, 60.0);
    assert_eq!(cfg.night_prior, SynthConfig::default().night_prior);
    assert!(serde_json::from_str::<SynthConfig>(r#"{"sed": 9}"#).is_err());
}
