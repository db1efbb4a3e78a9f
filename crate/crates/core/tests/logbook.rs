use dailylog::geoloc::StructuredAddress;
use dailylog::inference::{Activity, Backend};
use dailylog::ingest::{to_civil_time, PhysioSnapshot};
use dailylog::logbook::{
    activity_distribution, detect_anomalies, read_entries, select_for_summary, summarize, ActivityLogEntry,
    AnomalyThresholds, LogError, LogStore, SummaryOptions,
};
use dailylog::synth::reference_model;
use proptest::prelude::*;

const T0: f64 = 1_700_006_400.0;

fn entry(i: usize, activity: Activity) -> ActivityLogEntry {
    ActivityLogEntry {
        civil_time: to_civil_time(T0 + 120.0 * i as f64, 60).unwrap(),
        address: StructuredAddress::unresolved(),
        activity,
        scene: "home".into(),
        light: None,
        sound: None,
        temperature: None,
        altitude_m: Some(55.0),
        physio: Some(PhysioSnapshot {
            hr_bpm: Some(70.0),
            ..PhysioSnapshot::default()
        }),
        template_version: "context-v1".into(),
        backend_model: "mock-centroid".into(),
    }
}

#[test]
fn store_round_trips_and_keeps_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.jsonl");
    let mut store = LogStore::open(&path).unwrap();
    let entries: Vec<_> = (0..5).map(|i| entry(i, Activity::ALL[i % 8])).collect();
    for e in &entries {
        store.append_entry(e).unwrap();
    }
    assert_eq!(store.len(), 5);
    assert!(matches!(
        store.append_entry(&entries[2]),
        Err(LogError::OutOfOrder { .. })
    ));
    assert_eq!(read_entries(&path).unwrap(), entries);
    let reopened = LogStore::open(&path).unwrap();
    assert_eq!(reopened.read_all().unwrap(), entries);
}

#[test]
fn corrupt_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.jsonl");
    std::fs::write(
        &path,
        format!("{}\nnot json\n", entry(0, Activity::Sitting).to_json_line()),
    )
    .unwrap();
    assert!(matches!(LogStore::open(&path), Err(LogError::Corrupt { line: 2, .. })));
}

proptest! {
    #[test]
    fn sedentary_flag_tracks_run_length(n in 2usize..140, lead in 0usize..5) {
        let mut entries: Vec<_> = (0..lead).map(|i| entry(i, Activity::Walking)).collect();
        entries.extend((lead..lead + n).map(|i| entry(i, if i % 3 == 0 { Activity::Lying } else { Activity::Sitting })));
        entries.push(entry(lead + n, Activity::Walking));
        let t = AnomalyThresholds::default();
        let flagged = detect_anomalies(&entries, &t).iter().any(|a| a.code == "sedentary");
        prop_assert_eq!(flagged, ((n - 1) * 120) as f64 > t.sedentary_h * 3600.0);
    }

    #[test]
    fn selection_keeps_endpoints_and_order(n in 2usize..400, max in 2usize..150) {
        let entries: Vec<_> = (0..n).map(|i| entry(i, Activity::Standing)).collect();
        let picked = select_for_summary(&entries, 24.0, max, &AnomalyThresholds::default()).unwrap();
        prop_assert_eq!(&picked[0], &entries[0]);
        prop_assert_eq!(picked.last().unwrap(), entries.last().unwrap());
        prop_assert!(picked.len() <= max + 1);
        for w in picked.windows(2) {
            prop_assert!(w[0].unix_seconds() < w[1].unix_seconds());
        }
    }
}

#[test]
fn health_flags_survive_downsampling() {
    let mut entries: Vec<_> = (0..300).map(|i| entry(i, Activity::Sitting)).collect();
    entries[137].physio.as_mut().unwrap().spo2_percent = Some(88.0);
    let picked = select_for_summary(&entries, 24.0, 20, &AnomalyThresholds::default()).unwrap();
    assert!(picked.contains(&entries[137]));
    let anomalies = detect_anomalies(&entries, &AnomalyThresholds::default());
    assert!(anomalies.iter().any(|a| a.code == "spo2_low"));
}

#[test]
fn summary_distribution_sums_to_one() {
    let entries: Vec<_> = (0..60).map(|i| entry(i, Activity::ALL[i % 4])).collect();
    let d = activity_distribution(&entries);
    assert!((d.values().sum::<f64>() - 1.0).abs() < 1e-12);
    let report = summarize(&entries, &SummaryOptions::default(), &Backend::mock(reference_model())).unwrap();
    assert_eq!(report.entry_count, 60);
    assert!(report.backend_error.is_none());
    assert!(!report.narrative.is_empty());
    let v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert!(v["activity_distribution"].is_object());
}
