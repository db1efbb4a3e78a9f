//! Activity log entries, the JSONL store, and summaries.
//!
//! Store format: one JSON object per line, oldest first, `\n` terminated.
//!
//! | field | type |
//! |---|---|
//! | `civil_time` | `"YYYY-MM-DD HH:MM:SS ±HH:MM"` |
//! | `address` | `{street, district, city, country, place_type, source}` |
//! | `activity` | one of the activity labels, or `"unknown"` |
//! | `scene` | free text |
//! | `light` | `{"level": 1..5, "label": ...}` or `null` |
//! | `sound` | sound level label or `null` |
//! | `temperature` | temperature level label or `null` |
//! | `altitude_m` | number or `null` |
//! | `physio` | `{eda_microsiemens?, hr_bpm?, ibi_ms?, temp_celsius?, spo2_percent?}` or `null` |
//! | `template_version` | prompt template id |
//! | `backend_model` | model name reported by the backend |

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{IlluminationLevel, SoundLevel, TemperatureLevel};
use crate::geoloc::StructuredAddress;
use crate::inference::{Activity, Backend};
use crate::ingest::{CivilTimestamp, PhysioSnapshot};
use crate::promptgen::build_summary_prompt;

pub const DEFAULT_MAX_ENTRIES: usize = 120;
pub const DEFAULT_WINDOW_H: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogError {
    #[error("entry at {got} is not later than the last stored entry at {last}")]
    OutOfOrder { last: CivilTimestamp, got: CivilTimestamp },
    #[error("io: {0}")]
    Io(String),
    #[error("log line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("no entries in the summary window")]
    EmptyWindow,
    #[error("{0}")]
    InvalidArgument(String),
}

impl From<std::io::Error> for LogError {
    fn from(e: std::io::Error) -> Self {
        LogError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityLogEntry {
    pub civil_time: CivilTimestamp,
    pub address: StructuredAddress,
    pub activity: Activity,
    pub scene: String,
    pub light: Option<IlluminationLevel>,
    pub sound: Option<SoundLevel>,
    pub temperature: Option<TemperatureLevel>,
    pub altitude_m: Option<f64>,
    pub physio: Option<PhysioSnapshot>,
    pub template_version: String,
    pub backend_model: String,
}

impl ActivityLogEntry {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log entries serialize")
    }

    pub fn unix_seconds(&self) -> i64 {
        self.civil_time.to_unix_seconds()
    }
}

/// Append-only JSONL log. One writer per file.
#[derive(Debug)]
pub struct LogStore {
    path: PathBuf,
    file: File,
    last: Option<CivilTimestamp>,
    len: usize,
}

impl LogStore {
    /// Opens or creates the store, validating whatever is already there.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LogError> {
        let path = path.as_ref().to_path_buf();
        let existing = if path.exists() {
            read_entries(&path)?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(LogStore {
            path,
            file,
            last: existing.last().map(|e| e.civil_time),
            len: existing.len(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn append_entry(&mut self, entry: &ActivityLogEntry) -> Result<(), LogError> {
        if let Some(last) = self.last {
            if entry.unix_seconds() <= last.to_unix_seconds() {
                return Err(LogError::OutOfOrder {
                    last,
                    got: entry.civil_time,
                });
            }
        }
        let mut line = entry.to_json_line();
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.file.sync_data()?;
        self.last = Some(entry.civil_time);
        self.len += 1;
        Ok(())
    }

    /// A snapshot of the file as it is now.
    pub fn read_all(&self) -> Result<Vec<ActivityLogEntry>, LogError> {
        read_entries(&self.path)
    }
}

pub fn append_entry(store: &mut LogStore, entry: &ActivityLogEntry) -> Result<(), LogError> {
    store.append_entry(entry)
}

pub fn read_entries(path: &Path) -> Result<Vec<ActivityLogEntry>, LogError> {
    let reader = BufReader::new(File::open(path).map_err(|e| LogError::Io(format!("{}: {e}", path.display())))?);
    let mut out: Vec<ActivityLogEntry> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ActivityLogEntry = serde_json::from_str(&line).map_err(|e| LogError::Corrupt {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(prev) = out.last() {
            if entry.unix_seconds() <= prev.unix_seconds() {
                return Err(LogError::Corrupt {
                    line: i + 1,
                    message: "entries are not strictly time ordered".into(),
                });
            }
        }
        out.push(entry);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnomalyThresholds {
    pub sedentary_h: f64,
    pub environmental_h: f64,
    pub hr_bpm: f64,
    pub spo2_percent: f64,
    pub fever_celsius: f64,
}

impl Default for AnomalyThresholds {
    fn default() -> Self {
        AnomalyThresholds {
            sedentary_h: 2.5,
            environmental_h: 1.0,
            hr_bpm: 100.0,
            spo2_percent: 92.0,
            fever_celsius: 37.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyFamily {
    Environmental,
    Behavioral,
    Health,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub family: AnomalyFamily,
    pub code: String,
    pub span: (CivilTimestamp, CivilTimestamp),
    pub detail: String,
}

impl Anomaly {
    pub fn duration_s(&self) -> i64 {
        self.span.1.to_unix_seconds() - self.span.0.to_unix_seconds()
    }
}

type EntryPredicate = fn(&ActivityLogEntry, &AnomalyThresholds) -> bool;

fn health_checks() -> [(&'static str, EntryPredicate); 3] {
    [
        ("hr_high", |e, t| {
            e.activity.is_sedentary() && e.physio.as_ref().and_then(|p| p.hr_bpm).is_some_and(|hr| hr > t.hr_bpm)
        }),
        ("spo2_low", |e, t| {
            e.physio
                .as_ref()
                .and_then(|p| p.spo2_percent)
                .is_some_and(|s| s < t.spo2_percent)
        }),
        ("fever", |e, t| {
            e.physio
                .as_ref()
                .and_then(|p| p.temp_celsius)
                .is_some_and(|c| c > t.fever_celsius)
        }),
    ]
}

/// True when the entry on its own trips a health rule.
pub fn is_health_flagged(entry: &ActivityLogEntry, t: &AnomalyThresholds) -> bool {
    health_checks().iter().any(|(_, check)| check(entry, t))
}

/// Maximal runs of consecutive entries satisfying `pred`, as index ranges.
fn runs(entries: &[ActivityLogEntry], pred: impl Fn(&ActivityLogEntry) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, e) in entries.iter().enumerate() {
        match (pred(e), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, entries.len() - 1));
    }
    out
}

fn span_of(entries: &[ActivityLogEntry], (a, b): (usize, usize)) -> (CivilTimestamp, CivilTimestamp) {
    (entries[a].civil_time, entries[b].civil_time)
}

fn hours(entries: &[ActivityLogEntry], (a, b): (usize, usize)) -> f64 {
    (entries[b].unix_seconds() - entries[a].unix_seconds()) as f64 / 3600.0
}

/// Run lengths are measured from the first to the last entry of the run.
pub fn detect_anomalies(entries: &[ActivityLogEntry], t: &AnomalyThresholds) -> Vec<Anomaly> {
    let mut out = Vec::new();
    for run in runs(entries, |e| e.activity.is_sedentary()) {
        let h = hours(entries, run);
        if h > t.sedentary_h {
            out.push(Anomaly {
                family: AnomalyFamily::Behavioral,
                code: "sedentary".into(),
                span: span_of(entries, run),
                detail: format!("sitting or lying for {h:.2} h without a break"),
            });
        }
    }
    let environmental: [(&str, &str, EntryPredicate); 3] = [
        ("dark", "extremely dark surroundings", |e, _| {
            e.light == Some(IlluminationLevel::ExtremelyDark)
        }),
        ("heat", "hot surroundings", |e, _| {
            e.temperature == Some(TemperatureLevel::Hot)
        }),
        ("noise", "very noisy surroundings", |e, _| {
            e.sound == Some(SoundLevel::VeryNoisy)
        }),
    ];
    for (code, what, check) in environmental {
        for run in runs(entries, |e| check(e, t)) {
            let h = hours(entries, run);
            if h > t.environmental_h {
                out.push(Anomaly {
                    family: AnomalyFamily::Environmental,
                    code: code.into(),
                    span: span_of(entries, run),
                    detail: format!("{what} for {h:.2} h"),
                });
            }
        }
    }
    for (code, check) in health_checks() {
        for run in runs(entries, |e| check(e, t)) {
            let n = run.1 - run.0 + 1;
            let detail = match code {
                "hr_high" => format!("heart rate above {} bpm while at rest ({n} entries)", t.hr_bpm),
                "spo2_low" => format!("blood oxygen below {}% ({n} entries)", t.spo2_percent),
                _ => format!("body temperature above {} C ({n} entries)", t.fever_celsius),
            };
            out.push(Anomaly {
                family: AnomalyFamily::Health,
                code: code.into(),
                span: span_of(entries, run),
                detail,
            });
        }
    }
    out.sort_by_key(|a| (a.span.0.to_unix_seconds(), a.family, a.code.clone()));
    out
}

/// Entries inside the trailing `window_h` hours ending at the newest entry.
pub fn trailing_window(entries: &[ActivityLogEntry], window_h: f64) -> Result<&[ActivityLogEntry], LogError> {
    if !(window_h > 0.0 && window_h.is_finite()) {
        return Err(LogError::InvalidArgument(format!(
            "window_h must be positive, got {window_h}"
        )));
    }
    let last = entries.last().ok_or(LogError::EmptyWindow)?.unix_seconds() as f64;
    let cutoff = last - window_h * 3600.0;
    let start = entries.partition_point(|e| (e.unix_seconds() as f64) < cutoff);
    Ok(&entries[start..])
}

/// Thins the trailing window to roughly `max_entries`, keeping endpoints and health-flagged entries.
pub fn select_for_summary(
    entries: &[ActivityLogEntry],
    window_h: f64,
    max_entries: usize,
    t: &AnomalyThresholds,
) -> Result<Vec<ActivityLogEntry>, LogError> {
    if max_entries < 2 {
        return Err(LogError::InvalidArgument(format!(
            "max_entries must be at least 2, got {max_entries}"
        )));
    }
    let window = trailing_window(entries, window_h)?;
    let n = window.len();
    if n <= max_entries {
        return Ok(window.to_vec());
    }
    let stride = n.div_ceil(max_entries);
    Ok(window
        .iter()
        .enumerate()
        .filter(|(i, e)| i % stride == 0 || *i == n - 1 || is_health_flagged(e, t))
        .map(|(_, e)| e.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub window: (CivilTimestamp, CivilTimestamp),
    pub narrative: String,
    pub activity_distribution: BTreeMap<Activity, f64>,
    pub trajectory: Vec<String>,
    pub anomalies: Vec<Anomaly>,
    pub entry_count: usize,
    pub selected_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_error: Option<String>,
}

impl SummaryReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Summary {} to {}", self.window.0, self.window.1);
        let _ = writeln!(
            s,
            "Entries: {} ({} sent for summarization)",
            self.entry_count, self.selected_count
        );
        let _ = writeln!(s, "\nActivity distribution:");
        for (a, f) in &self.activity_distribution {
            let _ = writeln!(s, "  {a}: {:.1}%", f * 100.0);
        }
        let _ = writeln!(s, "\nPlaces visited:");
        for (i, p) in self.trajectory.iter().enumerate() {
            let _ = writeln!(s, "  {}. {p}", i + 1);
        }
        let _ = writeln!(s, "\nAnomalies:");
        if self.anomalies.is_empty() {
            let _ = writeln!(s, "  none");
        }
        for a in &self.anomalies {
            let family = serde_json::to_value(a.family).expect("family serializes");
            let _ = writeln!(
                s,
                "  [{}] {} {} to {}: {}",
                family.as_str().unwrap_or_default(),
                a.code,
                a.span.0,
                a.span.1,
                a.detail
            );
        }
        let _ = writeln!(s, "\nNarrative:");
        match (&self.backend_error, self.narrative.is_empty()) {
            (Some(e), _) => {
                let _ = writeln!(s, "  (unavailable: {e})");
            }
            (None, true) => {
                let _ = writeln!(s, "  (empty)");
            }
            (None, false) => {
                let _ = writeln!(s, "{}", self.narrative.trim_end());
            }
        }
        s
    }
}

/// Fractions over entries whose activity is known.
pub fn activity_distribution(entries: &[ActivityLogEntry]) -> BTreeMap<Activity, f64> {
    let mut counts: BTreeMap<Activity, usize> = BTreeMap::new();
    for e in entries.iter().filter(|e| e.activity != Activity::Unknown) {
        *counts.entry(e.activity).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    counts.into_iter().map(|(a, c)| (a, c as f64 / total as f64)).collect()
}

/// Distinct known places in order of first visit.
pub fn trajectory(entries: &[ActivityLogEntry]) -> Vec<String> {
    let mut seen = HashSet::new();
    entries
        .iter()
        .filter(|e| e.address.has_location())
        .map(|e| e.address.to_string())
        .filter(|p| seen.insert(p.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryOptions {
    pub window_h: f64,
    pub max_entries: usize,
    pub thresholds: AnomalyThresholds,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        SummaryOptions {
            window_h: DEFAULT_WINDOW_H,
            max_entries: DEFAULT_MAX_ENTRIES,
            thresholds: AnomalyThresholds::default(),
        }
    }
}

/// Deterministic fields come from the entries; a failing backend only empties the narrative.
pub fn summarize(
    entries: &[ActivityLogEntry],
    opts: &SummaryOptions,
    backend: &Backend,
) -> Result<SummaryReport, LogError> {
    let window = trailing_window(entries, opts.window_h)?;
    let selected = select_for_summary(entries, opts.window_h, opts.max_entries, &opts.thresholds)?;
    let narrative = build_summary_prompt(&selected, opts.window_h)
        .map_err(|e| e.to_string())
        .and_then(|p| backend.complete(&p).map_err(|e| e.to_string()));
    let (narrative, backend_error) = match narrative {
        Ok(n) => (n, None),
        Err(e) => (String::new(), Some(e)),
    };
    Ok(SummaryReport {
        window: (window[0].civil_time, window[window.len() - 1].civil_time),
        narrative,
        activity_distribution: activity_distribution(window),
        trajectory: trajectory(window),
        anomalies: detect_anomalies(window, &opts.thresholds),
        entry_count: window.len(),
        selected_count: selected.len(),
        backend_error,
    })
}

pub fn summarize_store(store: &LogStore, opts: &SummaryOptions, backend: &Backend) -> Result<SummaryReport, LogError> {
    summarize(&store.read_all()?, opts, backend)
}
