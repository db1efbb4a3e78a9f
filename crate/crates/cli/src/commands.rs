use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dailylog::audio_features::extract_audio_features;
use dailylog::eval::{confusion_with_classes, metric_report};
use dailylog::imu_features::extract_imu_features_with;
use dailylog::inference::Activity;
use dailylog::ingest::{parse_stream, serialize_stream, window_align, SensorRecord, StreamFormat};
use dailylog::logbook::{read_entries, summarize as summarize_entries, LogError, LogStore, SummaryReport};
use dailylog::pipeline::{run_records, PipelineContext, PipelineError};
use dailylog::synth::{sample_to_json_line, synthesize_span, window_records};
use serde_json::json;

use crate::config::RunConfig;
use crate::CliError;

/// Warnings beyond this many are counted but not printed.
const MAX_PRINTED_WARNINGS: usize = 50;

fn open_out(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::io("output", p, e))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn write_all(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    let mut w = open_out(out)?;
    // a closed downstream pipe (e.g. `| head`) is not an error
    let done = |r: std::io::Result<()>| match r {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::runtime(format!("writing output: {e}"))),
        _ => Ok(()),
    };
    done(w.write_all(bytes))?;
    done(w.flush())
}

fn warn_all(warnings: &[String]) {
    for w in warnings.iter().take(MAX_PRINTED_WARNINGS) {
        eprintln!("{}", json!({ "warning": w }));
    }
    if warnings.len() > MAX_PRINTED_WARNINGS {
        eprintln!(
            "{}",
            json!({ "warning": format!("{} more warnings not shown", warnings.len() - MAX_PRINTED_WARNINGS) })
        );
    }
}

fn read_records(path: &Path) -> Result<Vec<SensorRecord>, CliError> {
    let raw = std::fs::read(path).map_err(|e| CliError::io("input", path, e))?;
    parse_stream(&raw, StreamFormat::from_path(path)).map_err(|e| CliError::input_at(path, e.to_string()))
}

fn required(
    cfg: &RunConfig,
    flag: Option<&Path>,
    field: &str,
    configured: &Option<PathBuf>,
) -> Result<PathBuf, CliError> {
    match (flag, configured.as_ref()) {
        (Some(p), _) => Ok(p.to_path_buf()),
        (None, Some(p)) => Ok(cfg.resolve(p)),
        (None, None) => Err(CliError::config(format!("{field} is not set"))),
    }
}

fn log_error(path: &Path, e: LogError) -> CliError {
    match e {
        LogError::Io(e) => CliError::runtime(format!("log store {}: {e}", path.display())),
        other => CliError::input_at(path, other.to_string()),
    }
}

/// `<log>.summary.json` next to the log unless configured.
fn summary_path(cfg: &RunConfig, log: &Path) -> PathBuf {
    match &cfg.paths.summary {
        Some(p) => cfg.resolve(p),
        None => log.with_extension("summary.json"),
    }
}

pub fn run(cfg: &RunConfig, input: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    let input = required(&cfg, input, "paths.input (or --input)", &cfg.paths.input)?;
    let log = required(&cfg, out, "paths.log (or --out)", &cfg.paths.log)?;
    if !input.is_file() {
        return Err(CliError::missing("input", &input));
    }
    cfg.paths.input = None;
    cfg.validate()?;

    let records = read_records(&input)?;
    let template = cfg.template()?;
    let backend = cfg.backend()?;
    let (geocoder, beacons) = cfg.places()?;
    let ctx = PipelineContext {
        geocoder: &geocoder,
        beacons: &beacons,
        backend: &backend,
        template: &template,
    };
    let mut store = LogStore::open(&log).map_err(|e| log_error(&log, e))?;
    let (_, mut stats) = run_records(&records, &cfg.pipeline(), &ctx, Some(&mut store)).map_err(|e| match e {
        PipelineError::Ingest(e) => CliError::input_at(&input, e.to_string()),
        PipelineError::Log(e) => log_error(&log, e),
        other => CliError::runtime(other.to_string()),
    })?;

    let entries = store.read_all().map_err(|e| log_error(&log, e))?;
    let summary = if entries.is_empty() {
        None
    } else {
        let report = summarize_entries(&entries, &cfg.summary_options(), &backend).map_err(|e| log_error(&log, e))?;
        if let Some(e) = &report.backend_error {
            stats.warnings.push(format!("summary narrative unavailable: {e}"));
        }
        let path = summary_path(&cfg, &log);
        write_all(Some(&path), report.to_json().as_bytes())?;
        Some(path)
    };
    warn_all(&stats.warnings);
    let status = json!({
        "windows": stats.windows,
        "empty_windows": stats.empty_windows,
        "entries": stats.entries,
        "warnings": stats.warning_count(),
        "log": log.display().to_string(),
        "summary": summary.map(|p| p.display().to_string()),
    });
    println!("{status}");
    Ok(())
}

pub fn synth(cfg: &RunConfig, hours: f64, records: bool, out: Option<&Path>) -> Result<(), CliError> {
    if !(hours > 0.0 && hours.is_finite()) {
        return Err(CliError::config(format!("--hours must be positive, got {hours}")));
    }
    cfg.synth
        .validate()
        .map_err(|e| CliError::config(format!("synth.{e}")))?;
    let samples = synthesize_span(&cfg.synth, hours * 3600.0).map_err(|e| CliError::config(format!("synth.{e}")))?;
    let bytes = if records {
        let recs: Vec<SensorRecord> = samples.iter().flat_map(|s| window_records(&s.window)).collect();
        let format = out.map_or(StreamFormat::Jsonl, StreamFormat::from_path);
        serialize_stream(&recs, format)
    } else {
        let mut text = String::new();
        for s in &samples {
            text.push_str(&sample_to_json_line(s));
            text.push('\n');
        }
        text.into_bytes()
    };
    write_all(out, &bytes)
}

/// One label per non-blank line; JSON objects contribute their "activity" field.
fn read_labels(path: &Path) -> Result<Vec<Activity>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io("labels", path, e))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |m: String| CliError::input_at(path, format!("line {}: {m}", i + 1));
        let label = if line.starts_with('{') {
            let v: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            v.get("activity")
                .and_then(|a| a.as_str())
                .ok_or_else(|| bad("no string \"activity\" field".into()))?
                .to_string()
        } else {
            line.to_string()
        };
        labels.push(label.parse::<Activity>().map_err(bad)?);
    }
    Ok(labels)
}

pub fn eval(pred: &Path, truth: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let p = read_labels(pred)?;
    let t = read_labels(truth)?;
    if p.len() != t.len() {
        return Err(CliError::input_at(
            pred,
            format!("{} predictions but {} ground-truth labels", p.len(), t.len()),
        ));
    }
    if t.is_empty() {
        return Err(CliError::input_at(truth, "no labels".into()));
    }
    let classes: Vec<String> = Activity::ALL
        .iter()
        .filter(|a| p.contains(a) || t.contains(a))
        .map(|a| a.to_string())
        .collect();
    let names = |v: &[Activity]| v.iter().map(|a| a.as_str()).collect::<Vec<_>>();
    let m = confusion_with_classes(&classes, &names(&t), &names(&p)).map_err(|e| CliError::runtime(e.to_string()))?;
    let report = metric_report(&m).map_err(|e| CliError::runtime(e.to_string()))?;
    let mut text = serde_json::to_string_pretty(&report).expect("reports serialize");
    text.push('\n');
    write_all(out, text.as_bytes())
}

pub fn summarize(cfg: &RunConfig, log: Option<&Path>, as_text: bool, out: Option<&Path>) -> Result<(), CliError> {
    let log = required(cfg, log, "paths.log (or --log)", &cfg.paths.log)?;
    cfg.validate()?;
    let entries = read_entries(&log).map_err(|e| log_error(&log, e))?;
    if entries.is_empty() {
        return Err(CliError::input_at(&log, "log store has no entries".into()));
    }
    let backend = cfg.backend()?;
    let report: SummaryReport =
        summarize_entries(&entries, &cfg.summary_options(), &backend).map_err(|e| log_error(&log, e))?;
    if let Some(e) = &report.backend_error {
        warn_all(&[format!("summary narrative unavailable: {e}")]);
    }
    let mut text = if as_text { report.to_text() } else { report.to_json() };
    if !text.ends_with('\n') {
        text.push('\n');
    }
    write_all(out, text.as_bytes())
}

pub fn features(cfg: &RunConfig, input: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let input = required(cfg, input, "paths.input (or --input)", &cfg.paths.input)?;
    if !(cfg.window_s > 0.0 && cfg.window_s.is_finite()) {
        return Err(CliError::config(format!(
            "window_s must be positive, got {}",
            cfg.window_s
        )));
    }
    cfg.mfcc
        .validate()
        .map_err(|e| CliError::config(format!("mfcc: {e}")))?;
    let records = read_records(&input)?;
    let windows = window_align(&records, cfg.window_s).map_err(|e| CliError::input_at(&input, e.to_string()))?;
    let mut warnings = Vec::new();
    let mut text = String::new();
    for w in windows.iter().filter(|w| w.record_count > 0) {
        let imu = match extract_imu_features_with(w, &cfg.imu) {
            Ok(v) => {
                let blocks: serde_json::Map<String, serde_json::Value> = v
                    .blocks
                    .iter()
                    .map(|(s, b)| (s.as_str().to_string(), json!(b.to_vec())))
                    .collect();
                json!(blocks)
            }
            Err(e) => {
                warnings.push(format!("window {}: imu features: {e}", w.start_unix_ts));
                json!(null)
            }
        };
        let audio = match w.audio.as_ref().map(|c| extract_audio_features(c, &cfg.mfcc)) {
            Some(Ok(v)) => json!(v.values),
            Some(Err(e)) => {
                warnings.push(format!("window {}: audio features: {e}", w.start_unix_ts));
                json!(null)
            }
            None => json!(null),
        };
        let line = json!({
            "start_unix_ts": w.start_unix_ts,
            "end_unix_ts": w.end_unix_ts,
            "imu": imu,
            "audio": audio,
        });
        text.push_str(&line.to_string());
        text.push('\n');
    }
    warn_all(&warnings);
    write_all(out, text.as_bytes())
}
