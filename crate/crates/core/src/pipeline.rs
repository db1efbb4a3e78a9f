//! Stream → log entries: align, annotate, extract, prompt, infer, append.
//!
//! Windows are processed independently (optionally on several threads) and the
//! resulting entries are appended in time order. A failing stage degrades the
//! entry instead of aborting the run; each degradation is reported as a warning.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use thiserror::Error;

use crate::annotate::{
    annotate_light, annotate_sound, annotate_temperature, estimate_altitude_with_reference, rms_dbfs,
    EnvironmentAnnotation, SEA_LEVEL_HPA,
};
use crate::audio_features::{extract_audio_features, MfccConfig};
use crate::geoloc::{locate, BeaconMap, Geocoder, StructuredAddress};
use crate::imu_features::{extract_imu_features_with, ImuFeatureConfig};
use crate::inference::{parse_context_response, Activity, Backend};
use crate::ingest::{to_civil_time, window_align, IngestError, SensorRecord, SensorWindow};
use crate::logbook::{ActivityLogEntry, LogError, LogStore};
use crate::promptgen::{build_context_prompt_with, ContextBundle, Prompt, PromptError, Template};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub window_s: f64,
    pub utc_offset_minutes: i32,
    pub workers: usize,
    pub imu: ImuFeatureConfig,
    pub mfcc: MfccConfig,
    pub reference_pressure_hpa: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window_s: 120.0,
            utc_offset_minutes: 0,
            workers: 1,
            imu: ImuFeatureConfig::default(),
            mfcc: MfccConfig::default(),
            reference_pressure_hpa: SEA_LEVEL_HPA,
        }
    }
}

/// Shared services for a run.
pub struct PipelineContext<'a> {
    pub geocoder: &'a Geocoder,
    pub beacons: &'a BeaconMap,
    pub backend: &'a Backend,
    pub template: &'a Template,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub windows: usize,
    pub empty_windows: usize,
    pub entries: usize,
    pub warnings: Vec<String>,
}

impl RunStats {
    pub fn warning_count(&self) -> usize {
        self.warnings.len()
    }
}

/// Everything derived for one window before inference.
#[derive(Debug, Clone)]
pub struct WindowAnalysis {
    pub bundle: Option<ContextBundle>,
    pub prompt: Option<Prompt>,
    pub civil_time: crate::ingest::CivilTimestamp,
    pub address: StructuredAddress,
    pub environment: EnvironmentAnnotation,
    pub warnings: Vec<String>,
}

/// Annotation, location, features and prompt for one non-empty window.
pub fn analyze_window(
    w: &SensorWindow,
    cfg: &PipelineConfig,
    ctx: &PipelineContext<'_>,
) -> Result<WindowAnalysis, PipelineError> {
    let civil_time = to_civil_time(w.start_unix_ts, cfg.utc_offset_minutes)?;
    let mut warnings = Vec::new();
    let mut warn = |stage: &str, e: String| warnings.push(format!("{civil_time}: {stage}: {e}"));

    let mut environment = EnvironmentAnnotation::default();
    if let Some(lux) = w.light_lux {
        environment.light = annotate_light(lux).map_err(|e| warn("light", e.to_string())).ok();
    }
    if let Some(c) = w.ambient_temp_c {
        environment.temperature = annotate_temperature(c)
            .map_err(|e| warn("temperature", e.to_string()))
            .ok();
    }
    if let Some(clip) = &w.audio {
        environment.sound = rms_dbfs(clip)
            .and_then(annotate_sound)
            .map_err(|e| warn("sound", e.to_string()))
            .ok();
    }
    if let Some(p) = w.pressure_hpa {
        environment.altitude_m = estimate_altitude_with_reference(p, cfg.reference_pressure_hpa)
            .map_err(|e| warn("altitude", e.to_string()))
            .ok();
    }

    let fix = w.geo_fix();
    let address = locate(ctx.geocoder, fix.as_ref(), &w.wifi_ssids, &w.bt_macs, ctx.beacons).unwrap_or_else(|e| {
        warn("location", e.to_string());
        StructuredAddress::unresolved()
    });

    let imu = extract_imu_features_with(w, &cfg.imu)
        .map_err(|e| warn("imu features", e.to_string()))
        .ok();
    let audio = w.audio.as_ref().and_then(|clip| {
        extract_audio_features(clip, &cfg.mfcc)
            .map_err(|e| warn("audio features", e.to_string()))
            .ok()
    });

    let bundle = imu.map(|imu| ContextBundle {
        civil_time,
        address: address.clone(),
        imu,
        audio,
        environment: environment.clone(),
        physio: w.physio.clone(),
        window_s: w.end_unix_ts - w.start_unix_ts,
    });
    let prompt = match &bundle {
        Some(b) => Some(build_context_prompt_with(b, ctx.template)?),
        None => None,
    };
    Ok(WindowAnalysis {
        bundle,
        prompt,
        civil_time,
        address,
        environment,
        warnings,
    })
}

/// Full per-window path including the backend call.
pub fn process_window(
    w: &SensorWindow,
    cfg: &PipelineConfig,
    ctx: &PipelineContext<'_>,
) -> Result<(ActivityLogEntry, Vec<String>), PipelineError> {
    let mut a = analyze_window(w, cfg, ctx)?;
    let (activity, scene) = match &a.prompt {
        Some(p) => match ctx.backend.complete(p) {
            Ok(text) => {
                let inf = parse_context_response(&text);
                if !inf.parse_ok {
                    a.warnings
                        .push(format!("{}: response did not follow the output schema", a.civil_time));
                }
                (inf.activity, inf.scene)
            }
            Err(e) => {
                a.warnings.push(format!("{}: backend: {e}", a.civil_time));
                (Activity::Unknown, String::new())
            }
        },
        None => (Activity::Unknown, String::new()),
    };
    let entry = ActivityLogEntry {
        civil_time: a.civil_time,
        address: a.address,
        activity,
        scene,
        light: a.environment.light,
        sound: a.environment.sound,
        temperature: a.environment.temperature,
        altitude_m: a.environment.altitude_m,
        physio: w.physio.clone(),
        template_version: ctx.template.version.clone(),
        backend_model: ctx.backend.model_name().to_string(),
    };
    Ok((entry, a.warnings))
}

type WindowResult = Result<(ActivityLogEntry, Vec<String>), PipelineError>;

fn process_all(windows: &[&SensorWindow], cfg: &PipelineConfig, ctx: &PipelineContext<'_>) -> Vec<WindowResult> {
    let workers = cfg.workers.max(1).min(windows.len().max(1));
    if workers == 1 {
        return windows.iter().map(|w| process_window(w, cfg, ctx)).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<WindowResult>>> = Mutex::new((0..windows.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(w) = windows.get(i) else { break };
                let r = process_window(w, cfg, ctx);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every window processed"))
        .collect()
}

/// Runs aligned windows through the pipeline and appends entries to `store` when given.
pub fn run_windows(
    windows: &[SensorWindow],
    cfg: &PipelineConfig,
    ctx: &PipelineContext<'_>,
    mut store: Option<&mut LogStore>,
) -> Result<(Vec<ActivityLogEntry>, RunStats), PipelineError> {
    let mut stats = RunStats {
        windows: windows.len(),
        ..Default::default()
    };
    let nonempty: Vec<&SensorWindow> = windows.iter().filter(|w| w.record_count > 0).collect();
    stats.empty_windows = windows.len() - nonempty.len();
    let mut entries = Vec::with_capacity(nonempty.len());
    for r in process_all(&nonempty, cfg, ctx) {
        let (entry, warnings) = r?;
        stats.warnings.extend(warnings);
        if let Some(s) = store.as_deref_mut() {
            s.append_entry(&entry)?;
        }
        entries.push(entry);
    }
    stats.entries = entries.len();
    Ok((entries, stats))
}

pub fn run_records(
    records: &[SensorRecord],
    cfg: &PipelineConfig,
    ctx: &PipelineContext<'_>,
    store: Option<&mut LogStore>,
) -> Result<(Vec<ActivityLogEntry>, RunStats), PipelineError> {
    if !(cfg.window_s > 0.0 && cfg.window_s.is_finite()) {
        return Err(PipelineError::Config(format!(
            "window_s must be positive, got {}",
            cfg.window_s
        )));
    }
    let windows = window_align(records, cfg.window_s)?;
    run_windows(&windows, cfg, ctx, store)
}
