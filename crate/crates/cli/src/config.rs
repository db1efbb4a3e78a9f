//! Run configuration: one TOML (or JSON) file, every field optional.

use std::path::{Path, PathBuf};
use std::time::Duration;

use dailylog::annotate::SEA_LEVEL_HPA;
use dailylog::audio_features::MfccConfig;
use dailylog::geoloc::{
    BeaconMap, Gazetteer, Geocoder, HttpGeocoder, DEFAULT_CACHE_CAPACITY, DEFAULT_GAZETTEER_RADIUS_M,
};
use dailylog::imu_features::ImuFeatureConfig;
use dailylog::inference::{Backend, BackendConfig, BackendKind, CentroidModel};
use dailylog::logbook::{AnomalyThresholds, SummaryOptions, DEFAULT_MAX_ENTRIES, DEFAULT_WINDOW_H};
use dailylog::pipeline::PipelineConfig;
use dailylog::promptgen::{Template, DEFAULT_CONTEXT_TEMPLATE};
use dailylog::synth::{default_beacons, default_gazetteer, reference_model, SynthConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub beacons: Option<PathBuf>,
    pub centroid_model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SummarySettings {
    pub window_h: f64,
    pub max_entries: usize,
    pub thresholds: AnomalyThresholds,
}

impl Default for SummarySettings {
    fn default() -> Self {
        SummarySettings {
            window_h: DEFAULT_WINDOW_H,
            max_entries: DEFAULT_MAX_ENTRIES,
            thresholds: AnomalyThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeocodeSettings {
    pub url: Option<String>,
    pub timeout_s: f64,
    pub cache_capacity: usize,
    pub radius_m: f64,
}

impl Default for GeocodeSettings {
    fn default() -> Self {
        GeocodeSettings {
            url: None,
            timeout_s: 10.0,
            cache_capacity: DEFAULT_CACHE_CAPACITY,
            radius_m: DEFAULT_GAZETTEER_RADIUS_M,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub window_s: f64,
    pub utc_offset_minutes: i32,
    pub workers: usize,
    pub reference_pressure_hpa: f64,
    pub template_version: String,
    pub paths: Paths,
    pub summary: SummarySettings,
    pub backend: BackendConfig,
    pub geocode: GeocodeSettings,
    pub imu: ImuFeatureConfig,
    pub mfcc: MfccConfig,
    pub synth: SynthConfig,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            window_s: 120.0,
            utc_offset_minutes: 0,
            workers: 1,
            reference_pressure_hpa: SEA_LEVEL_HPA,
            template_version: DEFAULT_CONTEXT_TEMPLATE.into(),
            paths: Paths::default(),
            summary: SummarySettings::default(),
            backend: BackendConfig::default(),
            geocode: GeocodeSettings::default(),
            imu: ImuFeatureConfig::default(),
            mfcc: MfccConfig::default(),
            synth: SynthConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

/// Endpoint overrides from flags or their environment variables.
#[derive(Debug, Clone, Default)]
pub struct EnvOverrides {
    pub llm_url: Option<String>,
    pub geocode_url: Option<String>,
}

impl RunConfig {
    /// Reads `path` (TOML, or JSON when the extension is `.json`); `None` gives the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io("config", path, e))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg: RunConfig = if is_json {
            serde_json::from_str(&text).map_err(|e| CliError::config_at(path, e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::config_at(path, e.to_string()))?
        };
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if cfg.base_dir.as_os_str().is_empty() {
            cfg.base_dir = PathBuf::from(".");
        }
        Ok(cfg)
    }

    pub fn apply_env(&mut self, env: &EnvOverrides) {
        if let Some(url) = &env.llm_url {
            self.backend.kind = BackendKind::HttpChat;
            self.backend.url = Some(url.clone());
        }
        if let Some(url) = &env.geocode_url {
            self.geocode.url = Some(url.clone());
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn existing(&self, field: &str, p: &Option<PathBuf>) -> Result<Option<PathBuf>, CliError> {
        match p {
            None => Ok(None),
            Some(p) => {
                let full = self.resolve(p);
                if full.is_file() {
                    Ok(Some(full))
                } else {
                    Err(CliError::missing(field, &full))
                }
            }
        }
    }

    /// Checks values and that every referenced input file exists.
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return Err(CliError::config(format!(
                "window_s must be positive, got {}",
                self.window_s
            )));
        }
        if !(self.summary.window_h > 0.0 && self.summary.window_h.is_finite()) {
            return Err(CliError::config(format!(
                "summary.window_h must be positive, got {}",
                self.summary.window_h
            )));
        }
        if self.summary.max_entries < 2 {
            return Err(CliError::config("summary.max_entries must be at least 2".into()));
        }
        if !(self.reference_pressure_hpa > 0.0 && self.reference_pressure_hpa.is_finite()) {
            return Err(CliError::config("reference_pressure_hpa must be positive".into()));
        }
        if !(self.geocode.timeout_s > 0.0 && self.geocode.timeout_s.is_finite()) {
            return Err(CliError::config("geocode.timeout_s must be positive".into()));
        }
        self.mfcc
            .validate()
            .map_err(|e| CliError::config(format!("mfcc: {e}")))?;
        self.backend.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.synth
            .validate()
            .map_err(|e| CliError::config(format!("synth.{e}")))?;
        self.existing("paths.input", &self.paths.input)?;
        self.existing("paths.gazetteer", &self.paths.gazetteer)?;
        self.existing("paths.beacons", &self.paths.beacons)?;
        self.existing("paths.centroid_model", &self.paths.centroid_model)?;
        self.template()?;
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            window_s: self.window_s,
            utc_offset_minutes: self.utc_offset_minutes,
            workers: self.workers.max(1),
            imu: self.imu,
            mfcc: self.mfcc.clone(),
            reference_pressure_hpa: self.reference_pressure_hpa,
        }
    }

    pub fn summary_options(&self) -> SummaryOptions {
        SummaryOptions {
            window_h: self.summary.window_h,
            max_entries: self.summary.max_entries,
            thresholds: self.summary.thresholds,
        }
    }

    /// A built-in version name, or a template file relative to the config.
    pub fn template(&self) -> Result<Template, CliError> {
        if let Some(t) = Template::builtin(&self.template_version) {
            return Ok(t);
        }
        let path = self.resolve(Path::new(&self.template_version));
        Template::resolve(&path.to_string_lossy()).map_err(|e| CliError::config(format!("template_version: {e}")))
    }

    pub fn backend(&self) -> Result<Backend, CliError> {
        let model = match self.existing("paths.centroid_model", &self.paths.centroid_model)? {
            Some(p) => CentroidModel::load(&p).map_err(|e| CliError::input_at(&p, e.to_string()))?,
            None => reference_model(),
        };
        Backend::new(&self.backend, Some(model)).map_err(|e| CliError::config(e.to_string()))
    }

    /// Gazetteer and beacons from files, or the built-in synthetic town when no gazetteer is set.
    pub fn places(&self) -> Result<(Geocoder, BeaconMap), CliError> {
        let (gazetteer, default_map) = match self.existing("paths.gazetteer", &self.paths.gazetteer)? {
            Some(p) => (
                Gazetteer::load(&p).map_err(|e| CliError::input_at(&p, e.to_string()))?,
                BeaconMap::default(),
            ),
            None => (default_gazetteer(), default_beacons()),
        };
        let beacons = match self.existing("paths.beacons", &self.paths.beacons)? {
            Some(p) => BeaconMap::load(&p).map_err(|e| CliError::input_at(&p, e.to_string()))?,
            None => default_map,
        };
        let provider = match &self.geocode.url {
            Some(url) => Some(Box::new(
                HttpGeocoder::new(url.clone(), Duration::from_secs_f64(self.geocode.timeout_s))
                    .map_err(|e| CliError::config(format!("geocode.url: {e}")))?,
            ) as Box<_>),
            None => None,
        };
        let geocoder = Geocoder::with_capacity(
            provider,
            Some(gazetteer.with_radius(self.geocode.radius_m)),
            self.geocode.cache_capacity,
        );
        Ok((geocoder, beacons))
    }
}
