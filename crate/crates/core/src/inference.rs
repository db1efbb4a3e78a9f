//! Text-generation backends and response parsing.
//!
//! The HTTP backend speaks the common chat-completions shape:
//!
//! ```text
//! POST <url>
//! {"model": "<model_name>", "messages": [{"role": "user", "content": "<prompt>"}], "temperature": 0}
//!
//! 200 OK
//! {"choices": [{"message": {"content": "<reply>"}}], ...}
//! ```
//!
//! The mock backend answers from a nearest-centroid model over the accelerometer
//! block it reads back out of the prompt text, so it sees exactly what a remote
//! model would.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::imu_features::BLOCK_LEN;
use crate::ingest::ImuSensor;
use crate::promptgen::{parse_feature_vectors, Prompt, PromptError};

pub const LLM_URL_ENV: &str = "DAILYLOG_LLM_URL";
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
const TIE_RELATIVE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Lying,
    Sitting,
    Standing,
    Walking,
    AscendingStairs,
    DescendingStairs,
    Jogging,
    Biking,
    Unknown,
}

impl Activity {
    pub const ALL: [Activity; 9] = [
        Activity::Lying,
        Activity::Sitting,
        Activity::Standing,
        Activity::Walking,
        Activity::AscendingStairs,
        Activity::DescendingStairs,
        Activity::Jogging,
        Activity::Biking,
        Activity::Unknown,
    ];

    pub const KNOWN: [Activity; 8] = [
        Activity::Lying,
        Activity::Sitting,
        Activity::Standing,
        Activity::Walking,
        Activity::AscendingStairs,
        Activity::DescendingStairs,
        Activity::Jogging,
        Activity::Biking,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Activity::Lying => "lying",
            Activity::Sitting => "sitting",
            Activity::Standing => "standing",
            Activity::Walking => "walking",
            Activity::AscendingStairs => "ascending_stairs",
            Activity::DescendingStairs => "descending_stairs",
            Activity::Jogging => "jogging",
            Activity::Biking => "biking",
            Activity::Unknown => "unknown",
        }
    }

    pub fn is_sedentary(self) -> bool {
        matches!(self, Activity::Sitting | Activity::Lying)
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Activity::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown activity label {s:?}"))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("request timed out")]
    Timeout,
    #[error("backend returned HTTP {0}")]
    HttpStatus(u16),
    #[error("unexpected response body: {0}")]
    BadResponseShape(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("backend config: {0}")]
    Config(String),
    #[error("centroid model: {0}")]
    Model(String),
    #[error(transparent)]
    FeatureParse(#[from] PromptError),
}

/// Label vocabulary growth lives in a data file, not here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynonymTable {
    pub version: String,
    pub labels: BTreeMap<Activity, Vec<String>>,
}

impl SynonymTable {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let mut t: SynonymTable = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if t.labels.contains_key(&Activity::Unknown) {
            return Err("\"unknown\" cannot have synonyms".into());
        }
        for list in t.labels.values_mut() {
            for s in list.iter_mut() {
                *s = s.to_ascii_lowercase();
            }
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn builtin() -> &'static SynonymTable {
        static TABLE: OnceLock<SynonymTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            SynonymTable::from_json(include_str!("../data/synonyms.json")).expect("built-in synonym table parses")
        })
    }

    /// Earliest whole-word synonym in `text`; longer synonyms win at the same position.
    pub fn scan(&self, text: &str) -> Option<Activity> {
        let lower = text.to_ascii_lowercase();
        let mut best: Option<(usize, usize, Activity)> = None;
        for (activity, words) in &self.labels {
            for w in words {
                if let Some(pos) = find_word(&lower, w) {
                    let better = match best {
                        None => true,
                        Some((bp, bl, _)) => pos < bp || (pos == bp && w.len() > bl),
                    };
                    if better {
                        best = Some((pos, w.len(), *activity));
                    }
                }
            }
        }
        best.map(|(_, _, a)| a)
    }
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn find_word(haystack: &str, needle: &str) -> Option<usize> {
    let bytes = haystack.as_bytes();
    let mut from = 0;
    while let Some(rel) = haystack[from..].find(needle) {
        let start = from + rel;
        let end = start + needle.len();
        let left_ok = start == 0 || !is_word_byte(bytes[start - 1]);
        let right_ok = end == bytes.len() || !is_word_byte(bytes[end]);
        if left_ok && right_ok {
            return Some(start);
        }
        from = start + 1;
        while !haystack.is_char_boundary(from) {
            from += 1;
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityInference {
    pub activity: Activity,
    pub scene: String,
    pub raw_text: String,
    pub parse_ok: bool,
}

/// Value following `key:` up to the next `;` or line end, matched case-insensitively.
fn schema_field<'a>(text: &'a str, lower: &str, key: &str) -> Option<&'a str> {
    let mut from = 0;
    while let Some(rel) = lower[from..].find(key) {
        let after = from + rel + key.len();
        let rest = lower[after..].trim_start_matches([' ', '\t']);
        if let Some(stripped) = rest.strip_prefix(':') {
            let start = lower.len() - stripped.len();
            let end = lower[start..]
                .find([';', '\n', '\r'])
                .map_or(lower.len(), |e| start + e);
            return Some(text[start..end].trim());
        }
        from = after;
    }
    None
}

/// The canonical reply line that [`parse_context_response`] understands.
pub fn render_schema_line(datetime: &str, location: &str, activity: Activity, scene: &str) -> String {
    format!("Date-time: {datetime}; location information: {location}; activity category: {activity}; scenario: {scene}")
}

pub fn parse_context_response(text: &str) -> ActivityInference {
    parse_context_response_with(text, SynonymTable::builtin())
}

pub fn parse_context_response_with(text: &str, table: &SynonymTable) -> ActivityInference {
    let lower = text.to_ascii_lowercase();
    let category = schema_field(text, &lower, "activity category");
    let scene = schema_field(text, &lower, "scenario")
        .map(|s| s.trim_end_matches('.').trim().to_string())
        .unwrap_or_default();
    let (activity, parse_ok) = match category {
        Some(value) => {
            let activity = table.scan(value).unwrap_or(Activity::Unknown);
            (activity, activity != Activity::Unknown)
        }
        None => (table.scan(text).unwrap_or(Activity::Unknown), false),
    };
    ActivityInference {
        activity,
        scene,
        raw_text: text.to_string(),
        parse_ok,
    }
}

/// Nearest-centroid classifier over the 26-value accelerometer block.
///
/// Distances are Euclidean after dividing each dimension by `scale`. A model
/// built from bare centroids uses unit scale; [`CentroidModel::fit`] uses the
/// pooled within-class standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidModel {
    centroids: BTreeMap<String, Vec<f64>>,
    scale: Vec<f64>,
}

/// On-disk forms: a bare `{label: [26 numbers]}` map, or the map plus a scale.
#[derive(Deserialize)]
#[serde(untagged)]
enum ModelFile {
    Scaled {
        centroids: BTreeMap<String, Vec<f64>>,
        scale: Vec<f64>,
    },
    Bare(BTreeMap<String, Vec<f64>>),
}

impl CentroidModel {
    pub fn new(centroids: BTreeMap<String, Vec<f64>>) -> Result<Self, InferenceError> {
        if centroids.len() < 2 {
            return Err(InferenceError::Model(format!(
                "need at least 2 labels, got {}",
                centroids.len()
            )));
        }
        for (label, v) in &centroids {
            if v.len() != BLOCK_LEN {
                return Err(InferenceError::Model(format!(
                    "centroid {label:?} has {} values, expected {BLOCK_LEN}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(InferenceError::Model(format!(
                    "centroid {label:?} has a non-finite value"
                )));
            }
        }
        Ok(CentroidModel {
            centroids,
            scale: vec![1.0; BLOCK_LEN],
        })
    }

    /// Replaces the per-dimension scale; every entry must be finite and positive.
    pub fn with_scale(mut self, scale: Vec<f64>) -> Result<Self, InferenceError> {
        if scale.len() != BLOCK_LEN {
            return Err(InferenceError::Model(format!(
                "scale has {} values, expected {BLOCK_LEN}",
                scale.len()
            )));
        }
        if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(InferenceError::Model("scale values must be finite and positive".into()));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self, InferenceError> {
        match serde_json::from_str(text).map_err(|e| InferenceError::Model(e.to_string()))? {
            ModelFile::Scaled { centroids, scale } => Self::new(centroids)?.with_scale(scale),
            ModelFile::Bare(centroids) => Self::new(centroids),
        }
    }

    pub fn load(path: &Path) -> Result<Self, InferenceError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| InferenceError::Model(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Bare map when the scale is unit, otherwise `{"centroids": .., "scale": ..}`.
    pub fn to_json(&self) -> String {
        let v = if self.scale.iter().all(|s| *s == 1.0) {
            json!(self.centroids)
        } else {
            json!({ "centroids": self.centroids, "scale": self.scale })
        };
        serde_json::to_string_pretty(&v).expect("model serializes")
    }

    /// Per-label means, scaled by the pooled within-class standard deviation.
    ///
    /// Dimensions with no within-class spread keep unit scale.
    pub fn fit<'a>(samples: impl IntoIterator<Item = (&'a str, &'a [f64])>) -> Result<Self, InferenceError> {
        let samples: Vec<(&str, &[f64])> = samples.into_iter().collect();
        let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
        for (label, v) in &samples {
            if v.len() != BLOCK_LEN {
                return Err(InferenceError::Model(format!(
                    "sample for {label:?} has {} values, expected {BLOCK_LEN}",
                    v.len()
                )));
            }
            let entry = sums
                .entry(label.to_string())
                .or_insert_with(|| (vec![0.0; BLOCK_LEN], 0));
            for (s, x) in entry.0.iter_mut().zip(v.iter()) {
                *s += x;
            }
            entry.1 += 1;
        }
        let centroids: BTreeMap<String, Vec<f64>> = sums
            .into_iter()
            .map(|(l, (s, n))| (l, s.into_iter().map(|x| x / n as f64).collect()))
            .collect();
        let model = Self::new(centroids)?;
        let mut ss = vec![0.0; BLOCK_LEN];
        for (label, v) in &samples {
            let c = &model.centroids[*label];
            for d in 0..BLOCK_LEN {
                ss[d] += (v[d] - c[d]).powi(2);
            }
        }
        let scale = ss
            .into_iter()
            .map(|s| {
                let sd = (s / samples.len() as f64).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        model.with_scale(scale)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.centroids.keys().map(String::as_str)
    }

    pub fn centroid(&self, label: &str) -> Option<&[f64]> {
        self.centroids.get(label).map(Vec::as_slice)
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn distance_sq(&self, features: &[f64], label: &str) -> Option<f64> {
        let c = self.centroids.get(label)?;
        Some(
            features
                .iter()
                .zip(c)
                .zip(&self.scale)
                .map(|((x, m), s)| ((x - m) / s).powi(2))
                .sum(),
        )
    }

    /// Labels are visited in lexicographic order, so a near-tie keeps the earlier label.
    pub fn classify(&self, features: &[f64]) -> Result<&str, InferenceError> {
        if features.len() != BLOCK_LEN {
            return Err(InferenceError::Model(format!(
                "feature vector has {} values, expected {BLOCK_LEN}",
                features.len()
            )));
        }
        let mut best: Option<(&str, f64)> = None;
        for label in self.centroids.keys() {
            let d = self.distance_sq(features, label).expect("label exists");
            match best {
                Some((_, bd)) if d >= bd - TIE_RELATIVE_TOLERANCE * bd.max(d) => {}
                _ => best = Some((label, d)),
            }
        }
        Ok(best.expect("model has labels").0)
    }
}

/// Value after `key` up to the line end, on the first line containing it.
fn line_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .find_map(|l| l.find(key).map(|i| l[i + key.len()..].trim()))
}

fn place_type_of(location: &str) -> Option<&str> {
    let open = location.rfind('(')?;
    let inner = location[open + 1..].strip_suffix(')')?;
    let first = inner.split(';').next()?.trim();
    (!first.is_empty()).then_some(first)
}

/// Deterministic stand-in for a remote model.
pub fn mock_infer(prompt: &Prompt, model: &CentroidModel) -> Result<String, InferenceError> {
    let parsed = parse_feature_vectors(&prompt.rendered)?;
    let accel = parsed
        .imu
        .get(&ImuSensor::Accel)
        .ok_or_else(|| PromptError::FeatureParse("no imu.accel vector".into()))?;
    let label = model.classify(accel)?;
    let activity = label.parse::<Activity>().unwrap_or(Activity::Unknown);
    let (datetime, location) = match line_value(&prompt.rendered, "Date-time:") {
        Some(v) => match v.split_once("; Location:") {
            Some((d, l)) => (d.trim(), l.trim()),
            None => (v, "unspecified"),
        },
        None => ("unspecified", "unspecified"),
    };
    let scene = place_type_of(location).unwrap_or("unspecified");
    Ok(render_schema_line(datetime, location, activity, scene))
}

/// Deterministic narrative for a summary prompt, built from the JSON entry lines it carries.
pub fn mock_summarize(rendered: &str) -> String {
    let entries: Vec<serde_json::Value> = rendered
        .lines()
        .filter(|l| l.starts_with('{'))
        .filter_map(|l| serde_json::from_str(l).ok())
        .collect();
    let field = |e: &serde_json::Value, k: &str| e.get(k).and_then(|v| v.as_str()).unwrap_or("").to_string();
    let (Some(first), Some(last)) = (entries.first(), entries.last()) else {
        return "No activity log entries were provided.".into();
    };
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for e in &entries {
        *counts.entry(field(e, "activity")).or_default() += 1;
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let breakdown: Vec<String> = ranked.iter().map(|(a, n)| format!("{a} ({n})")).collect();
    format!(
        "Between {} and {} the log holds {} entries. Activities by frequency: {}.",
        field(first, "civil_time"),
        field(last, "civil_time"),
        entries.len(),
        breakdown.join(", ")
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default = "default_model_name")]
    pub model_name: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_model_name() -> String {
    "mock-centroid".into()
}
fn default_timeout_s() -> f64 {
    30.0
}
fn default_max_retries() -> u32 {
    2
}
fn default_backoff_ms() -> u64 {
    200
}
fn default_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            url: None,
            model_name: default_model_name(),
            timeout_s: default_timeout_s(),
            max_retries: default_max_retries(),
            backoff_base_ms: default_backoff_ms(),
            max_in_flight: default_in_flight(),
        }
    }
}

impl BackendConfig {
    pub fn http(url: impl Into<String>, model_name: impl Into<String>) -> Self {
        BackendConfig {
            kind: BackendKind::HttpChat,
            url: Some(url.into()),
            model_name: model_name.into(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: String| Err(InferenceError::Config(m));
        match (self.kind, &self.url) {
            (BackendKind::HttpChat, None) => return bad("backend.url is required for http_chat".into()),
            (BackendKind::Mock, Some(_)) => return bad("backend.url is only valid for http_chat".into()),
            _ => {}
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return bad(format!("backend.timeout_s must be positive, got {}", self.timeout_s));
        }
        if self.max_retries > 10 {
            return bad(format!(
                "backend.max_retries must be at most 10, got {}",
                self.max_retries
            ));
        }
        if self.max_in_flight == 0 {
            return bad("backend.max_in_flight must be at least 1".into());
        }
        Ok(())
    }

    /// Worst-case wall time of one `complete` call, excluding queueing for a slot.
    pub fn latency_budget(&self) -> Duration {
        let attempts = self.max_retries + 1;
        let backoff: u64 = (0..self.max_retries).map(|i| self.backoff_base_ms << i).sum();
        Duration::from_secs_f64(self.timeout_s * attempts as f64) + Duration::from_millis(backoff)
    }
}

#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot lock");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock") += 1;
        self.0.cv.notify_one();
    }
}

struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    cfg: BackendConfig,
}

enum BackendInner {
    Http(HttpBackend),
    Mock(CentroidModel),
}

/// Shareable handle; clones share the in-flight cap.
#[derive(Clone)]
pub struct Backend {
    inner: Arc<BackendInner>,
    slots: Arc<Slots>,
    model_name: String,
}

impl fmt::Debug for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match *self.inner {
            BackendInner::Http(_) => "http_chat",
            BackendInner::Mock(_) => "mock",
        };
        f.debug_struct("Backend")
            .field("kind", &kind)
            .field("model", &self.model_name)
            .finish()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

enum Attempt {
    Done(Result<String, InferenceError>),
    Retry(InferenceError),
}

impl HttpBackend {
    fn attempt(&self, body: &serde_json::Value) -> Attempt {
        let resp = match self.client.post(&self.url).json(body).send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Retry(InferenceError::Timeout),
            Err(e) => return Attempt::Retry(InferenceError::Transport(e.to_string())),
        };
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Attempt::Retry(InferenceError::HttpStatus(status.as_u16()));
        }
        if !status.is_success() {
            return Attempt::Done(Err(InferenceError::HttpStatus(status.as_u16())));
        }
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Attempt::Retry(InferenceError::Timeout),
            Err(e) => return Attempt::Retry(InferenceError::Transport(e.to_string())),
        };
        let parsed: Result<ChatResponse, _> = serde_json::from_str(&text);
        Attempt::Done(match parsed {
            Ok(r) => r
                .choices
                .into_iter()
                .next()
                .map(|c| c.message.content)
                .ok_or_else(|| InferenceError::BadResponseShape("empty choices".into())),
            Err(e) => Err(InferenceError::BadResponseShape(e.to_string())),
        })
    }

    fn complete(&self, prompt: &str) -> Result<String, InferenceError> {
        let body = json!({
            "model": self.cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        });
        let mut last = InferenceError::Transport("no attempt made".into());
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(self.cfg.backoff_base_ms << (attempt - 1)));
            }
            match self.attempt(&body) {
                Attempt::Done(r) => return r,
                Attempt::Retry(e) => last = e,
            }
        }
        Err(last)
    }
}

impl Backend {
    pub fn new(cfg: &BackendConfig, mock_model: Option<CentroidModel>) -> Result<Self, InferenceError> {
        cfg.validate()?;
        let inner = match cfg.kind {
            BackendKind::HttpChat => {
                let client = reqwest::blocking::Client::builder()
                    .timeout(Duration::from_secs_f64(cfg.timeout_s))
                    .build()
                    .map_err(|e| InferenceError::Config(e.to_string()))?;
                BackendInner::Http(HttpBackend {
                    client,
                    url: cfg.url.clone().expect("validated"),
                    cfg: cfg.clone(),
                })
            }
            BackendKind::Mock => BackendInner::Mock(
                mock_model.ok_or_else(|| InferenceError::Config("mock backend needs a centroid model".into()))?,
            ),
        };
        Ok(Backend {
            inner: Arc::new(inner),
            slots: Arc::new(Slots {
                free: Mutex::new(cfg.max_in_flight),
                cv: Condvar::new(),
            }),
            model_name: cfg.model_name.clone(),
        })
    }

    pub fn mock(model: CentroidModel) -> Self {
        Self::new(&BackendConfig::default(), Some(model)).expect("default mock config is valid")
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn complete(&self, prompt: &Prompt) -> Result<String, InferenceError> {
        let _slot = self.slots.acquire();
        match &*self.inner {
            BackendInner::Http(h) => h.complete(&prompt.rendered),
            BackendInner::Mock(_) if prompt.template_version.starts_with("summary") => {
                Ok(mock_summarize(&prompt.rendered))
            }
            BackendInner::Mock(m) => mock_infer(prompt, m),
        }
    }
}

pub fn complete(prompt: &Prompt, backend: &Backend) -> Result<String, InferenceError> {
    backend.complete(prompt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_line_parses() {
        let r =
            parse_context_response("Date-time: x; location information: y; activity category: Walking; scenario: park");
        assert_eq!(r.activity, Activity::Walking);
        assert_eq!(r.scene, "park");
        assert!(r.parse_ok);
    }

    #[test]
    fn fallback_and_empty() {
        let r = parse_context_response("The user is probably jogging.");
        assert_eq!(r.activity, Activity::Jogging);
        assert!(!r.parse_ok);
        let r = parse_context_response("");
        assert_eq!(r.activity, Activity::Unknown);
        assert!(!r.parse_ok);
        assert_eq!(r.raw_text, "");
    }

    #[test]
    fn synonyms() {
        let cat = |s: &str| parse_context_response(&format!("activity category: {s}; scenario: x")).activity;
        assert_eq!(cat("walk"), Activity::Walking);
        assert_eq!(cat("upstairs"), Activity::AscendingStairs);
        assert_eq!(cat("walking downstairs"), Activity::DescendingStairs);
        assert_eq!(cat("Running"), Activity::Jogging);
        assert_eq!(cat("CYCLING"), Activity::Biking);
        assert_eq!(cat("teleporting"), Activity::Unknown);
        // no substring matches inside other words
        assert_eq!(cat("walkman"), Activity::Unknown);
    }

    #[test]
    fn semicolons_in_location_do_not_confuse_fields() {
        let line = render_schema_line(
            "2023-11-14 22:13:20 +00:00",
            "Main St (library; Building A, floor 2)",
            Activity::Sitting,
            "library",
        );
        let r = parse_context_response(&line);
        assert_eq!(r.activity, Activity::Sitting);
        assert_eq!(r.scene, "library");
    }

    fn model() -> CentroidModel {
        let mut m = BTreeMap::new();
        m.insert("sitting".to_string(), vec![0.0; BLOCK_LEN]);
        m.insert("standing".to_string(), vec![2.0; BLOCK_LEN]);
        m.insert("walking".to_string(), vec![10.0; BLOCK_LEN]);
        CentroidModel::new(m).unwrap()
    }

    #[test]
    fn centroid_ties_prefer_lexicographic_label() {
        let mut m = BTreeMap::new();
        m.insert("standing".to_string(), vec![2.0; BLOCK_LEN]);
        m.insert("sitting".to_string(), vec![0.0; BLOCK_LEN]);
        let m = CentroidModel::new(m).unwrap();
        assert_eq!(m.classify(&[1.0; BLOCK_LEN]).unwrap(), "sitting");
        assert_eq!(model().classify(&[0.0; BLOCK_LEN]).unwrap(), "sitting");
        assert_eq!(model().classify(&[9.0; BLOCK_LEN]).unwrap(), "walking");
    }

    #[test]
    fn model_validation() {
        let mut one = BTreeMap::new();
        one.insert("a".to_string(), vec![0.0; BLOCK_LEN]);
        assert!(CentroidModel::new(one.clone()).is_err());
        one.insert("b".to_string(), vec![0.0; 3]);
        assert!(CentroidModel::new(one).is_err());
        let m = model();
        assert_eq!(CentroidModel::from_json(&m.to_json()).unwrap(), m);
        assert!(m.to_json().trim_start().starts_with("{\n  \"sitting\""));
    }

    #[test]
    fn fit_uses_pooled_within_class_spread() {
        let mut a0 = vec![0.0; BLOCK_LEN];
        let mut a1 = vec![0.0; BLOCK_LEN];
        a0[0] = -1.0;
        a1[0] = 1.0;
        let b = vec![5.0; BLOCK_LEN];
        let m = CentroidModel::fit([("a", a0.as_slice()), ("a", a1.as_slice()), ("b", b.as_slice())]).unwrap();
        // squared deviations 1 + 1 + 0 over 3 samples
        assert!((m.scale()[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(m.scale()[1], 1.0);
        assert_eq!(m.centroid("a").unwrap()[0], 0.0);
        let back = CentroidModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert!(m.clone().with_scale(vec![0.0; BLOCK_LEN]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(BackendConfig::default().validate().is_ok());
        let mut c = BackendConfig {
            kind: BackendKind::HttpChat,
            ..BackendConfig::default()
        };
        assert!(c.validate().is_err());
        c.url = Some("http://127.0.0.1:1".into());
        assert!(c.validate().is_ok());
        c.timeout_s = 0.0;
        assert!(c.validate().is_err());
        let c = BackendConfig::http("http://x", "m");
        assert_eq!(
            c.latency_budget(),
            Duration::from_secs(90) + Duration::from_millis(200 + 400)
        );
    }

    #[test]
    fn mock_rejects_malformed_prompt() {
        let err = mock_infer(&Prompt::raw("no features"), &model()).unwrap_err();
        assert!(matches!(err, InferenceError::FeatureParse(_)));
    }
}
