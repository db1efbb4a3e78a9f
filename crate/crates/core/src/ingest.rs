//! Raw sensor stream parsing, fixed-length windowing and civil-time conversion.
//!
//! Two wire formats are accepted, both one record per line:
//!
//! * JSONL: `{"unix_ts": number, "modality": string, "payload": [numbers] | object}`
//! * CSV: header row `unix_ts,modality,p0,p1,...`, one positional payload cell per column
//!
//! The per-modality payload layout is documented in `docs/stream-format.md`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Map, Value};
use thiserror::Error;

/// Sample rate assumed for an IMU series holding a single sample.
pub const DEFAULT_IMU_RATE_HZ: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("input is not valid UTF-8: {0}")]
    Decode(String),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("stream contains no records")]
    EmptyStream,
    #[error("window length must be positive and finite, got {0}")]
    InvalidWindow(f64),
    #[error("timestamp must be finite and non-negative, got {0}")]
    InvalidTimestamp(f64),
    #[error("audio chunk at {ts} has {found} Hz but the window started at {expected} Hz")]
    AudioRateMismatch { ts: f64, expected: f64, found: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    ImuAccel,
    ImuGyro,
    ImuMag,
    Audio,
    Gps,
    Wifi,
    Bluetooth,
    Light,
    Temperature,
    Physio,
    Barometer,
}

impl Modality {
    pub const ALL: [Modality; 11] = [
        Modality::ImuAccel,
        Modality::ImuGyro,
        Modality::ImuMag,
        Modality::Audio,
        Modality::Gps,
        Modality::Wifi,
        Modality::Bluetooth,
        Modality::Light,
        Modality::Temperature,
        Modality::Physio,
        Modality::Barometer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::ImuAccel => "imu_accel",
            Modality::ImuGyro => "imu_gyro",
            Modality::ImuMag => "imu_mag",
            Modality::Audio => "audio",
            Modality::Gps => "gps",
            Modality::Wifi => "wifi",
            Modality::Bluetooth => "bluetooth",
            Modality::Light => "light",
            Modality::Temperature => "temperature",
            Modality::Physio => "physio",
            Modality::Barometer => "barometer",
        }
    }

    pub fn imu_sensor(self) -> Option<ImuSensor> {
        match self {
            Modality::ImuAccel => Some(ImuSensor::Accel),
            Modality::ImuGyro => Some(ImuSensor::Gyro),
            Modality::ImuMag => Some(ImuSensor::Mag),
            _ => None,
        }
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Modality::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown modality {s:?}"))
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The three inertial sensors, in the fixed order used by feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImuSensor {
    Accel,
    Gyro,
    Mag,
}

impl ImuSensor {
    pub const ALL: [ImuSensor; 3] = [ImuSensor::Accel, ImuSensor::Gyro, ImuSensor::Mag];

    pub fn as_str(self) -> &'static str {
        match self {
            ImuSensor::Accel => "accel",
            ImuSensor::Gyro => "gyro",
            ImuSensor::Mag => "mag",
        }
    }

    pub fn modality(self) -> Modality {
        match self {
            ImuSensor::Accel => Modality::ImuAccel,
            ImuSensor::Gyro => Modality::ImuGyro,
            ImuSensor::Mag => Modality::ImuMag,
        }
    }
}

/// Latest physiological readings; every field is optional but at least one is set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhysioSnapshot {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eda_microsiemens: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hr_bpm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ibi_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temp_celsius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spo2_percent: Option<f64>,
}

impl PhysioSnapshot {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            self.eda_microsiemens,
            self.hr_bpm,
            self.ibi_ms,
            self.temp_celsius,
            self.spo2_percent,
        ];
        if fields.iter().all(Option::is_none) {
            return Err("physio snapshot has no fields".into());
        }
        if fields.iter().flatten().any(|v| !v.is_finite()) {
            return Err("physio values must be finite".into());
        }
        if let Some(eda) = self.eda_microsiemens {
            if eda < 0.0 {
                return Err(format!("eda_microsiemens {eda} is negative"));
            }
        }
        if let Some(hr) = self.hr_bpm {
            if hr <= 0.0 {
                return Err(format!("hr_bpm {hr} must be positive"));
            }
        }
        if let Some(ibi) = self.ibi_ms {
            if ibi <= 0.0 {
                return Err(format!("ibi_ms {ibi} must be positive"));
            }
        }
        if let Some(spo2) = self.spo2_percent {
            if !(0.0..=100.0).contains(&spo2) {
                return Err(format!("spo2_percent {spo2} outside [0, 100]"));
            }
        }
        if let (Some(hr), Some(ibi)) = (self.hr_bpm, self.ibi_ms) {
            if (ibi - 60000.0 / hr).abs() > 0.05 * ibi {
                return Err(format!("ibi_ms {ibi} disagrees with hr_bpm {hr} by more than 5%"));
            }
        }
        Ok(())
    }
}

/// Modality-specific value bundle carried by a [`SensorRecord`].
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Axes([f64; 3]),
    Audio {
        sample_rate_hz: f64,
        samples: Vec<f64>,
    },
    Position {
        lat: f64,
        lon: f64,
    },
    Ssids(Vec<String>),
    Macs(Vec<String>),
    /// Light (lux), temperature (°C) or barometer (hPa).
    Scalar(f64),
    Physio(PhysioSnapshot),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorRecord {
    pub unix_ts: f64,
    pub modality: Modality,
    pub payload: Payload,
}

impl SensorRecord {
    /// Builds a record, checking the timestamp and that the payload fits the modality.
    pub fn new(unix_ts: f64, modality: Modality, payload: Payload) -> Result<Self, String> {
        let record = SensorRecord {
            unix_ts,
            modality,
            payload,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.unix_ts.is_finite() || self.unix_ts < 0.0 {
            return Err(format!("unix_ts {} must be finite and >= 0", self.unix_ts));
        }
        match (self.modality, &self.payload) {
            (Modality::ImuAccel | Modality::ImuGyro | Modality::ImuMag, Payload::Axes(v)) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err("tri-axis values must be finite".into());
                }
            }
            (
                Modality::Audio,
                Payload::Audio {
                    sample_rate_hz,
                    samples,
                },
            ) => {
                if !(sample_rate_hz.is_finite() && *sample_rate_hz > 0.0) {
                    return Err(format!("audio sample rate {sample_rate_hz} must be positive"));
                }
                if samples.is_empty() {
                    return Err("audio chunk has no samples".into());
                }
                if let Some(s) = samples.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
                    return Err(format!("audio sample {s} outside [-1, 1]"));
                }
            }
            (Modality::Gps, Payload::Position { lat, lon }) => check_lat_lon(*lat, *lon)?,
            (Modality::Wifi, Payload::Ssids(_)) => {}
            (Modality::Bluetooth, Payload::Macs(macs)) => {
                if let Some(bad) = macs.iter().find(|m| !is_mac_address(m)) {
                    return Err(format!("bluetooth address {bad:?} is not 6 colon-separated hex octets"));
                }
            }
            (Modality::Light, Payload::Scalar(lux)) => {
                if !(lux.is_finite() && *lux >= 0.0) {
                    return Err(format!("light level {lux} lux must be non-negative"));
                }
            }
            (Modality::Temperature, Payload::Scalar(c)) => {
                if !c.is_finite() {
                    return Err("temperature must be finite".into());
                }
            }
            (Modality::Barometer, Payload::Scalar(p)) => {
                if !(p.is_finite() && *p > 0.0) {
                    return Err(format!("pressure {p} hPa must be positive"));
                }
            }
            (Modality::Physio, Payload::Physio(snapshot)) => snapshot.validate()?,
            (modality, _) => {
                return Err(format!("payload shape does not match modality {modality}"));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_lat_lon(lat: f64, lon: f64) -> Result<(), String> {
    if !(lat.is_finite() && (-90.0..=90.0).contains(&lat)) {
        return Err(format!("latitude {lat} outside [-90, 90]"));
    }
    if !(lon.is_finite() && (-180.0..=180.0).contains(&lon)) {
        return Err(format!("longitude {lon} outside [-180, 180]"));
    }
    Ok(())
}

/// `true` for strings like `a4:c1:38:00:9f:2e`.
pub fn is_mac_address(s: &str) -> bool {
    let octets: Vec<&str> = s.split(':').collect();
    octets.len() == 6
        && octets
            .iter()
            .all(|o| o.len() == 2 && o.chars().all(|c| c.is_ascii_hexdigit()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriAxisSeries {
    pub sample_rate_hz: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl TriAxisSeries {
    pub fn new(sample_rate_hz: f64, x: Vec<f64>, y: Vec<f64>, z: Vec<f64>) -> Result<Self, String> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(format!("sample rate {sample_rate_hz} must be positive"));
        }
        if x.is_empty() || x.len() != y.len() || x.len() != z.len() {
            return Err(format!(
                "axis lengths must be equal and non-zero (x={}, y={}, z={})",
                x.len(),
                y.len(),
                z.len()
            ));
        }
        Ok(TriAxisSeries {
            sample_rate_hz,
            x,
            y,
            z,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioClip {
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
}

impl AudioClip {
    pub fn new(sample_rate_hz: f64, samples: Vec<f64>) -> Result<Self, String> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(format!("sample rate {sample_rate_hz} must be positive"));
        }
        if samples.is_empty() {
            return Err("audio clip is empty".into());
        }
        if let Some(s) = samples.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
            return Err(format!("audio sample {s} outside [-1, 1]"));
        }
        Ok(AudioClip {
            sample_rate_hz,
            samples,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsPoint {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoFix {
    pub lat: f64,
    pub lon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pressure_hpa: Option<f64>,
    #[serde(default)]
    pub wifi_ssids: Vec<String>,
    #[serde(default)]
    pub bt_macs: Vec<String>,
}

impl GeoFix {
    pub fn new(lat: f64, lon: f64) -> Result<Self, String> {
        check_lat_lon(lat, lon)?;
        Ok(GeoFix {
            lat,
            lon,
            pressure_hpa: None,
            wifi_ssids: Vec::new(),
            bt_macs: Vec::new(),
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        check_lat_lon(self.lat, self.lon)?;
        if let Some(p) = self.pressure_hpa {
            if !(p.is_finite() && p > 0.0) {
                return Err(format!("pressure {p} hPa must be positive"));
            }
        }
        if let Some(bad) = self.bt_macs.iter().find(|m| !is_mac_address(m)) {
            return Err(format!("bluetooth address {bad:?} is not 6 colon-separated hex octets"));
        }
        Ok(())
    }
}

/// Every aligned reading for one half-open window `[start_unix_ts, end_unix_ts)`.
///
/// GPS, barometer and radio observations are kept side by side so beacon
/// refinement still works for windows without a satellite fix.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorWindow {
    pub start_unix_ts: f64,
    pub end_unix_ts: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accel: Option<TriAxisSeries>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gyro: Option<TriAxisSeries>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mag: Option<TriAxisSeries>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<AudioClip>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gps: Option<GpsPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pressure_hpa: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wifi_ssids: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bt_macs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub light_lux: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambient_temp_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physio: Option<PhysioSnapshot>,
    /// Records that contributed to this window after de-duplication and physio supersession.
    #[serde(default)]
    pub record_count: usize,
}

impl SensorWindow {
    pub fn imu(&self, sensor: ImuSensor) -> Option<&TriAxisSeries> {
        match sensor {
            ImuSensor::Accel => self.accel.as_ref(),
            ImuSensor::Gyro => self.gyro.as_ref(),
            ImuSensor::Mag => self.mag.as_ref(),
        }
    }

    pub fn imu_mut(&mut self, sensor: ImuSensor) -> &mut Option<TriAxisSeries> {
        match sensor {
            ImuSensor::Accel => &mut self.accel,
            ImuSensor::Gyro => &mut self.gyro,
            ImuSensor::Mag => &mut self.mag,
        }
    }

    pub fn has_imu(&self) -> bool {
        ImuSensor::ALL.iter().any(|s| self.imu(*s).is_some())
    }

    /// The window's position context, present only when a GPS fix was recorded.
    pub fn geo_fix(&self) -> Option<GeoFix> {
        self.gps.map(|p| GeoFix {
            lat: p.lat,
            lon: p.lon,
            pressure_hpa: self.pressure_hpa,
            wifi_ssids: self.wifi_ssids.clone(),
            bt_macs: self.bt_macs.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamFormat {
    Jsonl,
    Csv,
}

impl StreamFormat {
    /// Guesses the format from a file extension; anything other than `.csv` is JSONL.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => StreamFormat::Csv,
            _ => StreamFormat::Jsonl,
        }
    }
}

pub fn parse_stream(raw: &[u8], format: StreamFormat) -> Result<Vec<SensorRecord>, IngestError> {
    let text = std::str::from_utf8(raw).map_err(|e| IngestError::Decode(e.to_string()))?;
    match format {
        StreamFormat::Jsonl => parse_jsonl(text),
        StreamFormat::Csv => parse_csv(text),
    }
}

fn schema(line: usize, message: impl Into<String>) -> IngestError {
    IngestError::Schema {
        line,
        message: message.into(),
    }
}

fn parse_jsonl(text: &str) -> Result<Vec<SensorRecord>, IngestError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| schema(lineno, format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| schema(lineno, "record is not a JSON object"))?;
        let unix_ts = obj
            .get("unix_ts")
            .ok_or_else(|| schema(lineno, "missing field `unix_ts`"))?
            .as_f64()
            .ok_or_else(|| schema(lineno, "`unix_ts` is not a number"))?;
        let modality: Modality = obj
            .get("modality")
            .ok_or_else(|| schema(lineno, "missing field `modality`"))?
            .as_str()
            .ok_or_else(|| schema(lineno, "`modality` is not a string"))?
            .parse()
            .map_err(|e: String| schema(lineno, e))?;
        let payload = obj
            .get("payload")
            .ok_or_else(|| schema(lineno, "missing field `payload`"))?;
        let payload = payload_from_json(modality, payload).map_err(|e| schema(lineno, e))?;
        let record = SensorRecord::new(unix_ts, modality, payload).map_err(|e| schema(lineno, e))?;
        out.push(record);
    }
    Ok(out)
}

fn numbers(value: &Value) -> Result<Vec<f64>, String> {
    value
        .as_array()
        .ok_or_else(|| "payload is not an array".to_string())?
        .iter()
        .map(|v| v.as_f64().ok_or_else(|| format!("payload element {v} is not a number")))
        .collect()
}

fn strings(value: &Value, key: &str) -> Result<Vec<String>, String> {
    let arr = match value {
        Value::Array(a) => a,
        Value::Object(o) => o
            .get(key)
            .and_then(Value::as_array)
            .ok_or_else(|| format!("payload object lacks `{key}` array"))?,
        _ => return Err("payload must be an array or object".into()),
    };
    arr.iter()
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| format!("`{key}` entry {v} is not a string"))
        })
        .collect()
}

fn exact_arity(values: Vec<f64>, n: usize, what: &str) -> Result<Vec<f64>, String> {
    if values.len() != n {
        return Err(format!(
            "{what} payload needs exactly {n} numbers, got {}",
            values.len()
        ));
    }
    Ok(values)
}

fn payload_from_json(modality: Modality, value: &Value) -> Result<Payload, String> {
    match modality {
        Modality::ImuAccel | Modality::ImuGyro | Modality::ImuMag => {
            let v = exact_arity(numbers(value)?, 3, "tri-axis")?;
            Ok(Payload::Axes([v[0], v[1], v[2]]))
        }
        Modality::Audio => match value {
            Value::Object(o) => {
                let rate = o
                    .get("sample_rate_hz")
                    .and_then(Value::as_f64)
                    .ok_or("audio payload lacks numeric `sample_rate_hz`")?;
                let samples = numbers(o.get("samples").ok_or("audio payload lacks `samples`")?)?;
                Ok(Payload::Audio {
                    sample_rate_hz: rate,
                    samples,
                })
            }
            _ => {
                let v = numbers(value)?;
                if v.len() < 2 {
                    return Err("audio array payload needs a rate followed by samples".into());
                }
                Ok(Payload::Audio {
                    sample_rate_hz: v[0],
                    samples: v[1..].to_vec(),
                })
            }
        },
        Modality::Gps => {
            let v = exact_arity(numbers(value)?, 2, "gps")?;
            Ok(Payload::Position { lat: v[0], lon: v[1] })
        }
        Modality::Wifi => Ok(Payload::Ssids(strings(value, "ssids")?)),
        Modality::Bluetooth => Ok(Payload::Macs(strings(value, "macs")?)),
        Modality::Light | Modality::Temperature | Modality::Barometer => {
            let v = exact_arity(numbers(value)?, 1, modality.as_str())?;
            Ok(Payload::Scalar(v[0]))
        }
        Modality::Physio => {
            if !value.is_object() {
                return Err("physio payload must be an object".into());
            }
            let snapshot: PhysioSnapshot =
                serde_json::from_value(value.clone()).map_err(|e| format!("physio payload: {e}"))?;
            Ok(Payload::Physio(snapshot))
        }
    }
}

fn payload_to_json(payload: &Payload) -> Value {
    match payload {
        Payload::Axes(v) => json!(v),
        Payload::Audio {
            sample_rate_hz,
            samples,
        } => json!({"sample_rate_hz": sample_rate_hz, "samples": samples}),
        Payload::Position { lat, lon } => json!([lat, lon]),
        Payload::Ssids(s) => json!({ "ssids": s }),
        Payload::Macs(m) => json!({ "macs": m }),
        Payload::Scalar(v) => json!([v]),
        Payload::Physio(p) => serde_json::to_value(p).unwrap_or(Value::Object(Map::new())),
    }
}

const PHYSIO_CSV_ORDER: [&str; 5] = ["eda_microsiemens", "hr_bpm", "ibi_ms", "temp_celsius", "spo2_percent"];

fn parse_csv(text: &str) -> Result<Vec<SensorRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = reader.records();
    let header = match rows.next() {
        None => return Ok(Vec::new()),
        Some(h) => h.map_err(|e| schema(1, e.to_string()))?,
    };
    if header.get(0).map(str::trim) != Some("unix_ts") || header.get(1).map(str::trim) != Some("modality") {
        return Err(schema(1, "header must start with `unix_ts,modality`"));
    }
    let mut out = Vec::new();
    for row in rows {
        let row = row.map_err(|e| schema(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let lineno = row.position().map_or(0, |p| p.line() as usize);
        if row.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        let unix_ts: f64 = row
            .get(0)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| schema(lineno, "`unix_ts` is not a number"))?;
        let modality: Modality = row
            .get(1)
            .ok_or_else(|| schema(lineno, "missing field `modality`"))?
            .trim()
            .parse()
            .map_err(|e: String| schema(lineno, e))?;
        let mut cells: Vec<&str> = row.iter().skip(2).map(str::trim).collect();
        // Trailing empty cells are padding from wider rows.
        if modality != Modality::Physio {
            while cells.last().is_some_and(|c| c.is_empty()) {
                cells.pop();
            }
        }
        let payload = payload_from_cells(modality, &cells).map_err(|e| schema(lineno, e))?;
        let record = SensorRecord::new(unix_ts, modality, payload).map_err(|e| schema(lineno, e))?;
        out.push(record);
    }
    Ok(out)
}

fn cell_numbers(cells: &[&str]) -> Result<Vec<f64>, String> {
    cells
        .iter()
        .map(|c| {
            c.parse::<f64>()
                .map_err(|_| format!("payload cell {c:?} is not a number"))
        })
        .collect()
}

fn payload_from_cells(modality: Modality, cells: &[&str]) -> Result<Payload, String> {
    match modality {
        Modality::ImuAccel | Modality::ImuGyro | Modality::ImuMag => {
            let v = exact_arity(cell_numbers(cells)?, 3, "tri-axis")?;
            Ok(Payload::Axes([v[0], v[1], v[2]]))
        }
        Modality::Audio => {
            let v = cell_numbers(cells)?;
            if v.len() < 2 {
                return Err("audio row needs a rate followed by samples".into());
            }
            Ok(Payload::Audio {
                sample_rate_hz: v[0],
                samples: v[1..].to_vec(),
            })
        }
        Modality::Gps => {
            let v = exact_arity(cell_numbers(cells)?, 2, "gps")?;
            Ok(Payload::Position { lat: v[0], lon: v[1] })
        }
        Modality::Wifi => Ok(Payload::Ssids(cells.iter().map(|s| s.to_string()).collect())),
        Modality::Bluetooth => Ok(Payload::Macs(cells.iter().map(|s| s.to_string()).collect())),
        Modality::Light | Modality::Temperature | Modality::Barometer => {
            let v = exact_arity(cell_numbers(cells)?, 1, modality.as_str())?;
            Ok(Payload::Scalar(v[0]))
        }
        Modality::Physio => {
            if cells.len() > PHYSIO_CSV_ORDER.len() {
                return Err(format!(
                    "physio row has {} cells, at most {} allowed",
                    cells.len(),
                    PHYSIO_CSV_ORDER.len()
                ));
            }
            let mut values = [None; 5];
            for (slot, cell) in values.iter_mut().zip(cells) {
                if !cell.is_empty() {
                    *slot = Some(
                        cell.parse::<f64>()
                            .map_err(|_| format!("physio cell {cell:?} is not a number"))?,
                    );
                }
            }
            Ok(Payload::Physio(PhysioSnapshot {
                eda_microsiemens: values[0],
                hr_bpm: values[1],
                ibi_ms: values[2],
                temp_celsius: values[3],
                spo2_percent: values[4],
            }))
        }
    }
}

fn payload_to_cells(payload: &Payload) -> Vec<String> {
    let num = |v: &f64| v.to_string();
    match payload {
        Payload::Axes(v) => v.iter().map(num).collect(),
        Payload::Audio {
            sample_rate_hz,
            samples,
        } => std::iter::once(sample_rate_hz).chain(samples).map(num).collect(),
        Payload::Position { lat, lon } => vec![num(lat), num(lon)],
        Payload::Ssids(s) | Payload::Macs(s) => s.clone(),
        Payload::Scalar(v) => vec![num(v)],
        Payload::Physio(p) => [p.eda_microsiemens, p.hr_bpm, p.ibi_ms, p.temp_celsius, p.spo2_percent]
            .iter()
            .map(|v| v.map(|x| x.to_string()).unwrap_or_default())
            .collect(),
    }
}

/// Writes records in the given wire format; `parse_stream` reads the output back unchanged.
pub fn serialize_stream(records: &[SensorRecord], format: StreamFormat) -> Vec<u8> {
    match format {
        StreamFormat::Jsonl => {
            let mut out = String::new();
            for r in records {
                out.push_str(&record_to_json_line(r));
                out.push('\n');
            }
            out.into_bytes()
        }
        StreamFormat::Csv => {
            let rows: Vec<Vec<String>> = records.iter().map(|r| payload_to_cells(&r.payload)).collect();
            let width = rows.iter().map(Vec::len).max().unwrap_or(0);
            let mut writer = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
            let mut header = vec!["unix_ts".to_string(), "modality".to_string()];
            header.extend((0..width).map(|i| format!("p{i}")));
            // Writing into a Vec cannot fail.
            writer.write_record(&header).expect("in-memory csv write");
            for (r, cells) in records.iter().zip(rows) {
                let mut row = vec![r.unix_ts.to_string(), r.modality.to_string()];
                row.extend(cells);
                row.resize(width + 2, String::new());
                writer.write_record(&row).expect("in-memory csv write");
            }
            writer.into_inner().expect("in-memory csv flush")
        }
    }
}

pub fn record_to_json_line(record: &SensorRecord) -> String {
    json!({
        "unix_ts": record.unix_ts,
        "modality": record.modality.as_str(),
        "payload": payload_to_json(&record.payload),
    })
    .to_string()
}

#[derive(Default)]
struct WindowAccumulator {
    axes: [Vec<(f64, [f64; 3])>; 3],
    audio: Option<(f64, Vec<f64>)>,
    gps: Option<GpsPoint>,
    wifi: BTreeSet<String>,
    bt: BTreeSet<String>,
    light: Vec<f64>,
    temperature: Vec<f64>,
    pressure: Vec<f64>,
    physio: Option<PhysioSnapshot>,
    count: usize,
}

fn mean_of(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn estimate_rate(timestamps: &[f64]) -> f64 {
    let mut gaps: Vec<f64> = timestamps
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|g| *g > 0.0)
        .collect();
    if gaps.is_empty() {
        return DEFAULT_IMU_RATE_HZ;
    }
    gaps.sort_by(f64::total_cmp);
    let mid = gaps.len() / 2;
    let median = if gaps.len().is_multiple_of(2) {
        0.5 * (gaps[mid - 1] + gaps[mid])
    } else {
        gaps[mid]
    };
    1.0 / median
}

/// Groups records into half-open windows of `window_s` seconds anchored at the earliest timestamp.
///
/// Input is stable-sorted first; records sharing `(unix_ts, modality)` keep the
/// last occurrence. Within a window only the most recent physio snapshot survives,
/// light/temperature/pressure are averaged, the latest GPS fix wins and radio
/// observations are unioned. Empty windows between populated ones are emitted so
/// the result tiles `[min_ts, max_ts]`.
pub fn window_align(records: &[SensorRecord], window_s: f64) -> Result<Vec<SensorWindow>, IngestError> {
    if !(window_s.is_finite() && window_s > 0.0) {
        return Err(IngestError::InvalidWindow(window_s));
    }
    if records.is_empty() {
        return Err(IngestError::EmptyStream);
    }
    let mut sorted: Vec<&SensorRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.unix_ts.total_cmp(&b.unix_ts));
    let sorted = dedup_keep_last(sorted);

    let min_ts = sorted[0].unix_ts;
    let max_ts = sorted[sorted.len() - 1].unix_ts;
    let n_windows = ((max_ts - min_ts) / window_s).floor() as usize + 1;
    let mut accs: Vec<WindowAccumulator> = (0..n_windows).map(|_| WindowAccumulator::default()).collect();

    for r in sorted {
        let idx = (((r.unix_ts - min_ts) / window_s).floor() as usize).min(n_windows - 1);
        let acc = &mut accs[idx];
        acc.count += 1;
        match &r.payload {
            Payload::Axes(v) => {
                let sensor = r.modality.imu_sensor().expect("validated tri-axis modality");
                acc.axes[sensor as usize].push((r.unix_ts, *v));
            }
            Payload::Audio {
                sample_rate_hz,
                samples,
            } => match &mut acc.audio {
                None => acc.audio = Some((*sample_rate_hz, samples.clone())),
                Some((rate, buf)) => {
                    if rate != sample_rate_hz {
                        return Err(IngestError::AudioRateMismatch {
                            ts: r.unix_ts,
                            expected: *rate,
                            found: *sample_rate_hz,
                        });
                    }
                    buf.extend_from_slice(samples);
                }
            },
            Payload::Position { lat, lon } => acc.gps = Some(GpsPoint { lat: *lat, lon: *lon }),
            Payload::Ssids(s) => acc.wifi.extend(s.iter().cloned()),
            Payload::Macs(m) => acc.bt.extend(m.iter().cloned()),
            Payload::Scalar(v) => match r.modality {
                Modality::Light => acc.light.push(*v),
                Modality::Temperature => acc.temperature.push(*v),
                _ => acc.pressure.push(*v),
            },
            Payload::Physio(p) => {
                if acc.physio.replace(p.clone()).is_some() {
                    acc.count -= 1;
                }
            }
        }
    }

    let windows = accs
        .into_iter()
        .enumerate()
        .map(|(i, acc)| {
            let start = min_ts + i as f64 * window_s;
            let mut w = SensorWindow {
                start_unix_ts: start,
                end_unix_ts: start + window_s,
                audio: acc.audio.map(|(rate, samples)| AudioClip {
                    sample_rate_hz: rate,
                    samples,
                }),
                gps: acc.gps,
                pressure_hpa: mean_of(&acc.pressure),
                wifi_ssids: acc.wifi.into_iter().collect(),
                bt_macs: acc.bt.into_iter().collect(),
                light_lux: mean_of(&acc.light),
                ambient_temp_c: mean_of(&acc.temperature),
                physio: acc.physio,
                record_count: acc.count,
                ..SensorWindow::default()
            };
            for (sensor, samples) in ImuSensor::ALL.iter().zip(acc.axes) {
                if samples.is_empty() {
                    continue;
                }
                let ts: Vec<f64> = samples.iter().map(|(t, _)| *t).collect();
                *w.imu_mut(*sensor) = Some(TriAxisSeries {
                    sample_rate_hz: estimate_rate(&ts),
                    x: samples.iter().map(|(_, v)| v[0]).collect(),
                    y: samples.iter().map(|(_, v)| v[1]).collect(),
                    z: samples.iter().map(|(_, v)| v[2]).collect(),
                });
            }
            w
        })
        .collect();
    Ok(windows)
}

fn dedup_keep_last(sorted: Vec<&SensorRecord>) -> Vec<&SensorRecord> {
    let mut out: Vec<&SensorRecord> = Vec::with_capacity(sorted.len());
    let mut group_start = 0;
    for r in sorted {
        if out.last().is_some_and(|l| l.unix_ts != r.unix_ts) {
            group_start = out.len();
        }
        if let Some(pos) = out[group_start..].iter().position(|o| o.modality == r.modality) {
            out.remove(group_start + pos);
        }
        out.push(r);
    }
    out
}

/// Calendar date and wall-clock time at a fixed UTC offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CivilTimestamp {
    pub year: i32,
    pub month: u8,
    pub day: u8,
    pub hour: u8,
    pub minute: u8,
    pub second: u8,
    pub utc_offset_minutes: i32,
}

// Proleptic Gregorian day arithmetic after H. Hinnant's `days_from_civil`.
fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(z: i64) -> (i64, i64, i64) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    (y, m, d)
}

fn is_leap(y: i64) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

fn days_in_month(y: i64, m: i64) -> i64 {
    match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(y) => 29,
        2 => 28,
        _ => 0,
    }
}

/// Converts seconds since the epoch to local civil time; fractional seconds are truncated.
pub fn to_civil_time(unix_ts: f64, utc_offset_minutes: i32) -> Result<CivilTimestamp, IngestError> {
    if !unix_ts.is_finite() || unix_ts < 0.0 {
        return Err(IngestError::InvalidTimestamp(unix_ts));
    }
    let local = unix_ts.trunc() as i64 + i64::from(utc_offset_minutes) * 60;
    let days = local.div_euclid(86_400);
    let sod = local.rem_euclid(86_400);
    let (y, m, d) = civil_from_days(days);
    Ok(CivilTimestamp {
        year: y as i32,
        month: m as u8,
        day: d as u8,
        hour: (sod / 3600) as u8,
        minute: (sod % 3600 / 60) as u8,
        second: (sod % 60) as u8,
        utc_offset_minutes,
    })
}

impl CivilTimestamp {
    /// Seconds since the epoch for this wall-clock reading.
    pub fn to_unix_seconds(&self) -> i64 {
        days_from_civil(i64::from(self.year), i64::from(self.month), i64::from(self.day)) * 86_400
            + i64::from(self.hour) * 3600
            + i64::from(self.minute) * 60
            + i64::from(self.second)
            - i64::from(self.utc_offset_minutes) * 60
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(1..=12).contains(&self.month) {
            return Err(format!("month {} out of range", self.month));
        }
        let dim = days_in_month(i64::from(self.year), i64::from(self.month));
        if self.day < 1 || i64::from(self.day) > dim {
            return Err(format!(
                "day {} out of range for {}-{:02}",
                self.day, self.year, self.month
            ));
        }
        if self.hour > 23 || self.minute > 59 || self.second > 59 {
            return Err(format!(
                "time {:02}:{:02}:{:02} out of range",
                self.hour, self.minute, self.second
            ));
        }
        if self.utc_offset_minutes.abs() >= 24 * 60 {
            return Err(format!("utc offset {} minutes out of range", self.utc_offset_minutes));
        }
        Ok(())
    }

    /// Hours since local midnight, 0..=23.
    pub fn hour_of_day(&self) -> u8 {
        self.hour
    }
}

impl fmt::Display for CivilTimestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.utc_offset_minutes < 0 { '-' } else { '+' };
        let off = self.utc_offset_minutes.unsigned_abs();
        write!(
            f,
            "{:04}-{:02}-{:02} {:02}:{:02}:{:02} {}{:02}:{:02}",
            self.year,
            self.month,
            self.day,
            self.hour,
            self.minute,
            self.second,
            sign,
            off / 60,
            off % 60
        )
    }
}

impl FromStr for CivilTimestamp {
    type Err = String;

    /// Parses `YYYY-MM-DD HH:MM:SS ±HH:MM`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("expected `YYYY-MM-DD HH:MM:SS +HH:MM`, got {s:?}");
        let mut parts = s.split(' ');
        let (date, time, offset) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(d), Some(t), Some(o), None) => (d, t, o),
            _ => return Err(bad()),
        };
        let nums = |text: &str, sep: char| -> Result<Vec<i64>, String> {
            text.split(sep).map(|p| p.parse::<i64>().map_err(|_| bad())).collect()
        };
        let d = nums(date, '-')?;
        let t = nums(time, ':')?;
        let (sign, rest) = match offset.split_at_checked(1) {
            Some(("+", r)) => (1, r),
            Some(("-", r)) => (-1, r),
            _ => return Err(bad()),
        };
        let o = nums(rest, ':')?;
        if d.len() != 3 || t.len() != 3 || o.len() != 2 || d.iter().chain(&t).chain(&o).any(|v| *v < 0) {
            return Err(bad());
        }
        let ts = CivilTimestamp {
            year: i32::try_from(d[0]).map_err(|_| bad())?,
            month: u8::try_from(d[1]).map_err(|_| bad())?,
            day: u8::try_from(d[2]).map_err(|_| bad())?,
            hour: u8::try_from(t[0]).map_err(|_| bad())?,
            minute: u8::try_from(t[1]).map_err(|_| bad())?,
            second: u8::try_from(t[2]).map_err(|_| bad())?,
            utc_offset_minutes: sign * i32::try_from(o[0] * 60 + o[1]).map_err(|_| bad())?,
        };
        ts.validate()?;
        Ok(ts)
    }
}

impl Serialize for CivilTimestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CivilTimestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
