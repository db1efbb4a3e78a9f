//! Deterministic prompt rendering from versioned plain-text templates.
//!
//! Template format:
//!
//! ```text
//! # comment (only before the first directive)
//! @version context-v1
//! @section Data Introduction
//! text with {{placeholder}} slots
//! @section Feature Explanation
//! ...
//! ```
//!
//! A rendered prompt is the section bodies joined by one blank line, ending in a newline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::EnvironmentAnnotation;
use crate::audio_features::AudioFeatureVector;
use crate::geoloc::StructuredAddress;
use crate::imu_features::{ImuFeatureVector, BLOCK_LEN};
use crate::ingest::{CivilTimestamp, ImuSensor, PhysioSnapshot};
use crate::logbook::ActivityLogEntry;

pub const CONTEXT_SECTIONS: [&str; 5] = [
    "Data Introduction",
    "Feature Explanation",
    "Task Explanation",
    "Specific Feature Vectors",
    "Output Format",
];

pub const DEFAULT_CONTEXT_TEMPLATE: &str = "context-v1";
pub const DEFAULT_SUMMARY_TEMPLATE: &str = "summary-v1";

const BUILTIN_TEMPLATES: [(&str, &str); 4] = [
    ("context-v1", include_str!("../templates/context-v1.txt")),
    ("naive-v1", include_str!("../templates/naive-v1.txt")),
    ("freeform-v1", include_str!("../templates/freeform-v1.txt")),
    ("summary-v1", include_str!("../templates/summary-v1.txt")),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("context bundle has no IMU features")]
    MissingImu,
    #[error("no log entries to summarize")]
    EmptyEntries,
    #[error("entry {index} is not later than the entry before it")]
    Unordered { index: usize },
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("template: {0}")]
    Template(String),
    #[error("feature section: {0}")]
    FeatureParse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub template_version: String,
    pub sections: Vec<(String, String)>,
    pub rendered: String,
}

impl Prompt {
    pub fn section_names(&self) -> Vec<&str> {
        self.sections.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn section(&self, name: &str) -> Option<&str> {
        self.sections.iter().find(|(n, _)| n == name).map(|(_, t)| t.as_str())
    }

    /// Wraps free text (e.g. a prompt produced elsewhere) as a single-section prompt.
    pub fn raw(text: impl Into<String>) -> Self {
        let text = text.into();
        Prompt {
            template_version: "raw".into(),
            sections: vec![("Raw".into(), text.clone())],
            rendered: text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub version: String,
    pub sections: Vec<(String, String)>,
}

impl Template {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut version = None;
        let mut sections: Vec<(String, Vec<&str>)> = Vec::new();
        for line in text.lines() {
            if let Some(v) = line.strip_prefix("@version ") {
                version = Some(v.trim().to_string());
            } else if let Some(name) = line.strip_prefix("@section ") {
                sections.push((name.trim().to_string(), Vec::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                body.push(line);
            } else if !(line.starts_with('#') || line.trim().is_empty()) {
                return Err(PromptError::Template(format!("text before first @section: {line:?}")));
            }
        }
        let version = version.ok_or_else(|| PromptError::Template("missing @version".into()))?;
        if sections.is_empty() {
            return Err(PromptError::Template("template has no sections".into()));
        }
        Ok(Template {
            version,
            sections: sections
                .into_iter()
                .map(|(n, body)| (n, body.join("\n").trim_end().to_string()))
                .collect(),
        })
    }

    pub fn builtin(version: &str) -> Option<Self> {
        BUILTIN_TEMPLATES
            .iter()
            .find(|(v, _)| *v == version)
            .map(|(_, text)| Template::parse(text).expect("built-in templates parse"))
    }

    pub fn builtin_versions() -> Vec<&'static str> {
        BUILTIN_TEMPLATES.iter().map(|(v, _)| *v).collect()
    }

    /// A built-in version name, or a path to a template file.
    pub fn resolve(name: &str) -> Result<Self, PromptError> {
        if let Some(t) = Template::builtin(name) {
            return Ok(t);
        }
        let path = Path::new(name);
        if path.is_file() {
            let text = std::fs::read_to_string(path).map_err(|e| PromptError::Template(format!("{name}: {e}")))?;
            return Template::parse(&text);
        }
        Err(PromptError::UnknownTemplate(name.into()))
    }

    pub fn render(&self, values: &BTreeMap<&str, String>) -> Result<Prompt, PromptError> {
        let sections = self
            .sections
            .iter()
            .map(|(name, body)| Ok((name.clone(), fill(body, values)?)))
            .collect::<Result<Vec<_>, PromptError>>()?;
        let mut rendered = sections
            .iter()
            .map(|(_, t)| t.as_str())
            .collect::<Vec<_>>()
            .join("\n\n");
        rendered.push('\n');
        Ok(Prompt {
            template_version: self.version.clone(),
            sections,
            rendered,
        })
    }

    pub fn is_structured_context(&self) -> bool {
        self.sections.iter().map(|(n, _)| n.as_str()).eq(CONTEXT_SECTIONS)
    }
}

fn fill(body: &str, values: &BTreeMap<&str, String>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(body.len());
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| PromptError::Template("unterminated {{ placeholder".into()))?;
        let key = after[..end].trim();
        let value = values
            .get(key)
            .ok_or_else(|| PromptError::Template(format!("no value for placeholder {{{{{key}}}}}")))?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Everything the context prompt needs for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextBundle {
    pub civil_time: CivilTimestamp,
    pub address: StructuredAddress,
    pub imu: ImuFeatureVector,
    pub audio: Option<AudioFeatureVector>,
    pub environment: EnvironmentAnnotation,
    pub physio: Option<PhysioSnapshot>,
    pub window_s: f64,
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn vector_line(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 10 + 2);
    s.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        let _ = write!(s, "{v:.4}");
    }
    s.push(']');
    s
}

pub fn render_feature_vectors(imu: &ImuFeatureVector, audio: Option<&AudioFeatureVector>) -> String {
    let mut lines: Vec<String> = ImuSensor::ALL
        .iter()
        .map(|s| match imu.block(*s) {
            Some(b) => format!("imu.{}: {}", s.as_str(), vector_line(&b.to_vec())),
            None => format!("imu.{}: absent", s.as_str()),
        })
        .collect();
    lines.push(match audio {
        Some(a) => format!("audio: {}", vector_line(&a.values)),
        None => "audio: absent".to_string(),
    });
    lines.join("\n")
}

pub fn describe_environment(env: &EnvironmentAnnotation) -> String {
    let unknown = || "unknown".to_string();
    format!(
        "light {}; sound {}; temperature {}; altitude {}",
        env.light.map_or_else(unknown, |l| l.to_string()),
        env.sound.map_or_else(unknown, |s| s.to_string()),
        env.temperature.map_or_else(unknown, |t| t.to_string()),
        env.altitude_m.map_or_else(unknown, |a| format!("{} m", fmt4(a))),
    )
}

pub fn describe_physio(p: Option<&PhysioSnapshot>) -> String {
    let Some(p) = p else {
        return "absent".into();
    };
    let parts: Vec<String> = [
        ("heart rate", p.hr_bpm, "bpm"),
        ("inter-beat interval", p.ibi_ms, "ms"),
        ("electrodermal activity", p.eda_microsiemens, "uS"),
        ("body temperature", p.temp_celsius, "C"),
        ("SpO2", p.spo2_percent, "%"),
    ]
    .iter()
    .filter_map(|(name, v, unit)| v.map(|v| format!("{name} {} {unit}", fmt4(v))))
    .collect();
    parts.join("; ")
}

pub fn build_context_prompt(bundle: &ContextBundle, template_version: &str) -> Result<Prompt, PromptError> {
    let template = Template::resolve(template_version)?;
    build_context_prompt_with(bundle, &template)
}

pub fn build_context_prompt_with(bundle: &ContextBundle, template: &Template) -> Result<Prompt, PromptError> {
    if bundle.imu.blocks.is_empty() {
        return Err(PromptError::MissingImu);
    }
    let mut values = BTreeMap::new();
    values.insert("datetime", bundle.civil_time.to_string());
    values.insert("location", bundle.address.to_string());
    values.insert("environment", describe_environment(&bundle.environment));
    values.insert("physiology", describe_physio(bundle.physio.as_ref()));
    values.insert(
        "feature_vectors",
        render_feature_vectors(&bundle.imu, bundle.audio.as_ref()),
    );
    values.insert("template_version", template.version.clone());
    values.insert("window_s", format!("{}", bundle.window_s));
    template.render(&values)
}

pub fn build_summary_prompt(entries: &[ActivityLogEntry], window_h: f64) -> Result<Prompt, PromptError> {
    build_summary_prompt_with(
        entries,
        window_h,
        &Template::builtin(DEFAULT_SUMMARY_TEMPLATE).expect("summary template is built in"),
    )
}

pub fn build_summary_prompt_with(
    entries: &[ActivityLogEntry],
    window_h: f64,
    template: &Template,
) -> Result<Prompt, PromptError> {
    if entries.is_empty() {
        return Err(PromptError::EmptyEntries);
    }
    if let Some(index) = (1..entries.len())
        .find(|i| entries[*i].civil_time.to_unix_seconds() <= entries[i - 1].civil_time.to_unix_seconds())
    {
        return Err(PromptError::Unordered { index });
    }
    let lines: Vec<String> = entries.iter().map(ActivityLogEntry::to_json_line).collect();
    let mut values = BTreeMap::new();
    values.insert("window_h", format!("{window_h}"));
    values.insert("entry_count", entries.len().to_string());
    values.insert("entries", lines.join("\n"));
    values.insert("template_version", template.version.clone());
    template.render(&values)
}

/// Feature vectors recovered from a rendered prompt.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedFeatures {
    pub imu: BTreeMap<ImuSensor, Vec<f64>>,
    pub audio: Option<Vec<f64>>,
}

fn parse_vector(text: &str) -> Result<Vec<f64>, PromptError> {
    let inner = text
        .trim()
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| PromptError::FeatureParse(format!("not a bracketed list: {text:?}")))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| PromptError::FeatureParse(format!("bad number {v:?}")))
        })
        .collect()
}

/// Reads the first contiguous run of `imu.*` / `audio` lines in a rendered prompt.
pub fn parse_feature_vectors(rendered: &str) -> Result<ParsedFeatures, PromptError> {
    let is_feature_line = |l: &&str| l.starts_with("imu.") || l.starts_with("audio:");
    let lines = rendered
        .lines()
        .skip_while(|l| !is_feature_line(l))
        .take_while(is_feature_line);
    let mut parsed = ParsedFeatures::default();
    let mut seen_any = false;
    for line in lines {
        let Some((key, value)) = line.split_once(':') else {
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        let sensor = match key {
            "imu.accel" => Some(ImuSensor::Accel),
            "imu.gyro" => Some(ImuSensor::Gyro),
            "imu.mag" => Some(ImuSensor::Mag),
            "audio" => None,
            other => return Err(PromptError::FeatureParse(format!("unknown feature line {other:?}"))),
        };
        seen_any = true;
        if value == "absent" {
            continue;
        }
        let v = parse_vector(value)?;
        match sensor {
            Some(s) => {
                if v.len() != BLOCK_LEN {
                    return Err(PromptError::FeatureParse(format!(
                        "imu.{} has {} values, expected {BLOCK_LEN}",
                        s.as_str(),
                        v.len()
                    )));
                }
                parsed.imu.insert(s, v);
            }
            None => parsed.audio = Some(v),
        }
    }
    if !seen_any {
        return Err(PromptError::FeatureParse("feature section is empty".into()));
    }
    Ok(parsed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imu_features::ImuFeatureBlock;

    fn bundle(audio: bool) -> ContextBundle {
        let block = ImuFeatureBlock::from_slice(&(0..26).map(|i| i as f64 * 0.123456).collect::<Vec<_>>()).unwrap();
        ContextBundle {
            civil_time: crate::ingest::to_civil_time(1_700_000_000.0, 0).unwrap(),
            address: StructuredAddress {
                city: "Hanover".into(),
                country: "US".into(),
                place_type: "library".into(),
                ..Default::default()
            },
            imu: ImuFeatureVector {
                blocks: vec![(ImuSensor::Accel, block)],
            },
            audio: audio.then(|| AudioFeatureVector {
                values: vec![-1.5; 120],
            }),
            environment: EnvironmentAnnotation::default(),
            physio: None,
            window_s: 120.0,
        }
    }

    #[test]
    fn context_prompt_shape() {
        let p = build_context_prompt(&bundle(true), DEFAULT_CONTEXT_TEMPLATE).unwrap();
        assert!(p.rendered.starts_with("You're an expert in signal analysis"));
        assert_eq!(p.section_names(), CONTEXT_SECTIONS);
        assert!(p
            .rendered
            .contains("Date-time:...; location information:...; activity category:...; scenario:..."));
        assert!(p.rendered.contains("Template: context-v1"));
        let again = build_context_prompt(&bundle(true), DEFAULT_CONTEXT_TEMPLATE).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn missing_audio_is_marked() {
        let p = build_context_prompt(&bundle(false), DEFAULT_CONTEXT_TEMPLATE).unwrap();
        let section = p.section("Specific Feature Vectors").unwrap();
        assert!(section.contains("imu.accel: ["));
        assert!(section.contains("audio: absent"));
    }

    #[test]
    fn missing_imu_rejected() {
        let mut b = bundle(false);
        b.imu.blocks.clear();
        assert_eq!(
            build_context_prompt(&b, DEFAULT_CONTEXT_TEMPLATE),
            Err(PromptError::MissingImu)
        );
    }

    #[test]
    fn features_round_trip_at_four_decimals() {
        let b = bundle(true);
        let p = build_context_prompt(&b, DEFAULT_CONTEXT_TEMPLATE).unwrap();
        let parsed = parse_feature_vectors(&p.rendered).unwrap();
        let accel = &parsed.imu[&ImuSensor::Accel];
        for (a, e) in accel.iter().zip(b.imu.values()) {
            assert!((a - e).abs() <= 5e-5 + 1e-12);
        }
        assert_eq!(parsed.audio.unwrap().len(), 120);
        assert!(!parsed.imu.contains_key(&ImuSensor::Gyro));
    }

    #[test]
    fn feature_parse_errors() {
        assert!(parse_feature_vectors("nothing here").is_err());
        let bad = "Specific Feature Vectors:\nimu.accel: [1.0, x]\n";
        assert!(matches!(parse_feature_vectors(bad), Err(PromptError::FeatureParse(_))));
        let short = "Specific Feature Vectors:\nimu.accel: [1.0, 2.0]\n";
        assert!(parse_feature_vectors(short).is_err());
    }

    #[test]
    fn template_parsing() {
        let t = Template::parse("# c\n@version t1\n@section A\nhello {{name}}\n\n@section B\nbye\n").unwrap();
        assert_eq!(t.version, "t1");
        let mut values = BTreeMap::new();
        values.insert("name", "bob".to_string());
        let p = t.render(&values).unwrap();
        assert_eq!(p.rendered, "hello bob\n\nbye\n");
        assert!(t.render(&BTreeMap::new()).is_err());
        assert!(Template::parse("@section A\nx").is_err());
        assert!(Template::parse("stray\n@version v\n@section A\n").is_err());
        assert!(matches!(
            Template::resolve("nope-v9"),
            Err(PromptError::UnknownTemplate(_))
        ));
    }

    #[test]
    fn ablation_templates_render() {
        for v in ["naive-v1", "freeform-v1"] {
            let p = build_context_prompt(&bundle(true), v).unwrap();
            assert!(p.rendered.contains("imu.accel: ["), "{v}");
            assert!(!Template::builtin(v).unwrap().is_structured_context());
        }
        assert!(Template::builtin("context-v1").unwrap().is_structured_context());
    }
}
