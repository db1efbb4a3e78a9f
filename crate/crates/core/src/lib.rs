//! Sensor streams to structured, queryable activity logs.
//!
//! The pipeline aligns multi-modal sensor records into windows ([`ingest`]),
//! labels the surroundings ([`annotate`]), resolves places ([`geoloc`]),
//! extracts motion and audio features ([`imu_features`], [`audio_features`]),
//! renders prompts ([`promptgen`]), queries a text-generation backend
//! ([`inference`]) and keeps a JSONL log with summaries ([`logbook`]).
//! [`synth`] generates labelled streams and [`eval`] scores predictions.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annotate;
pub mod audio_features;
pub mod dsp;
pub mod eval;
pub mod geoloc;
pub mod imu_features;
pub mod inference;
pub mod ingest;
pub mod logbook;
pub mod pipeline;
pub mod promptgen;
pub mod synth;
