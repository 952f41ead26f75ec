//! Mask-adherence analytics over face/mask detection records.
//!
//! The crate turns per-image detection records (68-point landmarks, mask
//! labels, segmentation bitmaps) into fit scores, daily adherence
//! aggregates and a battery of statistical tests, and renders the results
//! as report tables.

pub mod aggregate;
pub mod cli;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod ingest;
pub mod par;
pub mod pnm;
pub mod records;
pub mod report;
pub mod stats;
pub mod studies;
pub mod synth;

pub use error::{Error, Result};
