//! Batch front-end for the `geoswarm` library.
//!
//! Exposes the named scenario pipelines behind the `geoswarm` binary:
//! configuration loading with a strict schema, deterministic artifact
//! output (CSV, JSON, SVG) and machine-checkable verdict summaries.

pub mod config;
pub mod csvout;
pub mod scenarios;
pub mod svg;
