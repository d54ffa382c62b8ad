//! Command-line companion to `cbmr-core`: file formats (NIfTI-1 volumes,
//! foci tables, TOML/JSON run configs, JSON artifacts, SVG plots), a
//! thread-parallel calibration driver, and the seven analysis commands the
//! `cbmr` binary dispatches to.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod foci;
pub mod nifti;
pub mod parallel;
pub mod pipeline;
pub mod svg;
