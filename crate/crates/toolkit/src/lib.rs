//! File formats, pipelines and the `irf` command line on top of `irf-core`.
//!
//! - [`pnm`]: PGM/PPM decoding and encoding.
//! - [`config`]: validated pipeline parameters.
//! - [`documents`]: versioned JSON model and report documents.
//! - [`pipeline`]: static and tracking runs.
//! - [`output`]: mask, box list, report and overlay files.
//! - [`synth`]: synthetic fixtures.

pub mod config;
pub mod documents;
pub mod error;
pub mod output;
pub mod pipeline;
pub mod pnm;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{Result, ToolkitError};
