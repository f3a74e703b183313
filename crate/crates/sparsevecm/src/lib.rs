//! Pipeline, file formats and scenario service around `sparsevecm-core`.

pub mod config;
pub mod error;
pub mod grid;
pub mod io;
pub mod pipeline;
pub mod service;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{AppError, AppResult};
pub use pipeline::{run_pipeline, Manifest, ModelBundle, Stage};
