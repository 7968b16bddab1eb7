//! Two-stage multi-view pose regression and the experiment runners behind
//! the `m2dl` command line.

mod config;
pub mod demo;
mod error;
pub mod pipeline;
pub mod report;

pub use config::{CsvSource, DataSource, PipelineConfig, TrainingConfig, Variant};
pub use error::{Error, Result};
pub use pipeline::{ablate, compare_activations, compare_losses, run_group, run_pipeline, FeatureCache, Features};
pub use report::{write_results_csv, EvalReport, RepeatResult};
