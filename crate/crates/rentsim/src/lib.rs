//! Runner for the rentsim residence-choice simulator: run configs, the
//! load → synthesize → optimize → allocate → diff pipeline, persisted run
//! artifacts, and the HTTP service behind the scenario workbench.

pub mod config;
pub mod pipeline;
pub mod service;

use rentsim_core::scenario::FieldError;
use thiserror::Error;

pub use config::RunConfig;
pub use pipeline::{execute, RunArtifact};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: rentsim_core::Error,
    },
    #[error("scenario: {}", join_fields(.0))]
    Scenario(Vec<FieldError>),
    #[error("output {path}: {source}")]
    Output {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn join_fields(errs: &[FieldError]) -> String {
    errs.iter()
        .map(|e| format!("{}: {}", e.field, e.message))
        .collect::<Vec<_>>()
        .join("; ")
}

impl RunError {
    /// Tags a core error with the pipeline stage it came from.
    pub fn at(stage: &'static str) -> impl Fn(rentsim_core::Error) -> RunError {
        move |source| RunError::Stage { stage, source }
    }

    pub(crate) fn output(path: &std::path::Path) -> impl Fn(std::io::Error) -> RunError + '_ {
        move |source| RunError::Output {
            path: path.to_path_buf(),
            source,
        }
    }
}
