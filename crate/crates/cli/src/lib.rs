//! Runner and benchmark harness for the demo applications.
//!
//! `parapat run <app>` launches a group of ranks, runs the application and
//! writes a [`report::RunReport`] as JSON. `parapat bench <app>` repeats the
//! run over a list of rank counts and tabulates speedup and efficiency.

pub mod app;
pub mod args;
pub mod launch;
pub mod report;

use std::path::Path;

use parapat_core::Error;

/// Exit status for a failed command: 2 for bad arguments, 1 otherwise.
pub fn exit_code(err: &CliError) -> i32 {
    match err {
        CliError::Usage(_) => 2,
        CliError::Run(e) if matches!(e.root(), Error::InvalidArgument(_)) => 2,
        _ => 1,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Run(Error::App(e.to_string())))?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").map_err(|source| CliError::Io {
            path: p.display().to_string(),
            source,
        }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
