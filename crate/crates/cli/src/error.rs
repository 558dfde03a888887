use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown experiment `{name}` (known: {known})")]
    UnknownExperiment { name: String, known: String },
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read {path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("plot data: {0}")]
    Plot(String),
    #[error(transparent)]
    Core(#[from] bbmx_core::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;
