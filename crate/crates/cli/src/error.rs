use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] osnr_core::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("unknown preset `{0}` (available: desk, paper)")]
    UnknownPreset(String),
    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("scenario {scenario}: {source}")]
    Scenario {
        scenario: String,
        source: osnr_core::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
