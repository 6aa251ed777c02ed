use std::fmt::Display;
use std::path::Path;

use autobuild::archspace::ArchError;
use autobuild::bench::BenchError;
use autobuild::builder::BuildError;
use autobuild::evonas::EvoError;
use autobuild::predictor::PredictorError;
use autobuild::scorer::ScoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
            CliError::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub fn io(path: &Path, err: impl Display) -> Self {
        CliError::Io { path: path.display().to_string(), msg: err.to_string() }
    }

    pub fn invalid(msg: impl Display) -> Self {
        CliError::Validation(msg.to_string())
    }

    /// `error: kind=<kind> msg=<message>` on one line.
    pub fn line(&self) -> String {
        let msg = self.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error: kind={} msg={msg}", self.kind())
    }
}

macro_rules! from_core {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Validation(e.to_string())
            }
        }
    )*};
}

from_core!(BenchError, BuildError, EvoError);

impl From<ArchError> for CliError {
    fn from(e: ArchError) -> Self {
        match e {
            ArchError::Io(io) => CliError::Io { path: "<stream>".into(), msg: io.to_string() },
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PredictorError> for CliError {
    fn from(e: PredictorError) -> Self {
        match e {
            PredictorError::Io(io) => CliError::Io { path: "<stream>".into(), msg: io.to_string() },
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ScoreError> for CliError {
    fn from(e: ScoreError) -> Self {
        match e {
            ScoreError::Io(io) => CliError::Io { path: "<stream>".into(), msg: io.to_string() },
            ScoreError::Arch(a) => a.into(),
            ScoreError::Predictor(p) => p.into(),
            e => CliError::Validation(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
