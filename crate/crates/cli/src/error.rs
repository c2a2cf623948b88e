use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    /// A pipeline stage failed on its input.
    #[error("{stage}: {source}")]
    Data {
        stage: &'static str,
        #[source]
        source: nnim::Error,
    },

    #[error("{stage}: {message}")]
    Io { stage: &'static str, message: String },

    #[error("did not converge: {0}")]
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data { .. } | CliError::Io { .. } => 3,
            CliError::NotConverged(_) => 4,
        }
    }
}

/// Tags library errors with the stage that produced them. Parameter errors
/// are configuration mistakes, everything else is about the data.
pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> Stage<T> for nnim::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| match source {
            nnim::Error::InvalidParameter(m) => CliError::Config(format!("{stage}: {m}")),
            source => CliError::Data { stage, source },
        })
    }
}

impl<T> Stage<T> for std::io::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Io {
            stage,
            message: e.to_string(),
        })
    }
}
