use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown workload profile `{0}`")]
    UnknownProfile(String),

    #[error("invalid rate table: {0}")]
    InvalidRateTable(String),

    #[error("invalid workload profile: {0}")]
    InvalidProfile(String),

    #[error("invalid cluster: {0}")]
    InvalidCluster(String),

    #[error("invalid scheduler config: {0}")]
    InvalidSchedulerConfig(String),

    #[error("invalid power model: {0}")]
    InvalidPowerModel(String),

    #[error("protocol violation by node {node}: {reason}")]
    ProtocolViolation { node: String, reason: String },

    #[error("accounting mismatch: {0}")]
    Accounting(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sweep cell (batch {batch}, csds {csds}) failed: {source}")]
    SweepCell {
        batch: u64,
        csds: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("malformed wire message `{line}`: {reason}")]
    Wire { line: String, reason: String },

    #[error("harness: {0}")]
    Harness(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user-supplied configuration.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::UnknownProfile(_)
                | Error::InvalidRateTable(_)
                | Error::InvalidProfile(_)
                | Error::InvalidCluster(_)
                | Error::InvalidSchedulerConfig(_)
                | Error::InvalidPowerModel(_)
                | Error::Config { .. }
                | Error::Json(_)
        ) || matches!(self, Error::SweepCell { source, .. } if source.is_config())
    }
}
