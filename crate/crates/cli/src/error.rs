use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("solver: {0}")]
    Solver(tls_anneal::Error),

    #[error("{0}")]
    Truncation(tls_anneal::Error),

    #[error("{failed} of {total} sweep points failed")]
    PartialSweep { failed: usize, total: usize },

    #[error("{0} instance(s) predicted an interior optimum that was not observed")]
    Disagreement(usize),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Solver(_) | Self::Io(_) | Self::Csv(_) => 3,
            Self::PartialSweep { .. } => 4,
            Self::Disagreement(_) => 5,
            Self::Truncation(_) => 6,
        }
    }
}

impl From<tls_anneal::Error> for CliError {
    fn from(e: tls_anneal::Error) -> Self {
        match e {
            tls_anneal::Error::Truncation { .. } => Self::Truncation(e),
            other => Self::Solver(other),
        }
    }
}
