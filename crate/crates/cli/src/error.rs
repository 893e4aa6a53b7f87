use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<mixflow::Error> for CliError {
    fn from(e: mixflow::Error) -> Self {
        use mixflow::Error as E;
        match e {
            E::InvalidArgument(_) => CliError::Config(e.to_string()),
            E::NumericalDivergence { .. } | E::OptimizationFailure { .. } | E::DegenerateInput(_) => {
                CliError::Numerical(e.to_string())
            }
            E::Io(_) | E::DataFormat { .. } => CliError::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
