use thiserror::Error;

/// Failure of a CLI command, carrying its exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("check failure: {0}")]
    Check(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn numerical(e: impl std::fmt::Display) -> Self {
        CliError::Numerical(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Check("x".into()).exit_code(), 1);
        assert_eq!(CliError::config("x").exit_code(), 2);
        assert_eq!(CliError::numerical("x").exit_code(), 3);
    }
}
