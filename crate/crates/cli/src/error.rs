use pbdw_core::PbdwError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] PbdwError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed csv {path}: {msg}")]
    Csv { path: String, msg: String },
    #[error("{failed} of {total} criteria failed")]
    Criteria { failed: usize, total: usize },
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::from(PbdwError::Unisolvency { cond: 1e13 }).exit_code(), 3);
        assert_eq!(CliError::from(PbdwError::Identifiability { sigma_min: 0.0 }).exit_code(), 3);
        assert_eq!(CliError::from(PbdwError::Stability("s".into())).exit_code(), 3);
        assert_eq!(CliError::from(PbdwError::Argument("a".into())).exit_code(), 1);
        assert_eq!(CliError::Criteria { failed: 1, total: 11 }.exit_code(), 1);
    }
}
