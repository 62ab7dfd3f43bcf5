use ma_conic::{ProgramError, Status};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?}: cannot parse {value:?}")]
    Value { key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DomainError {
    #[error("position {x} outside the moving region [0, {a}]")]
    OutsideRegion { x: f64, a: f64 },
    #[error("zero channel vector")]
    ZeroChannel,
    #[error("expected {expected} paths, found {found}")]
    PathCount { expected: usize, found: usize },
}

#[derive(Debug, thiserror::Error)]
pub enum OptError {
    #[error("subproblem at iteration {iteration} ended with status {status:?}")]
    Subproblem { iteration: usize, status: Status },
    #[error("malformed subproblem: {0}")]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}
