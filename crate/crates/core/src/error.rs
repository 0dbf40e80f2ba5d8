use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid problem or mesh configuration; the message names the violated constraint.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("field and weights belong to different meshes")]
    MeshMismatch,

    #[error("zero field: the fibering map is undefined for u = 0")]
    ZeroField,

    #[error("branch not applicable: {0}")]
    BranchNotApplicable(String),

    #[error("no {branch} projection for a field in case {case}")]
    Projection { branch: String, case: String },

    #[error("estimation failure: {0}")]
    Estimation(String),

    #[error("expression error at column {column}: {message}")]
    Expression { column: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
