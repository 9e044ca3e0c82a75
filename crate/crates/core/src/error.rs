use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular Patankar system: pivot {pivot:e} in column {column} (matrix {matrix:?})")]
    SingularSystem {
        column: usize,
        pivot: f64,
        matrix: Vec<f64>,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("state component {index} = {value:e} is not strictly positive")]
    NonPositiveState { index: usize, value: f64 },

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no closed-form stability function for `{0}`")]
    NotInCatalog(String),

    #[error("scheme `{0}` has no one-step map in this build")]
    Unimplemented(String),

    #[error("stability function has a pole near dt = {at}")]
    PoleEncountered { at: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("at grid point theta={theta}, epsilon={epsilon}: {source}")]
    GridPoint {
        theta: f64,
        epsilon: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("cannot parse scheme identifier `{0}`")]
    BadSchemeId(String),
}

pub type Result<T> = std::result::Result<T, Error>;
