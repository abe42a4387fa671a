use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("optimization failure: {0}")]
    OptimizationFailure(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("{stage} failed at index {index}: {source}")]
    Stage {
        stage: &'static str,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{method} with seed {seed}, {stage}: {source}")]
    Trial {
        method: String,
        seed: u64,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure(msg.into())
    }

    pub(crate) fn at(self, stage: &'static str, index: usize) -> Self {
        Error::Stage {
            stage,
            index,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
