use crate::tensor::TensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Contract(String),
    #[error("{0}")]
    Range(String),
    #[error("{0}")]
    Lookup(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error families, used for CLI exit codes and one-line reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Contract,
    Numerical,
    Io,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Data => "data",
            Category::Contract => "contract",
            Category::Numerical => "numerical",
            Category::Io => "io",
        }
    }
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::Config(_) | Error::Json(_) => Category::Config,
            Error::Data(_) | Error::Range(_) | Error::Lookup(_) => Category::Data,
            Error::Contract(_) => Category::Contract,
            Error::Divergence(_) => Category::Numerical,
            Error::Tensor(TensorError::NonFinite { .. }) => Category::Numerical,
            Error::Tensor(_) => Category::Contract,
            Error::Io(_) => Category::Io,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
