use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A model or noise parameter lies outside its admissible domain.
    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// A grid, histogram or configuration could not be built from its inputs.
    #[error("invalid construction: {0}")]
    Construction(String),

    /// A numerical routine produced a non-finite or inadmissible value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The generalized second moment vanished: the noise does not overlap the
    /// informative region of the data.
    #[error("degenerate moments: I = {0:e} (noise has no overlap with the data)")]
    Degenerate(f64),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
