use thiserror::Error;

use crate::barriers::ConstraintTag;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("barrier {0:?} needs a neighbor but none was supplied")]
    MissingNeighbor(ConstraintTag),

    #[error("unknown vehicle identity {0}")]
    UnknownId(u32),

    #[error("scenario error at `{path}`: {message}")]
    Scenario { path: String, message: String },

    #[error("unknown bundled scenario `{0}`")]
    UnknownScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
