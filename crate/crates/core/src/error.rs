use std::io;

use thiserror::Error;

use crate::model::OrderbookState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Zero total depth at the first limits.
    #[error("imbalance undefined: both first-limit queues are empty")]
    EmptyBook,

    #[error("invalid kernel input: {0}")]
    Kernel(String),

    #[error("layer {layer} holds {count} states, over the budget of {budget}")]
    StateBudget {
        layer: usize,
        count: usize,
        budget: usize,
    },

    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("policy has no control for {state} at layer {layer}")]
    MissingControl { layer: usize, state: OrderbookState },

    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Argument(_) | Error::Json(_) => 2,
            Error::StateBudget { .. } => 3,
            Error::Data(_) | Error::Csv(_) | Error::Io(_) => 4,
            _ => 1,
        }
    }
}
