//! Crate-wide error type.

use std::fmt;
use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Two adjacent layers, or a batch and the first layer, do not compose.
    Shape(String),
    /// Rejected configuration value.
    Config(String),
    /// Walsh row is already assigned to another class.
    RowTaken { row: usize },
    /// Class already holds a representation.
    ClassAssigned { class: usize },
    /// Class has no representation yet.
    Unassigned { class: usize },
    /// No available Walsh rows remain.
    RegistryExhausted,
    /// Dataset ingestion failure; `offset` is the byte offset of the problem.
    Data { offset: u64, message: String },
    /// A loss or gradient stopped being finite.
    NonFinite(String),
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::RowTaken { row } => write!(f, "walsh row {row} is already assigned"),
            Error::ClassAssigned { class } => {
                write!(f, "class {class} already has a representation")
            }
            Error::Unassigned { class } => write!(f, "class {class} has no representation"),
            Error::RegistryExhausted => write!(f, "no available walsh rows remain"),
            Error::Data { offset, message } => {
                write!(f, "data error at byte {offset}: {message}")
            }
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Error::Io(err)
    }
}
