use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed layer path: {0}")]
    MalformedPath(String),

    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("malformed bounding box `{0}`")]
    MalformedBbox(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("unsupported encoding `{0}`, only UTF-8 input is accepted")]
    UnsupportedEncoding(String),

    #[error("malformed XML at offset {offset}: {message}")]
    XmlMalformed { offset: u64, message: String },

    #[error("malformed JSON at offset {offset}: {message}")]
    JsonMalformed { offset: u64, message: String },

    #[error("duplicate chunk id {0}")]
    DuplicateId(String),

    #[error("unknown chunk id {0}")]
    UnknownId(String),

    #[error("chunk {0} not found")]
    NotFound(String),

    #[error("incompatible parents: {0}")]
    IncompatibleParents(String),

    #[error("corrupt data: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Stable machine-readable code, used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MalformedPath(_) => "MALFORMED_PATH",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::MalformedBbox(_) => "MALFORMED_BBOX",
            Error::UnsupportedFormat(_) => "UNSUPPORTED_FORMAT",
            Error::UnsupportedEncoding(_) => "UNSUPPORTED_ENCODING",
            Error::XmlMalformed { .. } => "XML_MALFORMED",
            Error::JsonMalformed { .. } => "JSON_MALFORMED",
            Error::DuplicateId(_) => "DUPLICATE_ID",
            Error::UnknownId(_) => "UNKNOWN_ID",
            Error::NotFound(_) => "NOT_FOUND",
            Error::IncompatibleParents(_) => "INCOMPATIBLE_PARENTS",
            Error::Corrupt(_) => "CORRUPT",
            Error::Io(_) => "IO_ERROR",
        }
    }

    /// Byte offset into the offending input, when the error carries one.
    pub fn offset(&self) -> Option<u64> {
        match self {
            Error::Parse { offset, .. } => Some(*offset as u64),
            Error::XmlMalformed { offset, .. } | Error::JsonMalformed { offset, .. } => {
                Some(*offset)
            }
            _ => None,
        }
    }

    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }
}
