use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Shape(String),

    #[error("non-finite value at element {index}")]
    NonFinite { index: usize },

    #[error("graph error at node `{node}`: {message}")]
    Graph { node: String, message: String },

    #[error("graph contains a cycle through nodes {}", .nodes.join(", "))]
    Cycle { nodes: Vec<String> },

    #[error("missing weight blob for node `{node}`: {}", .path.display())]
    MissingBlob { node: String, path: PathBuf },

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("invalid value for `{field}`: {message}")]
    InvalidParam { field: String, message: String },

    #[error("unknown {kind} `{id}`")]
    NotFound { kind: &'static str, id: String },

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("models are not comparable: {0}")]
    Incomparable(String),

    #[error("logit vector has zero standard deviation")]
    ZeroDeviation,

    #[error("session is closed")]
    SessionClosed,

    #[error("io error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Codec(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The offending parameter for invalid-value errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::InvalidParam { field, .. } => Some(field),
            Error::Context { source, .. } => source.field(),
            _ => None,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParam {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn graph(node: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Graph {
            node: node.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }
}
