use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("invalid scenario tree:\n{0}")]
    InvalidTree(String),

    #[error("capacity exceeded: more than {limit} {what}")]
    Capacity { what: &'static str, limit: usize },

    #[error("dimension mismatch at node {node}: {detail}")]
    Dimension { node: usize, detail: String },

    #[error("missing big-M entry for node {node}, distribution {dist}")]
    MissingBigM { node: usize, dist: usize },

    #[error("counting convention not applicable: {0}")]
    Convention(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("model too large for the built-in engine ({detail}); export it with `mspeu export --format lp` and use an external solver (MSPEU_SOLVER=external:<command>)")]
    TooLarge { detail: String },

    #[error("numerical failure in simplex: {0}")]
    Numerical(String),

    #[error("relaxation unbounded for node {node}, distribution {dist}; add finite bounds to the variable domains")]
    UnboundedRelaxation { node: usize, dist: usize },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("external solver failed: {0}")]
    External(String),

    #[error("LP format error at line {line}: {msg}")]
    LpParse { line: usize, msg: String },

    #[error("schema error at {pointer}: {msg}")]
    Schema { pointer: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Error {
        Error::Invalid(msg.into())
    }

    pub(crate) fn schema(pointer: impl Into<String>, msg: impl Into<String>) -> Error {
        Error::Schema { pointer: pointer.into(), msg: msg.into() }
    }
}

impl From<serde_path_to_error::Error<serde_json::Error>> for Error {
    /// Keeps the location of the failure as a JSON pointer.
    fn from(e: serde_path_to_error::Error<serde_json::Error>) -> Error {
        use serde_path_to_error::Segment;
        let mut pointer = String::new();
        for seg in e.path().iter() {
            pointer.push('/');
            match seg {
                Segment::Seq { index } => pointer.push_str(&index.to_string()),
                Segment::Map { key } => pointer.push_str(&key.replace('~', "~0").replace('/', "~1")),
                Segment::Enum { variant } => pointer.push_str(variant),
                Segment::Unknown => pointer.push('?'),
            }
        }
        if pointer.is_empty() {
            pointer.push('/');
        }
        Error::Schema { pointer, msg: e.into_inner().to_string() }
    }
}

/// Parses JSON text into `T`, reporting failures with a JSON pointer.
pub(crate) fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(de)?;
    Ok(value)
}
