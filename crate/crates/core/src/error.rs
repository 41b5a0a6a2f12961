use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CrmError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no embeddable tokens")]
    NoEmbeddableTokens,

    #[error("undefined cosine: zero vector")]
    UndefinedCosine,

    #[error("zero variance")]
    ZeroVariance,

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("representation kind mismatch")]
    KindMismatch,

    #[error("phrase unseen in corpus: {0}")]
    PhraseUnseen(String),

    #[error("no perturbations available for: {0}")]
    NoPerturbations(String),

    #[error("empty scenario representation")]
    EmptyScenario,

    #[error("embedding mode requires an embedding lexicon")]
    MissingLexicon,

    #[error("empty dataset")]
    EmptyDataset,
}

impl CrmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CrmError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CrmError>;
