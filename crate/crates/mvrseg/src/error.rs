use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty word")]
    EmptyWord,

    #[error("target vocabulary size {target} is below character inventory size {inventory}")]
    VocabTooSmall { target: usize, inventory: usize },

    #[error("lattice too large: more than {cap} paths")]
    LatticeTooLarge { cap: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty token sequence after truncation")]
    EmptyAfterTruncation,

    #[error("no words shared by both views after truncation")]
    NoSharedWords,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("prediction files misaligned at index {index}: {left:?} vs {right:?}")]
    MisalignedPredictions {
        index: usize,
        left: String,
        right: String,
    },

    #[error("unknown group label {0:?}")]
    UnknownGroup(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
