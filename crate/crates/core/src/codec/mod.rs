//! Temperature softmax, top-k logits selection and the STGT soft-target
//! stream format.

mod posterior;
mod stgt;

use thiserror::Error;

pub use posterior::{
    argmax as posterior_argmax,
    default_floor_constant, select_topk, softmax_t, suppressed_mass_bound, topk_posterior,
    topk_posterior_c, CodecParams, DenseDistribution, LogitVector, SparseFrame,
};
pub use stgt::{
    decode_stream, encode_stream, SoftTargetStream, SoftTargetUtterance, STGT_MAGIC, STGT_VERSION,
};

#[derive(Error, Debug)]
pub enum CodecError {
    #[error("logit vector is empty")]
    Empty,
    #[error("non-finite logit at index {0}")]
    NonFinite(usize),
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("k = {k} outside [1, {n}]")]
    BadK { k: usize, n: usize },
    #[error("floor constant {c} exceeds the smallest selected logit {min_selected}")]
    FloorTooHigh { c: f64, min_selected: f64 },
    #[error("class count {0} does not fit the 16-bit class index")]
    ClassCountOverflow(usize),
    #[error("utterance {utterance}: frame {frame} has {found} classes, stream has {expected}")]
    ClassCountMismatch {
        utterance: String,
        frame: usize,
        expected: usize,
        found: usize,
    },
    #[error("bad magic {0:?}, expected \"STGT\"")]
    BadMagic([u8; 4]),
    #[error("unsupported STGT version {0}")]
    UnsupportedVersion(u16),
    #[error("stream truncated in utterance {utterance}{}", frame.map(|f| format!(" at frame {f}")).unwrap_or_default())]
    Truncated {
        utterance: String,
        frame: Option<usize>,
    },
    #[error("utterance {utterance}, frame {frame}: entries not sorted by descending logit")]
    Unsorted { utterance: String, frame: usize },
    #[error("utterance {utterance}, frame {frame}: duplicate class index {index}")]
    DuplicateIndex {
        utterance: String,
        frame: usize,
        index: u16,
    },
    #[error("utterance {utterance}, frame {frame}: class index {index} >= {n_classes}")]
    IndexOutOfRange {
        utterance: String,
        frame: usize,
        index: u16,
        n_classes: u32,
    },
    #[error("utterance id is not valid UTF-8: {0}")]
    BadId(String),
    #[error("{0} trailing bytes after the last utterance")]
    TrailingBytes(usize),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
