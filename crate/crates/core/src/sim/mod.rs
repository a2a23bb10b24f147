//! Parallel clean/noisy corpus simulation: image-method room responses,
//! convolution, SNR-controlled noise mixing and a synthetic labeled corpus.

mod convolve;
mod corpus;
mod mix;
mod room;

use thiserror::Error;

use crate::audio::AudioError;

pub use convolve::convolve;
pub use corpus::{
    class_voice, frame_count, frame_labels_for, generate_corpus, generate_noise_bank,
    generate_noisy_copy, read_labels, synthesize_noise, write_labels, Corpus, Framing, NoiseKind,
    NoiseSource, SimConfig, UtteranceMeta, UtteranceRecord, Voice,
};
pub use mix::{fit_length, measured_snr_db, mix_at_snr, snr_gain};
pub use room::{
    default_max_order, derive_reflection_coeff, eyring_absorption, image_sources, schroeder_t60,
    simulate_rir, simulate_rir_limited, ImageSource, ImpulseResponse, RoomSpec,
    DEFAULT_SPEED_OF_SOUND,
};

#[derive(Error, Debug)]
pub enum SimError {
    #[error("invalid room geometry: {0}")]
    InvalidGeometry(String),
    #[error("source and microphone coincide")]
    SingularGeometry,
    #[error("invalid impulse response: {0}")]
    InvalidImpulseResponse(String),
    #[error("sample rate mismatch: expected {expected} Hz, found {found} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },
    #[error("{0} has zero power, SNR is undefined")]
    ZeroPower(String),
    #[error("at least one noise is required")]
    NoNoise,
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("bad label file: {0}")]
    BadLabels(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
