//! Corpus construction: source loading, automatic speech-start labelling,
//! level-controlled mixing and deterministic train/validation/test recipes.
//!
//! Every example is described by an [`ExampleRecipe`] row, so a manifest on
//! disk plus the source directories reproduces the audio sample for sample.

pub mod labeler;
pub mod mix;
pub mod partition;
pub mod sources;
pub mod wav;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use labeler::{detect_speech_start, detect_speech_start_sample, StartDetectorConfig};
pub use mix::{crest_factor, mix, synth_example, white_noise, Label, Mixed, SPEECH_SECTION_SAMPLES};
pub use partition::{
    build_partitions, example_seed, read_manifest, render, write_manifest, ExampleKind, ExampleRecipe, Partition,
    PartitionSpec, Partitions, SourceLibrary, TEST_NOISES, TEST_PHRASES,
};
pub use sources::{write_synthetic_sources, SourceConfig, SourceSummary};
pub use wav::{load_wav, write_wav};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Wav { path: PathBuf, source: hound::Error },
    #[error("{path}: sample rate {rate} Hz, expected 16000 Hz")]
    UnsupportedRate { path: PathBuf, rate: u32 },
    #[error("{path}: {channels} channels, expected mono")]
    UnsupportedChannels { path: PathBuf, channels: u16 },
    #[error("{path}: {bits}-bit samples, expected 16-bit PCM")]
    UnsupportedFormat { path: PathBuf, bits: u16 },
    #[error("no speech onset found")]
    NoSpeechDetected,
    #[error("{0} is silent")]
    Silent(String),
    #[error("speech clip has only {0} samples after its onset")]
    SpeechTooShort(usize),
    #[error("noise clip has {have} samples, {need} are needed")]
    NoiseTooShort { have: usize, need: usize },
    #[error("invalid corpus configuration: {0}")]
    Config(String),
    #[error("directory {0} does not exist")]
    MissingDir(PathBuf),
    #[error("missing source: {0}")]
    MissingSource(String),
    #[error("bad manifest: {0}")]
    Manifest(String),
    #[error("not enough source material: {}", .0.join("; "))]
    Shortfall(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CorpusError {
    pub(crate) fn wav(path: &Path, source: hound::Error) -> Self {
        CorpusError::Wav { path: path.to_path_buf(), source }
    }
}
