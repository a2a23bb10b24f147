//! Declarative experiment driver: stage graph with content-hash caching,
//! the main results table, the temperature/k grid and the data-size sweep.

mod cache;
mod config;
mod experiment;
mod report;
mod stages;

use thiserror::Error;

use crate::audio::AudioError;
use crate::codec::CodecError;
use crate::features::FeatureError;
use crate::net::NetError;
use crate::sim::SimError;

pub use cache::{Cache, StageDir, StageEvent};
pub use config::{
    CodecSection, CorpusSection, ExperimentConfig, FloorPolicy, KSpec, ModelSection, OutputSection,
    StudentPoint, SweepSection,
};
pub use experiment::{extract_features, run_experiment, simulate, sweep_size, sweep_tk, Experiment};
pub use report::{
    emit_grid, emit_report, emit_size, read_grid_csv, read_size_csv, read_tables_csv, t1_flatness, werr,
    write_timings, GridCell, GridReport, GridRow, MeanScore, RunReport, SeedScore, SizePoint, SizeReport,
    SizeRow, SystemRow, GRID_HEADER, SIZE_HEADER, TABLES_HEADER,
};
pub use stages::{ManifestEntry, Split, TrainedModel};

#[derive(Error, Debug)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: StageCause,
    },
    #[error("baseline TER {0} leaves WERR undefined")]
    ZeroBaseline(f64),
    #[error("i/o error ({context}): {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        PipelineError::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 stage failure, 4 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { source, .. } if source.is_io() => 4,
            PipelineError::Stage { .. } | PipelineError::ZeroBaseline(_) => 3,
            PipelineError::Io { .. } => 4,
        }
    }
}

#[derive(Error, Debug)]
pub enum StageCause {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

impl StageCause {
    pub fn is_io(&self) -> bool {
        match self {
            StageCause::Io(_) => true,
            StageCause::Sim(SimError::Io(_)) => true,
            StageCause::Sim(SimError::Audio(AudioError::Wav(hound::Error::IoError(_)))) => true,
            StageCause::Audio(AudioError::Wav(hound::Error::IoError(_))) => true,
            StageCause::Feature(FeatureError::Io(_)) => true,
            StageCause::Codec(CodecError::Io(_)) => true,
            StageCause::Net(NetError::Io(_)) => true,
            _ => false,
        }
    }
}
