//! Benchmark generation, instance runner and competition scoring.

pub mod generate;
pub mod ppm;
pub mod run;
pub mod score;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::bnn::BnnError;
use crate::onnx::OnnxError;
use crate::verifier::VerifyError;
use crate::vnnlib::VnnlibError;

pub use generate::{
    generate_benchmark, load_image_dir, load_models, parse_instances, read_instances, render_instances,
    synthetic_images, synthetic_models, write_fixtures, Benchmark, BenchModel, BenchmarkInstance,
    GenerateConfig, LabeledImage,
};
pub use ppm::{load_ppm, write_ppm, PpmError};
pub use run::{parse_results, render_results, run_instances, Engine, Outcome, RunConfig, VerdictRecord};
pub use score::{counts_from_runs, parse_counts, render_table, score_csv, score_results, ScoreRow, ToolCounts};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Model { path: PathBuf, source: OnnxError },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: PpmError },
    #[error("{model}: needs {needed} correctly classified images, found {found}")]
    NotEnoughImages {
        model: String,
        needed: usize,
        found: usize,
    },
    #[error("csv: {0}")]
    Csv(String),
    #[error("{0}")]
    Config(String),
    #[error("no tools to score")]
    Empty,
    #[error(transparent)]
    Property(#[from] VnnlibError),
    #[error(transparent)]
    Network(#[from] BnnError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

pub(crate) fn io_err(path: &Path, source: io::Error) -> BenchError {
    BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}
