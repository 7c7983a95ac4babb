//! Dataset pipeline, file formats and CLI around `ferspm-core`:
//! PGM/PNG image IO, cascade and landmark files, dataset manifests,
//! model persistence, the end-to-end train/predict/evaluate flows and
//! a synthetic face fixture generator used by the test suite.

#![allow(clippy::needless_range_loop)]

pub mod cascade_file;
pub mod image_io;
pub mod landmark_file;
pub mod manifest;
pub mod model_file;
pub mod pgm;
pub mod pipeline;
pub mod synth;

use std::fmt;
use std::path::{Path, PathBuf};

pub use ferspm_core as core;

/// Unified error for the IO and pipeline layers. `exit_code` gives the
/// CLI mapping: 1 usage, 2 data, 3 numeric.
#[derive(Debug)]
pub enum Error {
    Io { path: PathBuf, source: std::io::Error },
    Parse { file: PathBuf, line: usize, message: String },
    Data(String),
    Numeric(String),
    NoFace(PathBuf),
    Usage(String),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Error {
        Error::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn parse(file: impl AsRef<Path>, line: usize, message: impl Into<String>) -> Error {
        Error::Parse { file: file.as_ref().to_path_buf(), line, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Io { .. } | Error::Parse { .. } | Error::Data(_) | Error::NoFace(_) => 2,
            Error::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Error::Parse { file, line, message } => {
                write!(f, "{}:{line}: {message}", file.display())
            }
            Error::Data(msg) => write!(f, "{msg}"),
            Error::Numeric(msg) => write!(f, "numeric failure: {msg}"),
            Error::NoFace(path) => write!(f, "{}: no face found", path.display()),
            Error::Usage(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<ferspm_core::svm::SvmError> for Error {
    fn from(e: ferspm_core::svm::SvmError) -> Error {
        use ferspm_core::svm::SvmError;
        match e {
            SvmError::PairTooSmall { .. } | SvmError::MissingClass(_) | SvmError::SingleClassInput => {
                Error::Data(e.to_string())
            }
            other => Error::Numeric(other.to_string()),
        }
    }
}

impl From<ferspm_core::subspace::SubspaceError> for Error {
    fn from(e: ferspm_core::subspace::SubspaceError) -> Error {
        Error::Numeric(e.to_string())
    }
}

impl From<ferspm_core::saliency::SaliencyError> for Error {
    fn from(e: ferspm_core::saliency::SaliencyError) -> Error {
        Error::Data(e.to_string())
    }
}

impl From<ferspm_core::features::FeatureError> for Error {
    fn from(e: ferspm_core::features::FeatureError) -> Error {
        Error::Numeric(e.to_string())
    }
}

impl From<ferspm_core::imaging::ImageError> for Error {
    fn from(e: ferspm_core::imaging::ImageError) -> Error {
        Error::Data(e.to_string())
    }
}

impl From<ferspm_core::landmarks::LandmarkError> for Error {
    fn from(e: ferspm_core::landmarks::LandmarkError) -> Error {
        Error::Numeric(e.to_string())
    }
}

impl From<ferspm_core::eval::MetricsError> for Error {
    fn from(e: ferspm_core::eval::MetricsError) -> Error {
        Error::Data(e.to_string())
    }
}
