use std::fmt::Display;
use std::io;

use thiserror::Error;
use tkge_core::embed::EmbedError;
use tkge_core::transform::TransformError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureKind {
    Config,
    Data,
    Numeric,
    Io,
}

/// A stage failure with the process exit code it maps to.
#[derive(Debug, Error)]
#[error("[{stage}] {message}")]
pub struct Failure {
    pub stage: &'static str,
    pub kind: FailureKind,
    pub message: String,
}

impl Failure {
    fn new(stage: &'static str, kind: FailureKind, msg: impl Display) -> Self {
        Self { stage, kind, message: msg.to_string() }
    }

    pub fn config(stage: &'static str, msg: impl Display) -> Self {
        Self::new(stage, FailureKind::Config, msg)
    }

    pub fn data(stage: &'static str, msg: impl Display) -> Self {
        Self::new(stage, FailureKind::Data, msg)
    }

    pub fn io(stage: &'static str, e: io::Error) -> Self {
        Self::new(stage, FailureKind::Io, e)
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            FailureKind::Config => 2,
            FailureKind::Data => 3,
            FailureKind::Numeric => 4,
            FailureKind::Io => 1,
        }
    }

    pub fn from_transform(e: TransformError) -> Self {
        match e {
            TransformError::InvalidParameter(_) => Self::config("transform", e),
            _ => Self::data("transform", e),
        }
    }

    pub fn from_embed(stage: &'static str, e: EmbedError) -> Self {
        match e {
            EmbedError::NonFinite { .. } => Self::new(stage, FailureKind::Numeric, e),
            EmbedError::Config(_) => Self::config(stage, e),
            _ => Self::data(stage, e),
        }
    }
}

pub type Result<T> = std::result::Result<T, Failure>;
