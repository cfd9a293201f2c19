//! Trainee side: capture, disparity, compression and streaming, plus the
//! console view with mentor guidance drawn over the left eye.

mod guidance;
mod overlay;
mod service;
mod source;

pub use guidance::{GuidanceState, NeedleModel};
pub use overlay::{
    changed_pixel_centroid, draw_crosshair, draw_polyline, draw_segment, render_overlay,
    CROSSHAIR_SIZE, NEEDLE_COLOR, POINTER_COLOR, TRAJECTORY_COLOR,
};
pub use service::{
    run_operation_service, serve, write_stats_csv, ConsoleFrame, ConsoleTrigger, DisparityMode,
    FrameStats, OperationConfig, OperationSummary, Pacing,
};
pub use source::{write_sequence_dir, DirectorySource, FrameSource, SyntheticSource};

use thiserror::Error;

use crate::codec::CodecError;
use crate::stereo::StereoError;
use crate::transport::TransportError;

#[derive(Debug, Error)]
pub enum OperationError {
    #[error("cannot listen on {0}: {1}")]
    Bind(String, #[source] std::io::Error),
    #[error("source: {0}")]
    Source(String),
    #[error("pipeline: {0}")]
    Pipeline(String),
    #[error(transparent)]
    Stereo(#[from] StereoError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("stats: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
