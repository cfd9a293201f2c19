//! Loopback benchmarks: per-stage and closed-loop latency across
//! resolutions, re-projection accuracy of guidance, and corrupt-frame
//! resilience.

mod accuracy;
mod latency;
mod report;
mod resilience;
mod stats;

pub use accuracy::{
    measure_reprojection_error, run_accuracy_suite, scene_targets, AccuracyKind, AccuracyRun,
    AccuracyTarget, DEFAULT_TRIALS,
};
pub use latency::{
    run_benchmark, run_benchmark_with, run_resolution, BenchConfig, PAPER_RESOLUTIONS,
    REFERENCE_BASELINE, REFERENCE_F_AT_640,
};
pub use report::{
    read_latency_csv, read_summary, summarize_accuracy, summarize_stages, write_report,
    AccuracySummary, AccuracyTrial, BenchReport, ResolutionReport, StageSummary, StageTiming,
    ACCURACY_CSV, LATENCY_CSV, SUMMARY_JSON,
};
pub use resilience::{run_resilience, ResilienceReport};
pub use stats::Summary;

use std::time::Duration;

use thiserror::Error;

use crate::mentor::{MentorConfig, RetryPolicy};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Operation(#[from] crate::operation::OperationError),
    #[error(transparent)]
    Mentor(#[from] crate::mentor::MentorError),
    #[error(transparent)]
    Transport(#[from] crate::transport::TransportError),
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
    #[error(transparent)]
    Stereo(#[from] crate::stereo::StereoError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mentor settings for a loopback peer that may start before the listener.
fn loopback_mentor(addr: &str) -> MentorConfig {
    MentorConfig {
        retry: RetryPolicy {
            attempts: 50,
            initial_backoff: Duration::from_millis(10),
            max_backoff: Duration::from_millis(100),
        },
        ..MentorConfig::new(addr)
    }
}
