//! Mentor side: frame reception and reconstruction, the scene view chain,
//! scripted guidance, and the gateway to the browser console.

mod client;
mod fps;
mod gateway;
mod script;
mod view;

pub use client::{
    run_mentor_client, write_mentor_stats_csv, FrameResponder, MentorConfig, MentorFrame,
    MentorFrameStats, MentorSummary, RetryPolicy,
};
pub use fps::FpsMeter;
pub use gateway::{
    decode_gateway_frame, encode_gateway_frame, run_gateway, Gateway, GatewayFrame, UiFeedback,
    GATEWAY_HEADER_LEN, GATEWAY_MAGIC,
};
pub use script::{
    scripted_needle_agent, scripted_pointer_agent, MentorAgentScript, ScriptAction, ScriptPose,
    ScriptStep,
};
pub use view::{pick_along_ray, ViewState, DEFAULT_VIEW_DISTANCE};

use thiserror::Error;

use crate::codec::CodecError;
use crate::geometry::GeometryError;
use crate::transport::TransportError;

#[derive(Debug, Error)]
pub enum MentorError {
    #[error("script: {0}")]
    Script(String),
    #[error("view: {0}")]
    View(String),
    #[error("gateway: {0}")]
    Gateway(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("stats: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
