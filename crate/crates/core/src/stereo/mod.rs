//! Disparity sources and the synthetic stereo scenes used as ground truth.

mod block_match;
mod noise;
mod scene;
mod source;

pub use block_match::{block_match_disparity, BlockMatchParams, AMBIGUITY_RATIO};
pub use scene::{
    gen_synthetic_scene, peg_scene, Albedo, NamedTarget, Primitive, SceneSpec, StereoPair,
    TextureSpec,
};
pub use source::{BlockMatchSource, DisparitySource, GroundTruthSource, StereoFrame};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StereoError {
    #[error("scene: {0}")]
    Scene(String),
    #[error("shape mismatch: left {left:?}, right {right:?}")]
    Shape { left: (u32, u32), right: (u32, u32) },
    #[error("block matching parameters: {0}")]
    Params(String),
    #[error("no ground-truth disparity for this frame")]
    MissingGroundTruth,
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
