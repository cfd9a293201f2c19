//! Disparity/colour frame compression.
//!
//! A float disparity map is split into an integer channel, a fractional
//! channel (×256) and an all-zero placeholder so that it fits a standard
//! 3-channel image codec. The IFP image and the left colour frame are then
//! compressed independently and travel together as one [`EncodedFrame`].

mod frame;
mod ifp;
mod payload;
pub mod pfm;

pub use frame::{
    decode_disparity, decode_disparity_with, decode_frame, encode_frame, raw_frame_bytes,
    DecodeLimits, EncodedFrame, Quality, DEFAULT_QUALITY,
};
pub use ifp::{merge_ifp, merge_ifp_lossy, split_ifp, IfpImage, FRACTION_STEPS, MAX_DISPARITY};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error(
        "disparity {value} at ({u}, {v}) does not fit the integer channel (limit {MAX_DISPARITY})"
    )]
    DisparityOutOfRange { u: u32, v: u32, value: f32 },
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("encode failed: {0}")]
    Encode(String),
    #[error("decode failed: {0}")]
    Decode(String),
    #[error("invalid quality {0:?}: expected 1-100 or `lossless`")]
    Quality(String),
    #[error("pfm: {0}")]
    Pfm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
