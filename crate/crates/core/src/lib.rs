//! Closed-loop RGB-D streaming for remote surgical mentoring.
//!
//! The operation side streams compressed colour + disparity frames over TCP,
//! the mentor side rebuilds a point cloud and answers with compact guidance
//! records that are drawn back onto the console video.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod codec;
pub mod geometry;
pub mod mentor;
pub mod operation;
pub mod stereo;
pub mod transport;
