//! Pinhole stereo camera math: disparity to 3D projection, rigid transforms
//! and the camera to display frame chain.

mod camera;
mod cloud;
mod disparity;
mod point;
mod se3;

pub use camera::{disparity_to_point, project_point, CameraIntrinsics, MIN_VALID_DISPARITY};
pub use cloud::{cloud_from_frame, ColoredPoint, CoordinateFrame, PointCloud};
pub use disparity::DisparityMap;
pub use point::Point3;
pub use se3::{
    apply_chain, compose, euler_to_rotation, rotation_to_euler, EulerAngles, EulerDecomposition,
    FrameChain, RigidTransform, Rotation, GIMBAL_LOCK_TOLERANCE,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid disparity {0}: must be finite and greater than {MIN_VALID_DISPARITY}")]
    InvalidDisparity(f64),
    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    PixelOutOfBounds {
        u: f64,
        v: f64,
        width: u32,
        height: u32,
    },
    #[error("point with z = {0} is behind the camera")]
    BehindCamera(f64),
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("not a rotation matrix: {0}")]
    InvalidRotation(String),
    #[error("calibration file: {0}")]
    Calibration(String),
}
