use image::RgbImage;

use crate::geometry::DisparityMap;

use super::{block_match_disparity, BlockMatchParams, StereoError};

/// One rectified capture, optionally with known disparity.
#[derive(Debug, Clone)]
pub struct StereoFrame {
    pub left: RgbImage,
    pub right: RgbImage,
    pub ground_truth: Option<DisparityMap>,
}

/// Anything that turns a rectified pair into a left-view disparity map.
pub trait DisparitySource: Send {
    fn name(&self) -> &'static str;
    fn disparity(&mut self, frame: &StereoFrame) -> Result<DisparityMap, StereoError>;
}

/// Pass-through of ground truth shipped with the frame.
#[derive(Debug, Default, Clone, Copy)]
pub struct GroundTruthSource;

impl DisparitySource for GroundTruthSource {
    fn name(&self) -> &'static str {
        "ground-truth"
    }

    fn disparity(&mut self, frame: &StereoFrame) -> Result<DisparityMap, StereoError> {
        frame
            .ground_truth
            .clone()
            .ok_or(StereoError::MissingGroundTruth)
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct BlockMatchSource {
    pub params: BlockMatchParams,
}

impl DisparitySource for BlockMatchSource {
    fn name(&self) -> &'static str {
        "block-match"
    }

    fn disparity(&mut self, frame: &StereoFrame) -> Result<DisparityMap, StereoError> {
        block_match_disparity(&frame.left, &frame.right, self.params)
    }
}
