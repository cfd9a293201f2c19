//! Shared inputs for the stage benchmarks.

use telementor::codec::{encode_frame, split_ifp, EncodedFrame, IfpImage, Quality};
use telementor::geometry::CameraIntrinsics;
use telementor::stereo::{gen_synthetic_scene, peg_scene, StereoPair};

pub struct Fixture {
    pub intrinsics: CameraIntrinsics,
    pub pair: StereoPair,
    pub ifp: IfpImage,
    pub lossy: EncodedFrame,
    pub lossless: EncodedFrame,
}

/// The peg scene rendered at `width`×`height`, split and encoded both ways.
pub fn fixture(width: u32, height: u32) -> Fixture {
    let intrinsics = CameraIntrinsics::centered(width, height, 500.0, 0.005).expect("valid size");
    let pair = gen_synthetic_scene(&peg_scene(intrinsics, 7)).expect("scene renders");
    let ifp = split_ifp(&pair.disparity).expect("disparity in range");
    let lossy = encode_frame(&pair.left, &ifp, Quality::Lossy(90)).expect("encodes");
    let lossless = encode_frame(&pair.left, &ifp, Quality::Lossless).expect("encodes");
    Fixture {
        intrinsics,
        pair,
        ifp,
        lossy,
        lossless,
    }
}
