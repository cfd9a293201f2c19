use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GeometryError, Point3};

/// Disparities at or below this value (pixels) carry no usable depth.
pub const MIN_VALID_DISPARITY: f64 = 1e-6;

/// Rectified stereo calibration for the left camera.
///
/// Serialized as the calibration file: a JSON object with keys `f`, `b`,
/// `cx`, `cy`, `width`, `height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    /// Focal length in pixels.
    pub f: f64,
    /// Stereo baseline in metres.
    pub b: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        f: f64,
        b: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let intr = Self {
            f,
            b,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Principal point at the image centre, focal length scaled with width
    /// so that the horizontal field of view stays fixed across resolutions.
    pub fn centered(width: u32, height: u32, f_at_640: f64, b: f64) -> Result<Self, GeometryError> {
        let f = f_at_640 * width as f64 / 640.0;
        Self::new(f, b, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: String| Err(GeometryError::InvalidIntrinsics(msg));
        if !(self.f.is_finite() && self.f > 0.0) {
            return bad(format!("focal length {} must be > 0", self.f));
        }
        if !(self.b.is_finite() && self.b > 0.0) {
            return bad(format!("baseline {} must be > 0", self.b));
        }
        if self.width == 0 || self.height == 0 {
            return bad(format!(
                "image size {}x{} must be non-empty",
                self.width, self.height
            ));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad(format!("cx {} outside [0, {})", self.cx, self.width));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad(format!("cy {} outside [0, {})", self.cy, self.height));
        }
        Ok(())
    }

    /// Uniformly rescales the calibration for a resized image, e.g. the
    /// 1280x1024 to 640x512 downsampling (`factor = 0.5`). The baseline is a
    /// physical length and does not change.
    pub fn scaled(&self, factor: f64) -> Result<Self, GeometryError> {
        let width = (self.width as f64 * factor).round() as u32;
        let height = (self.height as f64 * factor).round() as u32;
        Self::new(
            self.f * factor,
            self.b,
            self.cx * factor,
            self.cy * factor,
            width,
            height,
        )
    }

    /// `f * b`, the constant relating depth and disparity (`z = fb / d`).
    pub fn depth_scale(&self) -> f64 {
        self.f * self.b
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        let intr: Self =
            serde_json::from_str(text).map_err(|e| GeometryError::Calibration(e.to_string()))?;
        intr.validate()?;
        Ok(intr)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GeometryError::Calibration(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("intrinsics serialize")
    }
}

/// Back-projects pixel `(u, v)` with disparity `d` into the left camera frame:
/// `z = f·b/d`, `x = z·(u − cx)/f`, `y = z·(v − cy)/f`.
pub fn disparity_to_point(
    intr: &CameraIntrinsics,
    u: f64,
    v: f64,
    d: f64,
) -> Result<Point3, GeometryError> {
    if !(d.is_finite() && d > MIN_VALID_DISPARITY) {
        return Err(GeometryError::InvalidDisparity(d));
    }
    if !intr.contains(u, v) {
        return Err(GeometryError::PixelOutOfBounds {
            u,
            v,
            width: intr.width,
            height: intr.height,
        });
    }
    Ok(unchecked_point(intr, u, v, d))
}

#[inline]
pub(crate) fn unchecked_point(intr: &CameraIntrinsics, u: f64, v: f64, d: f64) -> Point3 {
    let z = intr.depth_scale() / d;
    Point3::new(z * (u - intr.cx) / intr.f, z * (v - intr.cy) / intr.f, z)
}

/// Projects a camera-frame point to pixel coordinates. Points outside the
/// image are still returned; callers clip.
pub fn project_point(intr: &CameraIntrinsics, p: Point3) -> Result<(f64, f64), GeometryError> {
    if !(p.z > 0.0) {
        return Err(GeometryError::BehindCamera(p.z));
    }
    Ok((p.x * intr.f / p.z + intr.cx, p.y * intr.f / p.z + intr.cy))
}
