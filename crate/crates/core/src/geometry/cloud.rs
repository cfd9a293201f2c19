use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::unchecked_point;
use super::{CameraIntrinsics, DisparityMap, GeometryError, Point3, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoordinateFrame {
    Camera,
    Origin,
    World,
    Display,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColoredPoint {
    pub position: Point3,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<ColoredPoint>,
    pub frame: CoordinateFrame,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Axis-aligned bounds `(min, max)`, `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let first = self.points.first()?.position;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            let q = p.position;
            (
                Point3::new(lo.x.min(q.x), lo.y.min(q.y), lo.z.min(q.z)),
                Point3::new(hi.x.max(q.x), hi.y.max(q.y), hi.z.max(q.z)),
            )
        }))
    }

    /// Applies `transform` after a uniform `scale`, relabelling the frame.
    pub fn transformed(
        &self,
        scale: f64,
        transform: &RigidTransform,
        frame: CoordinateFrame,
    ) -> PointCloud {
        let points = self
            .points
            .par_iter()
            .map(|p| ColoredPoint {
                position: transform.apply(p.position * scale),
                color: p.color,
            })
            .collect();
        PointCloud { points, frame }
    }
}

/// One coloured camera-frame point per valid disparity pixel.
pub fn cloud_from_frame(
    intr: &CameraIntrinsics,
    disp: &DisparityMap,
    rgb: &RgbImage,
) -> Result<PointCloud, GeometryError> {
    if disp.dimensions() != rgb.dimensions() {
        return Err(GeometryError::ShapeMismatch {
            expected: disp.dimensions(),
            actual: rgb.dimensions(),
        });
    }
    if disp.dimensions() != (intr.width, intr.height) {
        return Err(GeometryError::ShapeMismatch {
            expected: (intr.width, intr.height),
            actual: disp.dimensions(),
        });
    }
    let width = disp.width() as usize;
    let values = disp.values();
    let mask = disp.mask();
    let points = (0..disp.height() as usize)
        .into_par_iter()
        .flat_map_iter(|v| {
            let row = v * width..(v + 1) * width;
            values[row.clone()]
                .iter()
                .zip(&mask[row])
                .enumerate()
                .filter(|(_, (_, ok))| **ok)
                .map(move |(u, (&d, _))| ColoredPoint {
                    position: unchecked_point(intr, u as f64, v as f64, d as f64),
                    color: rgb.get_pixel(u as u32, v as u32).0,
                })
        })
        .collect();
    Ok(PointCloud {
        points,
        frame: CoordinateFrame::Camera,
    })
}
