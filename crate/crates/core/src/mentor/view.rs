use crate::geometry::{CoordinateFrame, FrameChain, Point3, PointCloud, RigidTransform, Rotation};

use super::MentorError;

/// Placement of the reconstructed scene in front of the mentor.
///
/// A camera-frame point reaches the viewer frame {H} as
/// `K_W^H · K_O^W · (s · K_C^O · p)`: `k_c_o` recentres the scene on its own
/// origin {O}, `scale` resizes it about that origin, `k_o_w` places it in the
/// world, and `k_w_h` is the viewer pose. The viewer looks along +z of {H}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewState {
    k_c_o: RigidTransform,
    k_o_w: RigidTransform,
    scale: f64,
    k_w_h: RigidTransform,
}

/// Distance at which a freshly centred scene is placed in front of the viewer.
pub const DEFAULT_VIEW_DISTANCE: f64 = 0.3;

impl ViewState {
    pub fn new(
        k_c_o: RigidTransform,
        k_o_w: RigidTransform,
        scale: f64,
        k_w_h: RigidTransform,
    ) -> Result<Self, MentorError> {
        check_scale(scale)?;
        for t in [&k_c_o, &k_o_w, &k_w_h] {
            RigidTransform::checked(t.rotation.0, t.translation)?;
        }
        Ok(Self {
            k_c_o,
            k_o_w,
            scale,
            k_w_h,
        })
    }

    /// Recentres on the bounding-box centre of `cloud` and places that centre
    /// [`DEFAULT_VIEW_DISTANCE`] in front of the viewer.
    pub fn centered_on(cloud: &PointCloud) -> Self {
        let centre = cloud
            .bounds()
            .map(|(lo, hi)| (lo + hi) * 0.5)
            .unwrap_or(Point3::ORIGIN);
        Self {
            k_c_o: RigidTransform::from_translation(-centre),
            k_o_w: RigidTransform::from_translation(Point3::new(0.0, 0.0, DEFAULT_VIEW_DISTANCE)),
            scale: 1.0,
            k_w_h: RigidTransform::IDENTITY,
        }
    }

    pub fn k_c_o(&self) -> &RigidTransform {
        &self.k_c_o
    }

    pub fn k_o_w(&self) -> &RigidTransform {
        &self.k_o_w
    }

    pub fn k_w_h(&self) -> &RigidTransform {
        &self.k_w_h
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Moves and/or resizes the scene; `k_c_o` stays fixed.
    pub fn set_placement(&mut self, k_o_w: RigidTransform, scale: f64) -> Result<(), MentorError> {
        check_scale(scale)?;
        RigidTransform::checked(k_o_w.rotation.0, k_o_w.translation)?;
        self.k_o_w = k_o_w;
        self.scale = scale;
        Ok(())
    }

    pub fn set_viewer(&mut self, k_w_h: RigidTransform) -> Result<(), MentorError> {
        self.k_w_h = RigidTransform::checked(k_w_h.rotation.0, k_w_h.translation)?;
        Ok(())
    }

    /// The same scene turned about its own origin by `yaw` (about y) then
    /// `pitch` (about x), kept `distance` in front of the viewer.
    pub fn orbited(&self, yaw: f64, pitch: f64, distance: f64) -> Self {
        let rotation = Rotation::about_x(pitch).mul(&Rotation::about_y(yaw));
        Self {
            k_o_w: RigidTransform::new(rotation, Point3::new(0.0, 0.0, distance)),
            ..*self
        }
    }

    /// The chain without the scale factor.
    pub fn chain(&self) -> FrameChain {
        FrameChain {
            k_c_o: self.k_c_o,
            k_o_w: self.k_o_w,
            k_w_h: self.k_w_h,
        }
    }

    /// `p_H = R · (s · p_C) + t` collapsed into one rotation and translation.
    fn collapsed(&self) -> RigidTransform {
        let r = self
            .k_w_h
            .rotation
            .mul(&self.k_o_w.rotation)
            .mul(&self.k_c_o.rotation);
        let t_w = self
            .k_o_w
            .rotation
            .apply(self.k_c_o.translation * self.scale)
            + self.k_o_w.translation;
        RigidTransform::new(r, self.k_w_h.apply(t_w))
    }

    pub fn camera_to_view(&self, p: Point3) -> Point3 {
        let p_o = self.k_c_o.apply(p);
        self.k_w_h.apply(self.k_o_w.apply(p_o * self.scale))
    }

    pub fn view_to_camera(&self, p: Point3) -> Point3 {
        let p_w = self.k_w_h.inverse().apply(p);
        let p_o = self.k_o_w.inverse().apply(p_w) * (1.0 / self.scale);
        self.k_c_o.inverse().apply(p_o)
    }

    /// The camera-frame cloud as the viewer sees it.
    pub fn transform_cloud(&self, cloud: &PointCloud) -> PointCloud {
        cloud.transformed(self.scale, &self.collapsed(), CoordinateFrame::Display)
    }
}

fn check_scale(scale: f64) -> Result<(), MentorError> {
    if scale.is_finite() && scale > 0.0 {
        Ok(())
    } else {
        Err(MentorError::View(format!(
            "scale must be positive, got {scale}"
        )))
    }
}

/// Index of the point seen closest (by angle) to the viewing direction `dir`
/// from the viewer origin. Points behind the viewer are ignored.
pub fn pick_along_ray(cloud: &PointCloud, dir: Point3) -> Option<usize> {
    let n = dir.norm();
    if !(n.is_finite() && n > 0.0) {
        return None;
    }
    let dir = dir * (1.0 / n);
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in cloud.points.iter().enumerate() {
        let len = p.position.norm();
        let along = p.position.dot(dir);
        if along <= 0.0 || len == 0.0 {
            continue;
        }
        let cos = along / len;
        if best.is_none_or(|(_, c)| cos > c) {
            best = Some((i, cos));
        }
    }
    best.map(|(i, _)| i)
}
