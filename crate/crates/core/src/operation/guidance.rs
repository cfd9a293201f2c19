use std::collections::BTreeMap;

use crate::geometry::{Point3, RigidTransform};
use crate::transport::{FeedbackKind, FeedbackMessage};

/// Guidance currently shown on the console, all in the camera frame {C}.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GuidanceState {
    pub pointer: Option<Point3>,
    pub needle: Option<RigidTransform>,
    /// Trajectory vertices per stroke, in arrival order.
    pub strokes: BTreeMap<u16, Vec<Point3>>,
    pub last_update_us: Option<u64>,
}

impl GuidanceState {
    pub fn is_empty(&self) -> bool {
        self.pointer.is_none() && self.needle.is_none() && self.strokes.is_empty()
    }

    /// Folds one message into the state. A message with `m = 0` wipes
    /// everything; pointer and needle replace their previous value; trajectory
    /// vertices extend their stroke.
    pub fn apply(&mut self, msg: &FeedbackMessage, now_us: u64) {
        self.last_update_us = Some(now_us);
        if msg.is_clear() {
            self.pointer = None;
            self.needle = None;
            self.strokes.clear();
            return;
        }
        match msg.kind() {
            Some(FeedbackKind::Pointer) => self.pointer = Some(msg.position()),
            Some(FeedbackKind::Needle) => self.needle = Some(msg.pose()),
            Some(FeedbackKind::Trajectory) => self
                .strokes
                .entry(msg.stroke_id)
                .or_default()
                .push(msg.position()),
            None => log::warn!("ignoring feedback with unknown kind {}", msg.i),
        }
    }
}

/// Semicircular suture needle in its local frame: the arc lies in the x-y
/// plane, centred on the origin, from angle 0 to π.
#[derive(Debug, Clone, PartialEq)]
pub struct NeedleModel {
    radius: f64,
    vertices: Vec<Point3>,
}

impl NeedleModel {
    pub const DEFAULT_RADIUS: f64 = 0.008;
    pub const DEFAULT_SEGMENTS: usize = 24;

    pub fn new(radius: f64, segments: usize) -> Self {
        assert!(
            radius > 0.0 && radius.is_finite(),
            "needle radius must be positive"
        );
        let segments = segments.max(1);
        let vertices = (0..=segments)
            .map(|k| {
                let theta = std::f64::consts::PI * k as f64 / segments as f64;
                Point3::new(radius * theta.cos(), radius * theta.sin(), 0.0)
            })
            .collect();
        Self { radius, vertices }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn posed(&self, pose: &RigidTransform) -> Vec<Point3> {
        self.vertices.iter().map(|&v| pose.apply(v)).collect()
    }
}

impl Default for NeedleModel {
    fn default() -> Self {
        Self::new(Self::DEFAULT_RADIUS, Self::DEFAULT_SEGMENTS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euler_to_rotation, EulerAngles};

    #[test]
    fn needle_vertices_on_circle() {
        let n = NeedleModel::new(0.0123, 37);
        assert_eq!(n.vertices().len(), 38);
        for v in n.vertices() {
            assert!((v.norm() - 0.0123).abs() < 1e-9);
            assert_eq!(v.z, 0.0);
        }
        assert!((n.vertices()[0].x - 0.0123).abs() < 1e-15);
        assert!((n.vertices()[37].x + 0.0123).abs() < 1e-15);
    }

    #[test]
    fn clear_wipes_everything() {
        let mut g = GuidanceState::default();
        g.apply(&FeedbackMessage::pointer(Point3::new(0.0, 0.0, 0.1), 1), 10);
        g.apply(
            &FeedbackMessage::trajectory_vertex(4, Point3::new(0.0, 0.0, 0.1), 1),
            11,
        );
        let pose = RigidTransform::new(
            euler_to_rotation(EulerAngles::new(0.3, 0.0, 0.0)),
            Point3::new(0.0, 0.0, 0.1),
        );
        g.apply(&FeedbackMessage::needle(&pose, 1), 12);
        assert!(!g.is_empty());
        g.apply(&FeedbackMessage::clear(2), 13);
        assert!(g.is_empty());
        assert_eq!(g.last_update_us, Some(13));
    }

    #[test]
    fn strokes_keep_arrival_order() {
        let mut g = GuidanceState::default();
        let pts = [
            Point3::new(0.01, 0.0, 0.1),
            Point3::new(-0.01, 0.0, 0.1),
            Point3::new(0.0, 0.02, 0.1),
        ];
        for (k, p) in pts.iter().enumerate() {
            g.apply(&FeedbackMessage::trajectory_vertex(7, *p, 1), k as u64);
            g.apply(
                &FeedbackMessage::trajectory_vertex(8, *p * 2.0, 1),
                k as u64,
            );
        }
        let expect: Vec<Point3> = pts
            .iter()
            .map(|p| Point3::new(p.x as f32 as f64, 0.0, 0.1f32 as f64))
            .collect();
        assert_eq!(g.strokes[&7].len(), 3);
        for (got, want) in g.strokes[&7].iter().zip(&expect) {
            assert!((got.x - want.x).abs() < 1e-12);
        }
        assert_eq!(g.strokes.len(), 2);
    }
}
