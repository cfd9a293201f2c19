use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::geometry::{euler_to_rotation, rotation_to_euler, EulerAngles, Point3, RigidTransform};
use crate::transport::{FeedbackKind, FeedbackMessage};

use super::MentorError;

/// Needle pose as written in scripts: Z-Y-X Euler angles (radians) and a
/// position (metres), both in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptPose {
    #[serde(default)]
    pub yaw: f64,
    #[serde(default)]
    pub pitch: f64,
    #[serde(default)]
    pub roll: f64,
    pub position: [f64; 3],
}

impl ScriptPose {
    pub fn to_transform(self) -> RigidTransform {
        RigidTransform::new(
            euler_to_rotation(EulerAngles::new(self.yaw, self.pitch, self.roll)),
            Point3::from_array(self.position),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptAction {
    PointAt([f64; 3]),
    SetNeedle(ScriptPose),
    DrawStroke(Vec<[f64; 3]>),
    Clear,
    Wait(u64),
}

/// Ordered mentor actions, e.g.
/// `{"actions": [{"point_at": [0.02, 0.02, 0.1]}, {"wait": 200}, "clear"]}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MentorAgentScript {
    pub actions: Vec<ScriptAction>,
}

/// A script action lowered to what the client does with it.
#[derive(Debug, Clone, PartialEq)]
pub enum ScriptStep {
    Send(FeedbackMessage),
    Wait(Duration),
}

fn finite(p: &[f64; 3]) -> bool {
    p.iter().all(|v| v.is_finite())
}

impl MentorAgentScript {
    pub fn from_json(text: &str) -> Result<Self, MentorError> {
        let script: Self = serde_json::from_str(text)?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MentorError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), MentorError> {
        for (k, action) in self.actions.iter().enumerate() {
            let bad = |why: &str| Err(MentorError::Script(format!("action {k}: {why}")));
            match action {
                ScriptAction::PointAt(p) if !finite(p) => return bad("target must be finite"),
                ScriptAction::SetNeedle(pose)
                    if !(finite(&pose.position)
                        && [pose.yaw, pose.pitch, pose.roll]
                            .iter()
                            .all(|a| a.is_finite())) =>
                {
                    return bad("pose must be finite")
                }
                ScriptAction::DrawStroke(pts) if pts.len() < 2 => {
                    return bad("a stroke needs at least 2 vertices")
                }
                ScriptAction::DrawStroke(pts) if !pts.iter().all(finite) => {
                    return bad("stroke vertices must be finite")
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// One feedback message per action (one per vertex for strokes, none for
    /// waits). Each stroke gets the next stroke id starting from
    /// `first_stroke_id`. `based_on_seq` is left at 0 for the sender to fill.
    pub fn steps(&self, first_stroke_id: u16) -> Vec<ScriptStep> {
        let mut stroke_id = first_stroke_id;
        let mut out = Vec::new();
        for action in &self.actions {
            match action {
                ScriptAction::PointAt(p) => out.push(ScriptStep::Send(scripted_pointer_agent(
                    Point3::from_array(*p),
                ))),
                ScriptAction::SetNeedle(pose) => out.push(ScriptStep::Send(scripted_needle_agent(
                    &pose.to_transform(),
                ))),
                ScriptAction::DrawStroke(pts) => {
                    for p in pts {
                        let msg = FeedbackMessage::with_pose(
                            FeedbackKind::Trajectory,
                            stroke_id,
                            EulerAngles::default(),
                            Point3::from_array(*p),
                            0,
                        );
                        out.push(ScriptStep::Send(msg));
                    }
                    stroke_id = stroke_id.wrapping_add(1);
                }
                ScriptAction::Clear => out.push(ScriptStep::Send(FeedbackMessage::clear(0))),
                ScriptAction::Wait(ms) => out.push(ScriptStep::Wait(Duration::from_millis(*ms))),
            }
        }
        out
    }
}

/// Points at `target` (camera frame): `m = 1, i = 0`, zero angles.
pub fn scripted_pointer_agent(target: Point3) -> FeedbackMessage {
    FeedbackMessage::pointer(target, 0)
}

/// Places the virtual needle at `pose` (camera frame). A gimbal-locked
/// rotation is reported with roll pinned to zero.
pub fn scripted_needle_agent(pose: &RigidTransform) -> FeedbackMessage {
    let decomposition = rotation_to_euler(&pose.rotation);
    if decomposition.gimbal_locked {
        log::warn!("needle pose is gimbal-locked; sending canonical angles with roll = 0");
    }
    FeedbackMessage::with_pose(
        FeedbackKind::Needle,
        0,
        decomposition.angles,
        pose.translation,
        0,
    )
}
