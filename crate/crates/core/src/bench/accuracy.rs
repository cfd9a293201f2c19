use std::collections::HashMap;
use std::net::TcpListener;
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use crate::codec::Quality;
use crate::geometry::{
    euler_to_rotation, project_point, CameraIntrinsics, EulerAngles, Point3, RigidTransform,
};
use crate::mentor::{
    pick_along_ray, run_mentor_client, scripted_needle_agent, scripted_pointer_agent,
    FrameResponder, MentorFrame, ViewState, DEFAULT_VIEW_DISTANCE,
};
use crate::operation::{
    changed_pixel_centroid, serve, ConsoleFrame, ConsoleTrigger, DisparityMode, NeedleModel,
    OperationConfig, Pacing, SyntheticSource,
};
use crate::stereo::{gen_synthetic_scene, peg_scene, SceneSpec};
use crate::transport::FeedbackMessage;

use super::report::{summarize_accuracy, AccuracySummary, AccuracyTrial, BenchReport};
use super::{loopback_mentor, BenchError};
use super::{REFERENCE_BASELINE, REFERENCE_F_AT_640};

pub const DEFAULT_TRIALS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccuracyKind {
    /// Pointer marker centre against the target pixel.
    Pointer,
    /// Every needle-model vertex against its ground-truth projection.
    Needle,
}

impl AccuracyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AccuracyKind::Pointer => "pointer",
            AccuracyKind::Needle => "needle",
        }
    }
}

/// A named camera-frame point whose pixel is known analytically.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyTarget {
    pub name: String,
    pub point: Point3,
}

/// Resolves every named target of `scene` to its surface point. Targets whose
/// pixel ray misses the scene are left out.
pub fn scene_targets(scene: &SceneSpec) -> Vec<AccuracyTarget> {
    scene
        .targets
        .iter()
        .filter_map(|t| {
            scene.target_point(&t.name).map(|point| AccuracyTarget {
                name: t.name.clone(),
                point,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRun {
    pub summary: AccuracySummary,
    pub trials: Vec<AccuracyTrial>,
}

/// Viewer placement for trial `k`: the scene is turned and resized
/// differently each time, so picks come from varied vantage points.
fn trial_view(k: usize) -> (f64, f64, f64) {
    let yaw = ((k * 7) % 11) as f64 * 0.08 - 0.4;
    let pitch = ((k * 5) % 7) as f64 * 0.06 - 0.18;
    let scale = [1.0, 0.6, 1.5, 2.0, 0.8][k % 5];
    (yaw, pitch, scale)
}

/// Needle orientation for trial `k`, kept clear of gimbal lock.
fn trial_rotation(k: usize) -> EulerAngles {
    EulerAngles::new(
        ((k * 3) % 13) as f64 * 0.4 - 2.4,
        ((k * 7) % 9) as f64 * 0.15 - 0.6,
        ((k * 5) % 11) as f64 * 0.3 - 1.5,
    )
}

#[derive(Debug, Clone)]
struct Planned {
    trial: usize,
    target: AccuracyTarget,
}

/// Mentor agent for the accuracy protocol: per frame it orbits the scene,
/// looks at where the next target appears, picks the reconstructed point on
/// that line of sight and sends it back in the camera frame.
struct PickTarget {
    plan: Vec<Planned>,
    kind: AccuracyKind,
    next: usize,
    current: Option<usize>,
    seq_to_plan: Arc<Mutex<HashMap<u64, usize>>>,
}

impl FrameResponder for PickTarget {
    fn update_view(&mut self, _seq: u64, view: &mut ViewState) {
        self.current = (self.next < self.plan.len()).then_some(self.next);
        self.next += 1;
        if let Some(p) = self.current {
            let (yaw, pitch, scale) = trial_view(self.plan[p].trial);
            let mut orbited = view.orbited(yaw, pitch, DEFAULT_VIEW_DISTANCE);
            if orbited.set_placement(*orbited.k_o_w(), scale).is_ok() {
                *view = orbited;
            }
        }
    }

    fn on_frame(&mut self, frame: &MentorFrame<'_>) -> Vec<FeedbackMessage> {
        let Some(p) = self.current else {
            return vec![FeedbackMessage::clear(0)];
        };
        let planned = &self.plan[p];
        let seen_at = frame.view.camera_to_view(planned.target.point);
        let Some(i) = pick_along_ray(frame.view_cloud, seen_at) else {
            return vec![FeedbackMessage::clear(0)];
        };
        self.seq_to_plan
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(frame.seq, p);
        let picked = frame
            .view
            .view_to_camera(frame.view_cloud.points[i].position);
        let msg = match self.kind {
            AccuracyKind::Pointer => scripted_pointer_agent(picked),
            AccuracyKind::Needle => scripted_needle_agent(&RigidTransform::new(
                euler_to_rotation(trial_rotation(planned.trial)),
                picked,
            )),
        };
        vec![msg]
    }
}

fn pixel_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn needle_error(
    intr: &CameraIntrinsics,
    model: &NeedleModel,
    shown: &RigidTransform,
    truth: &RigidTransform,
) -> Option<f64> {
    let mut sum = 0.0;
    for (a, b) in model.posed(shown).into_iter().zip(model.posed(truth)) {
        sum += pixel_distance(project_point(intr, a).ok()?, project_point(intr, b).ok()?);
    }
    Some(sum / model.vertices().len() as f64)
}

/// Runs `trials` mentor picks over `targets` (cycled) through the full loop
/// and measures where the guidance lands on the console. Targets at or
/// behind the camera plane are skipped and flagged.
pub fn measure_reprojection_error(
    scene: &SceneSpec,
    targets: &[AccuracyTarget],
    quality: Quality,
    kind: AccuracyKind,
    trials: usize,
) -> Result<AccuracyRun, BenchError> {
    if targets.is_empty() && trials > 0 {
        return Err(BenchError::Setup("no accuracy targets".into()));
    }
    let path = quality.to_string();
    let record = |trial: usize,
                  target: &AccuracyTarget,
                  error_px: Option<f64>,
                  note: Option<String>| AccuracyTrial {
        path: path.clone(),
        kind: kind.as_str().into(),
        trial,
        target: target.name.clone(),
        error_px,
        note,
    };
    let mut results: Vec<Option<AccuracyTrial>> = vec![None; trials];
    let mut plan = Vec::new();
    for k in 0..trials {
        let target = &targets[k % targets.len()];
        if target.point.z > 0.0 && target.point.is_finite() {
            plan.push(Planned {
                trial: k,
                target: target.clone(),
            });
        } else {
            results[k] = Some(record(k, target, None, Some("target behind camera".into())));
        }
    }

    if !plan.is_empty() {
        let intr = scene.intrinsics;
        let pair = gen_synthetic_scene(scene)?;
        let (tap_tx, tap_rx) = mpsc::channel::<ConsoleFrame>();
        let needle = NeedleModel::default();
        let op_config = OperationConfig {
            quality,
            disparity: DisparityMode::GroundTruth,
            pacing: Pacing::Lockstep {
                timeout: Duration::from_secs(2),
            },
            wait_for_mentor: Some(Duration::from_secs(10)),
            linger: Duration::from_secs(2),
            needle: needle.clone(),
            console_tap: Some(tap_tx),
            ..OperationConfig::default()
        };
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?.to_string();
        let background = pair.left.clone();
        let source = SyntheticSource::from_pair(intr, pair, plan.len());
        let op = thread::spawn(move || serve(listener, Box::new(source), op_config));
        let seq_to_plan = Arc::new(Mutex::new(HashMap::new()));
        let agent = PickTarget {
            plan: plan.clone(),
            kind,
            next: 0,
            current: None,
            seq_to_plan: Arc::clone(&seq_to_plan),
        };
        let mentor = run_mentor_client(loopback_mentor(&addr), Some(Box::new(agent)));
        let op = op
            .join()
            .map_err(|_| BenchError::Setup("operation side panicked".into()))??;
        mentor?;

        // Last console render showing feedback for each frame.
        let mut shown: HashMap<usize, ConsoleFrame> = HashMap::new();
        for tap in tap_rx.try_iter() {
            if let ConsoleTrigger::Feedback {
                based_on_frame: Some(f),
            } = tap.trigger
            {
                shown.insert(f, tap);
            }
        }
        let seq_to_plan = seq_to_plan.lock().unwrap_or_else(|e| e.into_inner());
        let mut measured = vec![false; plan.len()];
        for (frame, tap) in &shown {
            let Some(p) = op
                .frames
                .get(*frame)
                .and_then(|f| f.wire_seq)
                .and_then(|s| seq_to_plan.get(&s))
            else {
                continue;
            };
            let planned = &plan[*p];
            let truth_px = project_point(&intr, planned.target.point)?;
            let error = match kind {
                AccuracyKind::Pointer => changed_pixel_centroid(&background, &tap.image)
                    .map(|c| pixel_distance(c, truth_px)),
                AccuracyKind::Needle => tap.guidance.needle.as_ref().and_then(|pose| {
                    let truth = RigidTransform::new(
                        euler_to_rotation(trial_rotation(planned.trial)),
                        planned.target.point,
                    );
                    needle_error(&intr, &needle, pose, &truth)
                }),
            };
            let note = error
                .is_none()
                .then(|| "guidance not visible on the console".to_string());
            results[planned.trial] = Some(record(planned.trial, &planned.target, error, note));
            measured[*p] = true;
        }
        for (p, planned) in plan.iter().enumerate() {
            if !measured[p] {
                results[planned.trial] = Some(record(
                    planned.trial,
                    &planned.target,
                    None,
                    Some("loop did not close".into()),
                ));
            }
        }
    }

    let trials: Vec<AccuracyTrial> = results.into_iter().flatten().collect();
    let summary = summarize_accuracy(&trials)
        .into_iter()
        .next()
        .unwrap_or(AccuracySummary {
            path: quality.to_string(),
            kind: kind.as_str().into(),
            error_px: None,
            skipped: 0,
        });
    Ok(AccuracyRun { summary, trials })
}

/// The standard protocol on the 640×512 peg scene: pointer trials on the
/// lossless path, then pointer and needle trials on `quality` (skipped when
/// that is the lossless path too). Appends to `report`.
pub fn run_accuracy_suite(
    report: &mut BenchReport,
    quality: Quality,
    trials: usize,
) -> Result<(), BenchError> {
    let intr = CameraIntrinsics::centered(640, 512, REFERENCE_F_AT_640, REFERENCE_BASELINE)?;
    let scene = peg_scene(intr, 7);
    let targets = scene_targets(&scene);
    let mut runs = vec![(Quality::Lossless, AccuracyKind::Pointer)];
    if !quality.is_lossless() {
        runs.push((quality, AccuracyKind::Pointer));
    }
    runs.push((quality, AccuracyKind::Needle));
    for (q, kind) in runs {
        let run = measure_reprojection_error(&scene, &targets, q, kind, trials)?;
        report.accuracy.push(run.summary);
        report.trials.extend(run.trials);
    }
    Ok(())
}
