use std::collections::HashMap;
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use crate::codec::Quality;
use crate::geometry::{CameraIntrinsics, Point3};
use crate::mentor::{
    pick_along_ray, run_mentor_client, FrameResponder, MentorFrame, MentorFrameStats,
};
use crate::operation::{
    serve, DisparityMode, FrameStats, OperationConfig, Pacing, SyntheticSource,
};
use crate::stereo::{gen_synthetic_scene, peg_scene, BlockMatchParams};
use crate::transport::FeedbackMessage;

use super::report::{summarize_stages, BenchReport, ResolutionReport, StageTiming};
use super::{loopback_mentor, BenchError, Summary};

/// The resolution ladder, largest first.
pub const PAPER_RESOLUTIONS: [(u32, u32); 5] =
    [(1280, 720), (960, 540), (640, 480), (480, 360), (320, 240)];

/// Focal length (px) at 640 columns for the bench camera; scales with width.
pub const REFERENCE_F_AT_640: f64 = 500.0;
pub const REFERENCE_BASELINE: f64 = 0.005;
const SCENE_SEED: u64 = 7;
/// Nearest depth the disparity search must cover (m).
const MIN_DEPTH: f64 = 0.08;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub quality: Quality,
    pub frames: usize,
    /// Frames with a complete loop below which a resolution is annotated.
    pub min_frames: usize,
    /// Disparity is block-matched by default; `false` uses ground truth.
    pub block_match: bool,
    /// Longest wait for one frame's feedback before capturing the next.
    pub loop_timeout: Duration,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            quality: Quality::Lossy(90),
            frames: 100,
            min_frames: 100,
            block_match: true,
            loop_timeout: Duration::from_secs(2),
        }
    }
}

/// Answers every frame with a pointer at the point straight ahead of the
/// viewer, so each frame closes the loop with a realistic pick.
struct PickAhead;

impl FrameResponder for PickAhead {
    fn on_frame(&mut self, frame: &MentorFrame<'_>) -> Vec<FeedbackMessage> {
        let msg = match pick_along_ray(frame.view_cloud, Point3::new(0.0, 0.0, 1.0)) {
            Some(i) => FeedbackMessage::pointer(frame.cloud.points[i].position, 0),
            None => FeedbackMessage::clear(0),
        };
        vec![msg]
    }
}

/// Runs `frames` frames per resolution; failures become annotations on the
/// affected resolution rather than errors.
pub fn run_benchmark(resolutions: &[(u32, u32)], frames: usize, quality: Quality) -> BenchReport {
    let config = BenchConfig {
        quality,
        frames,
        min_frames: frames,
        ..BenchConfig::default()
    };
    run_benchmark_with(resolutions, &config)
}

/// [`run_benchmark`] with every setting exposed.
pub fn run_benchmark_with(resolutions: &[(u32, u32)], config: &BenchConfig) -> BenchReport {
    let mut report = BenchReport {
        quality: config.quality.to_string(),
        min_frames: config.min_frames,
        ..BenchReport::default()
    };
    for &(w, h) in resolutions {
        let (res, timings) = match run_resolution(w, h, config) {
            Ok(r) => r,
            Err(e) => (
                ResolutionReport {
                    width: w,
                    height: h,
                    failures: vec![e.to_string()],
                    ..ResolutionReport::default()
                },
                Vec::new(),
            ),
        };
        log::info!(
            "{w}x{h}: {} frames measured, closed loop {:?} ms, fps {:?}",
            res.frames_measured,
            res.stages.as_ref().map(|s| s.closed_loop_ms.mean),
            res.mentor_fps
        );
        report.resolutions.push(res);
        report.timings.extend(timings);
    }
    report.no_data = report.resolutions.iter().all(|r| r.frames_measured == 0);
    report
}

/// One closed-loop session at `width`×`height` on the peg scene.
pub fn run_resolution(
    width: u32,
    height: u32,
    config: &BenchConfig,
) -> Result<(ResolutionReport, Vec<StageTiming>), BenchError> {
    let mut res = ResolutionReport {
        width,
        height,
        ..ResolutionReport::default()
    };
    if config.frames == 0 {
        return Ok((res, Vec::new()));
    }
    let intr = CameraIntrinsics::centered(width, height, REFERENCE_F_AT_640, REFERENCE_BASELINE)?;
    let pair = gen_synthetic_scene(&peg_scene(intr, SCENE_SEED))?;
    let disparity = if config.block_match {
        DisparityMode::BlockMatch(BlockMatchParams::for_min_depth(&intr, MIN_DEPTH)?)
    } else {
        DisparityMode::GroundTruth
    };
    let op_config = OperationConfig {
        quality: config.quality,
        disparity,
        pacing: Pacing::Lockstep {
            timeout: config.loop_timeout,
        },
        wait_for_mentor: Some(Duration::from_secs(10)),
        linger: config.loop_timeout,
        ..OperationConfig::default()
    };
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?.to_string();
    let source = SyntheticSource::from_pair(intr, pair, config.frames);
    let op = thread::spawn(move || serve(listener, Box::new(source), op_config));
    let mentor = run_mentor_client(loopback_mentor(&addr), Some(Box::new(PickAhead)));
    let op = op
        .join()
        .map_err(|_| BenchError::Setup("operation side panicked".into()))?;

    let op = match op {
        Ok(s) => s,
        Err(e) => {
            res.failures.push(format!("operation side: {e}"));
            return Ok((res, Vec::new()));
        }
    };
    res.frames_captured = op.frames.len();
    if let Some(f) = &op.failure {
        res.failures.push(format!("operation side: {f}"));
    }
    let mentor = match mentor {
        Ok(m) => m,
        Err(e) => {
            res.failures.push(format!("mentor side: {e}"));
            return Ok((res, Vec::new()));
        }
    };
    if let Some(e) = &mentor.last_error {
        res.failures.push(format!("mentor side: {e}"));
    }
    res.mentor_fps = mentor.fps;

    let timings = join_records(width, height, &op.frames, &mentor.frames);
    res.frames_measured = timings.len();
    if timings.len() < config.min_frames {
        res.failures.push(format!(
            "only {} of the required {} frames closed the loop",
            timings.len(),
            config.min_frames
        ));
    }
    res.stages = summarize_stages(&timings);
    let sizes: Vec<f64> = timings.iter().map(|t| t.payload_bytes as f64).collect();
    res.payload_bytes = Summary::of(&sizes);
    res.slack_ms = timings
        .iter()
        .map(|t| t.stage_sum_us() as f64 - t.closed_loop_us as f64)
        .fold(0.0, f64::max)
        / 1000.0;
    Ok((res, timings))
}

/// Pairs operation-side and mentor-side records by wire sequence number.
/// Only frames whose loop closed contribute.
fn join_records(
    width: u32,
    height: u32,
    op: &[FrameStats],
    mentor: &[MentorFrameStats],
) -> Vec<StageTiming> {
    let by_seq: HashMap<u64, &MentorFrameStats> = mentor.iter().map(|m| (m.seq, m)).collect();
    op.iter()
        .filter_map(|f| {
            let m = by_seq.get(&f.wire_seq?)?;
            let rtt = f.feedback_rtt_us?;
            let one_way = rtt.saturating_sub(m.processing_us) / 2;
            Some(StageTiming {
                width,
                height,
                frame: f.seq,
                disparity_us: f.disparity_us,
                encode_us: f.encode_us,
                transmit_us: one_way,
                decode_us: m.decode_us,
                render_us: m.render_us,
                feedback_transmit_us: one_way,
                overlay_us: f.overlay_us?,
                closed_loop_us: f.closed_loop_us?,
                payload_bytes: f.payload_bytes as u64,
            })
        })
        .collect()
}
