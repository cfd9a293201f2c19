use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use telementor::codec::Quality;
use telementor::geometry::{CameraIntrinsics, Point3};
use telementor::mentor::{
    run_mentor_client, MentorAgentScript, MentorConfig, RetryPolicy, ScriptAction,
};
use telementor::operation::{
    serve, ConsoleTrigger, DisparityMode, OperationConfig, OperationSummary, Pacing,
    SyntheticSource,
};
use telementor::stereo::{gen_synthetic_scene, peg_scene, StereoPair};

fn small_scene() -> (CameraIntrinsics, StereoPair) {
    let intr = CameraIntrinsics::centered(160, 128, 500.0, 0.005).unwrap();
    (intr, gen_synthetic_scene(&peg_scene(intr, 7)).unwrap())
}

fn start_operation(
    frames: usize,
    config: OperationConfig,
) -> (String, thread::JoinHandle<OperationSummary>, StereoPair) {
    let (intr, pair) = small_scene();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let source = SyntheticSource::from_pair(intr, pair.clone(), frames);
    let handle = thread::spawn(move || serve(listener, Box::new(source), config).unwrap());
    (addr, handle, pair)
}

fn mentor_config(addr: &str) -> MentorConfig {
    MentorConfig {
        retry: RetryPolicy {
            attempts: 20,
            initial_backoff: Duration::from_millis(20),
            max_backoff: Duration::from_millis(200),
        },
        ..MentorConfig::new(addr)
    }
}

fn paced(fps: f64) -> OperationConfig {
    OperationConfig {
        pacing: Pacing::Fixed { fps },
        wait_for_mentor: Some(Duration::from_secs(10)),
        ..OperationConfig::default()
    }
}

#[test]
fn passive_mentor_builds_every_cloud() {
    let (addr, op, pair) = start_operation(100, paced(40.0));
    let mentor = run_mentor_client(mentor_config(&addr), None).unwrap();
    let op = op.join().unwrap();
    assert_eq!(op.frames.len(), 100);
    assert_eq!(op.frames_replaced, 0);
    assert_eq!(op.frames_sent, 100);
    assert_eq!(mentor.clouds_built, 100);
    assert_eq!(mentor.feedback_sent, 0);
    assert_eq!(mentor.frames_skipped, 0);
    let valid = pair.disparity.valid_count();
    assert!(mentor.frames.iter().all(|f| f.cloud_points == valid));
    assert!(mentor.fps.unwrap() > 30.0);
}

#[test]
fn scripted_pointer_reaches_console() {
    let (tap_tx, tap_rx) = mpsc::channel();
    let config = OperationConfig {
        console_tap: Some(tap_tx),
        ..paced(30.0)
    };
    let (addr, op, _) = start_operation(30, config);
    let script = MentorAgentScript {
        actions: vec![ScriptAction::PointAt([0.02, 0.02, 0.1])],
    };
    let mentor = run_mentor_client(
        MentorConfig {
            script: Some(script),
            ..mentor_config(&addr)
        },
        None,
    )
    .unwrap();
    let op = op.join().unwrap();
    assert_eq!(mentor.feedback_sent, 1);
    assert_eq!(op.feedback_received, 1);
    let shown: Vec<_> = tap_rx
        .try_iter()
        .filter(|c| matches!(c.trigger, ConsoleTrigger::Feedback { .. }))
        .collect();
    assert_eq!(shown.len(), 1);
    let p = shown[0].guidance.pointer.unwrap();
    assert_eq!(
        (p.x, p.y, p.z),
        (0.02f32 as f64, 0.02f32 as f64, 0.1f32 as f64)
    );
}

#[test]
fn clear_removes_overlay_from_later_frames() {
    let out = tempfile::tempdir().unwrap();
    let config = OperationConfig {
        out_dir: Some(out.path().to_path_buf()),
        ..paced(20.0)
    };
    let (addr, op, pair) = start_operation(40, config);
    let script = MentorAgentScript {
        actions: vec![
            ScriptAction::PointAt([0.0, 0.0, 0.1]),
            ScriptAction::Wait(400),
            ScriptAction::Clear,
        ],
    };
    run_mentor_client(
        MentorConfig {
            script: Some(script),
            ..mentor_config(&addr)
        },
        None,
    )
    .unwrap();
    let op = op.join().unwrap();
    assert_eq!(op.feedback_received, 2);
    let frames: Vec<image::RgbImage> = (0..40)
        .map(|k| {
            image::open(out.path().join(format!("frame_{k:06}.png")))
                .unwrap()
                .to_rgb8()
        })
        .collect();
    let first_marked = frames
        .iter()
        .position(|f| *f != pair.left)
        .expect("pointer never shown");
    let last_marked = frames.iter().rposition(|f| *f != pair.left).unwrap();
    assert!(last_marked < 39, "overlay persisted to the end");
    assert!(frames[first_marked..=last_marked]
        .iter()
        .all(|f| *f != pair.left));
    assert!(frames[last_marked + 1..].iter().all(|f| *f == pair.left));
}

#[test]
fn unconnected_service_outputs_clean_frames_and_stats() {
    let out = tempfile::tempdir().unwrap();
    let stats = out.path().join("stats.csv");
    let config = OperationConfig {
        out_dir: Some(out.path().to_path_buf()),
        stats_path: Some(stats.clone()),
        pacing: Pacing::Free,
        ..OperationConfig::default()
    };
    let (_addr, op, pair) = start_operation(100, config);
    let op = op.join().unwrap();
    assert_eq!(op.frames.len(), 100);
    assert_eq!(op.frames_sent, 0);
    for k in 0..100 {
        let img = image::open(out.path().join(format!("frame_{k:06}.png")))
            .unwrap()
            .to_rgb8();
        assert_eq!(img, pair.left, "frame {k}");
    }
    let text = std::fs::read_to_string(stats).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("seq,capture_us,disparity_us,encode_us,send_us,feedback_rtt_us")
    );
    assert_eq!(lines.count(), 100);
}

#[test]
fn fixed_pacing_holds_cadence_without_mentor() {
    let config = OperationConfig {
        pacing: Pacing::Fixed { fps: 25.0 },
        ..OperationConfig::default()
    };
    let (_addr, op, _) = start_operation(26, config);
    let op = op.join().unwrap();
    let span = (op.frames[25].capture_us - op.frames[0].capture_us) as f64 / 1e6;
    let fps = 25.0 / span;
    assert!((fps - 25.0).abs() / 25.0 < 0.05, "{fps}");
}

#[test]
fn lockstep_loop_records_every_stage() {
    struct Pointer;
    impl telementor::mentor::FrameResponder for Pointer {
        fn on_frame(
            &mut self,
            _f: &telementor::mentor::MentorFrame<'_>,
        ) -> Vec<telementor::transport::FeedbackMessage> {
            vec![telementor::mentor::scripted_pointer_agent(Point3::new(
                0.0, 0.0, 0.1,
            ))]
        }
    }
    let out = tempfile::tempdir().unwrap();
    let stats = out.path().join("stats.csv");
    let config = OperationConfig {
        pacing: Pacing::Lockstep {
            timeout: Duration::from_secs(2),
        },
        disparity: DisparityMode::BlockMatch(Default::default()),
        quality: Quality::Lossy(90),
        stats_path: Some(stats.clone()),
        wait_for_mentor: Some(Duration::from_secs(10)),
        ..OperationConfig::default()
    };
    let (addr, op, _) = start_operation(20, config);
    let mentor = run_mentor_client(mentor_config(&addr), Some(Box::new(Pointer))).unwrap();
    let op = op.join().unwrap();
    assert_eq!(mentor.clouds_built, 20);
    for f in &op.frames {
        assert!(
            f.send_us.is_some() && f.feedback_rtt_us.is_some() && f.closed_loop_us.is_some(),
            "{f:?}"
        );
        assert!(f.closed_loop_us.unwrap() >= f.disparity_us + f.encode_us);
    }
    let rows = std::fs::read_to_string(stats).unwrap();
    for line in rows.lines().skip(1) {
        assert!(line.split(',').all(|cell| !cell.is_empty()), "{line}");
    }
}

#[test]
fn mentor_gives_up_cleanly_without_operation() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    drop(listener);
    let config = MentorConfig {
        retry: RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(10),
            max_backoff: Duration::from_millis(20),
        },
        ..MentorConfig::new(addr)
    };
    let summary = run_mentor_client(config, None).unwrap();
    assert_eq!(summary.sessions, 0);
    assert_eq!(summary.clouds_built, 0);
}
