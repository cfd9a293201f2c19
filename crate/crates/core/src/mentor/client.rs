use std::net::TcpStream;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use image::RgbImage;

use crate::codec::{decode_disparity_with, DecodeLimits};
use crate::geometry::{cloud_from_frame, CameraIntrinsics, DisparityMap, PointCloud};
use crate::transport::{
    session_handshake, Clock, FeedbackMessage, Incoming, Role, SessionConfig, SessionReceiver,
    SessionSender, TransportError,
};

use super::{FpsMeter, Gateway, MentorAgentScript, MentorError, ScriptStep, ViewState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 5,
            initial_backoff: Duration::from_millis(100),
            max_backoff: Duration::from_secs(2),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MentorConfig {
    pub connect: String,
    pub script: Option<MentorAgentScript>,
    /// Serve the browser console on this address.
    pub gateway: Option<String>,
    pub stats_path: Option<PathBuf>,
    pub session: SessionConfig,
    pub retry: RetryPolicy,
    /// Leave after this many frames have been processed.
    pub max_frames: Option<u64>,
    pub decode_limits: DecodeLimits,
    /// Scene placement; defaults to centring on the first cloud.
    pub initial_view: Option<ViewState>,
}

impl MentorConfig {
    pub fn new(connect: impl Into<String>) -> Self {
        Self {
            connect: connect.into(),
            script: None,
            gateway: None,
            stats_path: None,
            session: SessionConfig::default(),
            retry: RetryPolicy::default(),
            max_frames: None,
            decode_limits: DecodeLimits::default(),
            initial_view: None,
        }
    }
}

/// Everything known about one received frame once its cloud is built.
#[derive(Debug)]
pub struct MentorFrame<'a> {
    pub seq: u64,
    pub capture_timestamp_us: u64,
    pub intrinsics: &'a CameraIntrinsics,
    pub rgb: &'a RgbImage,
    pub disparity: &'a DisparityMap,
    /// Camera frame {C}.
    pub cloud: &'a PointCloud,
    /// Viewer frame {H}.
    pub view_cloud: &'a PointCloud,
    pub view: &'a ViewState,
}

/// Per-frame mentor behaviour, run on the receive path.
pub trait FrameResponder: Send {
    /// Adjust the scene placement before the frame is transformed for display.
    fn update_view(&mut self, _seq: u64, _view: &mut ViewState) {}

    /// Feedback to send for this frame; `based_on_seq` is filled in.
    fn on_frame(&mut self, frame: &MentorFrame<'_>) -> Vec<FeedbackMessage>;
}

/// Per-frame record; `received_us` is on the mentor clock, the rest are
/// durations in microseconds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MentorFrameStats {
    pub seq: u64,
    pub capture_timestamp_us: u64,
    pub disparity_stage_us: u32,
    pub encode_stage_us: u32,
    pub received_us: u64,
    pub decode_us: u64,
    /// Cloud construction plus view transform.
    pub render_us: u64,
    pub respond_us: u64,
    /// Receipt to the last feedback message written.
    pub processing_us: u64,
    pub cloud_points: usize,
    pub payload_bytes: usize,
    pub feedback_sent: u32,
}

#[derive(Debug, Clone, Default)]
pub struct MentorSummary {
    pub frames: Vec<MentorFrameStats>,
    pub frames_received: u64,
    pub clouds_built: u64,
    /// Frames that arrived but could not be decoded.
    pub frames_skipped: u64,
    /// Out-of-order frames discarded by the transport.
    pub frames_dropped_stale: u64,
    pub feedback_sent: u64,
    pub fps: Option<f64>,
    pub sessions: u64,
    pub reconnects: u64,
    pub gateway_pushed: u64,
    pub last_error: Option<String>,
    pub elapsed: Duration,
}

struct Shared {
    sender: Mutex<Option<SessionSender>>,
    latest_seq: Mutex<Option<u64>>,
    first_frame: Condvar,
    stop: AtomicBool,
    feedback_sent: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Shared {
    fn send(&self, mut msg: FeedbackMessage, based_on_seq: u64) -> Result<(), TransportError> {
        msg.based_on_seq = based_on_seq;
        let mut guard = lock(&self.sender);
        let tx = guard.as_mut().ok_or(TransportError::Closed)?;
        tx.send_feedback(&msg)?;
        self.feedback_sent.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }

    fn latest_seq(&self) -> u64 {
        lock(&self.latest_seq).unwrap_or(0)
    }

    fn wait_first_frame(&self) -> bool {
        let mut guard = lock(&self.latest_seq);
        while guard.is_none() && !self.stop.load(Ordering::SeqCst) {
            guard = self
                .first_frame
                .wait_timeout(guard, Duration::from_millis(50))
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
        guard.is_some()
    }
}

enum SessionEnd {
    Bye,
    Done,
    Lost(TransportError),
}

fn connect_with_retry(addr: &str, retry: &RetryPolicy) -> Option<TcpStream> {
    let mut backoff = retry.initial_backoff;
    for attempt in 1..=retry.attempts.max(1) {
        match TcpStream::connect(addr) {
            Ok(s) => return Some(s),
            Err(e) => {
                log::info!("connect {addr} attempt {attempt}/{}: {e}", retry.attempts);
                if attempt < retry.attempts {
                    thread::sleep(backoff);
                    backoff = (backoff * 2).min(retry.max_backoff);
                }
            }
        }
    }
    None
}

/// Connects to the operation side and processes frames until it says
/// goodbye, `max_frames` is reached, or the connection cannot be
/// re-established. Undecodable frames are skipped and counted.
pub fn run_mentor_client(
    config: MentorConfig,
    mut responder: Option<Box<dyn FrameResponder>>,
) -> Result<MentorSummary, MentorError> {
    let started = Instant::now();
    let clock = Clock::new();
    let gateway = config.gateway.as_deref().map(Gateway::bind).transpose()?;
    let shared = Arc::new(Shared {
        sender: Mutex::new(None),
        latest_seq: Mutex::new(None),
        first_frame: Condvar::new(),
        stop: AtomicBool::new(false),
        feedback_sent: AtomicU64::new(0),
    });

    let script_thread = config.script.clone().map(|script| {
        let shared = Arc::clone(&shared);
        thread::spawn(move || run_script(&shared, &script))
    });

    let mut summary = MentorSummary::default();
    let mut fps = FpsMeter::new();
    let mut view = config.initial_view;
    let result = thread::scope(|scope| -> Result<(), MentorError> {
        if let Some(gw) = &gateway {
            let shared = Arc::clone(&shared);
            scope.spawn(move || {
                while !shared.stop.load(Ordering::SeqCst) {
                    if let Some(msg) = gw.recv_feedback(Duration::from_millis(50)) {
                        if let Err(e) = shared.send(msg, shared.latest_seq()) {
                            log::warn!("console feedback not forwarded: {e}");
                        }
                    }
                }
            });
        }
        let outcome = session_loop(
            &config,
            &shared,
            &clock,
            gateway.as_ref(),
            responder.as_deref_mut(),
            &mut view,
            &mut fps,
            &mut summary,
        );
        shared.stop.store(true, Ordering::SeqCst);
        shared.first_frame.notify_all();
        outcome
    });
    if let Some(h) = script_thread {
        let _ = h.join();
    }
    if let Some(mut tx) = lock(&shared.sender).take() {
        let _ = tx.send_bye();
        tx.shutdown();
    }
    summary.feedback_sent = shared.feedback_sent.load(Ordering::SeqCst);
    summary.fps = fps.fps();
    summary.gateway_pushed = gateway.as_ref().map_or(0, Gateway::frames_pushed);
    summary.elapsed = started.elapsed();
    if let Some(path) = &config.stats_path {
        write_mentor_stats_csv(path, &summary.frames)?;
    }
    result?;
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn session_loop(
    config: &MentorConfig,
    shared: &Shared,
    clock: &Clock,
    gateway: Option<&Gateway>,
    mut responder: Option<&mut (dyn FrameResponder + 'static)>,
    view: &mut Option<ViewState>,
    fps: &mut FpsMeter,
    summary: &mut MentorSummary,
) -> Result<(), MentorError> {
    loop {
        let Some(stream) = connect_with_retry(&config.connect, &config.retry) else {
            log::info!("operation side unreachable; exiting");
            return Ok(());
        };
        let session = session_handshake(stream, Role::Mentor, None, &config.session)?;
        let intr = *session.intrinsics();
        summary.sessions += 1;
        if summary.sessions > 1 {
            summary.reconnects += 1;
        }
        let (tx, mut rx) = session.split()?;
        *lock(&shared.sender) = Some(tx);
        let end = receive_frames(
            config,
            shared,
            clock,
            gateway,
            responder.as_deref_mut(),
            view,
            fps,
            summary,
            &intr,
            &mut rx,
        );
        summary.frames_dropped_stale += rx.dropped_frames();
        match end {
            SessionEnd::Bye => {
                log::info!("operation side closed the session");
                lock(&shared.sender).take();
                return Ok(());
            }
            SessionEnd::Done => return Ok(()),
            SessionEnd::Lost(e) => {
                log::warn!("session lost: {e}; reconnecting");
                summary.last_error = Some(e.to_string());
                if let Some(tx) = lock(&shared.sender).take() {
                    tx.shutdown();
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn receive_frames(
    config: &MentorConfig,
    shared: &Shared,
    clock: &Clock,
    gateway: Option<&Gateway>,
    mut responder: Option<&mut (dyn FrameResponder + 'static)>,
    view: &mut Option<ViewState>,
    fps: &mut FpsMeter,
    summary: &mut MentorSummary,
    intr: &CameraIntrinsics,
    rx: &mut SessionReceiver,
) -> SessionEnd {
    loop {
        if config
            .max_frames
            .is_some_and(|max| summary.clouds_built >= max)
        {
            return SessionEnd::Done;
        }
        let env = match rx.recv() {
            Ok(Incoming::Frame(env)) => env,
            Ok(Incoming::Malformed {
                msg_type,
                seq,
                error,
            }) => {
                log::warn!("skipping malformed {msg_type:?} {seq}: {error}");
                summary.frames_received += 1;
                summary.frames_skipped += 1;
                continue;
            }
            Ok(Incoming::Feedback { .. }) => continue,
            Ok(Incoming::Bye) => return SessionEnd::Bye,
            Err(e) => return SessionEnd::Lost(e),
        };
        let received = Instant::now();
        let received_us = clock.now_us();
        summary.frames_received += 1;
        let payload = &env.payload;

        let t = Instant::now();
        let (rgb, disp) =
            match decode_disparity_with(&payload.rgb, &payload.ifp, config.decode_limits) {
                Ok(decoded) => decoded,
                Err(e) => {
                    log::warn!("skipping frame {}: {e}", env.seq);
                    summary.frames_skipped += 1;
                    continue;
                }
            };
        let decode_us = t.elapsed().as_micros() as u64;

        let t = Instant::now();
        let cloud = match cloud_from_frame(intr, &disp, &rgb) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("skipping frame {}: {e}", env.seq);
                summary.frames_skipped += 1;
                continue;
            }
        };
        let v = view.get_or_insert_with(|| ViewState::centered_on(&cloud));
        if let Some(r) = responder.as_deref_mut() {
            r.update_view(env.seq, v);
        }
        let view_cloud = v.transform_cloud(&cloud);
        let render_us = t.elapsed().as_micros() as u64;
        summary.clouds_built += 1;
        fps.tick_at(received);
        {
            *lock(&shared.latest_seq) = Some(env.seq);
            shared.first_frame.notify_all();
        }
        if let Some(gw) = gateway {
            gw.publish(env.seq, intr, &payload.rgb, &disp);
        }

        let t = Instant::now();
        let mut feedback_sent = 0;
        if let Some(r) = responder.as_deref_mut() {
            let frame = MentorFrame {
                seq: env.seq,
                capture_timestamp_us: payload.capture_timestamp_us,
                intrinsics: intr,
                rgb: &rgb,
                disparity: &disp,
                cloud: &cloud,
                view_cloud: &view_cloud,
                view: v,
            };
            for msg in r.on_frame(&frame) {
                match shared.send(msg, env.seq) {
                    Ok(()) => feedback_sent += 1,
                    Err(e) => return SessionEnd::Lost(e),
                }
            }
        }
        summary.frames.push(MentorFrameStats {
            seq: env.seq,
            capture_timestamp_us: payload.capture_timestamp_us,
            disparity_stage_us: payload.disparity_stage_us,
            encode_stage_us: payload.encode_stage_us,
            received_us,
            decode_us,
            render_us,
            respond_us: t.elapsed().as_micros() as u64,
            processing_us: received.elapsed().as_micros() as u64,
            cloud_points: cloud.len(),
            payload_bytes: payload.rgb.len() + payload.ifp.len(),
            feedback_sent,
        });
    }
}

fn run_script(shared: &Shared, script: &MentorAgentScript) {
    if !shared.wait_first_frame() {
        return;
    }
    for step in script.steps(1) {
        if shared.stop.load(Ordering::SeqCst) {
            return;
        }
        match step {
            ScriptStep::Wait(d) => thread::sleep(d),
            ScriptStep::Send(msg) => {
                if let Err(e) = shared.send(msg, shared.latest_seq()) {
                    log::warn!("script feedback not sent: {e}");
                }
            }
        }
    }
    log::info!("script finished");
}

/// Columns: seq, capture_us, received_us, decode_us, render_us,
/// respond_us, processing_us, cloud_points, feedback_sent.
pub fn write_mentor_stats_csv(
    path: &std::path::Path,
    frames: &[MentorFrameStats],
) -> Result<(), MentorError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "seq",
        "capture_us",
        "received_us",
        "decode_us",
        "render_us",
        "respond_us",
        "processing_us",
        "cloud_points",
        "feedback_sent",
    ])?;
    for f in frames {
        w.write_record([
            f.seq.to_string(),
            f.capture_timestamp_us.to_string(),
            f.received_us.to_string(),
            f.decode_us.to_string(),
            f.render_us.to_string(),
            f.respond_us.to_string(),
            f.processing_us.to_string(),
            f.cloud_points.to_string(),
            f.feedback_sent.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
