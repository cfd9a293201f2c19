use std::collections::HashMap;
use std::net::{SocketAddr, TcpListener};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, SyncSender};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use image::RgbImage;

use crate::codec::{encode_frame, split_ifp, Quality};
use crate::geometry::{CameraIntrinsics, DisparityMap};
use crate::stereo::{BlockMatchParams, BlockMatchSource, DisparitySource, GroundTruthSource};
use crate::transport::{
    session_handshake, Clock, FramePayload, Incoming, LatestSlot, Role, SessionConfig,
    SessionReceiver, SessionSender, TransportError,
};

use super::{render_overlay, FrameSource, GuidanceState, NeedleModel, OperationError};

/// How captures are scheduled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pacing {
    /// Fixed capture cadence, independent of the mentor.
    Fixed { fps: f64 },
    /// Capture the next frame only once feedback for the previous one has
    /// been rendered (or `timeout` passes). Keeps exactly one frame in flight,
    /// which isolates per-frame latency from queueing.
    Lockstep { timeout: Duration },
    /// As fast as the source and disparity stage allow.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DisparityMode {
    GroundTruth,
    BlockMatch(BlockMatchParams),
}

impl DisparityMode {
    fn build(self) -> Box<dyn DisparitySource> {
        match self {
            DisparityMode::GroundTruth => Box::new(GroundTruthSource),
            DisparityMode::BlockMatch(params) => Box::new(BlockMatchSource { params }),
        }
    }
}

/// What caused a console refresh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsoleTrigger {
    NewFrame,
    /// Feedback arrived that was based on the given frame (if known).
    Feedback {
        based_on_frame: Option<usize>,
    },
}

/// One refresh of the console view.
#[derive(Debug, Clone)]
pub struct ConsoleFrame {
    pub frame: usize,
    pub trigger: ConsoleTrigger,
    pub image: RgbImage,
    pub guidance: GuidanceState,
}

#[derive(Debug, Clone)]
pub struct OperationConfig {
    pub quality: Quality,
    pub disparity: DisparityMode,
    pub pacing: Pacing,
    /// Directory for annotated console frames (`frame_NNNNNN.png`).
    pub out_dir: Option<PathBuf>,
    pub stats_path: Option<PathBuf>,
    pub session: SessionConfig,
    /// Hold off the first capture until a mentor is connected, up to this long.
    pub wait_for_mentor: Option<Duration>,
    /// After the last frame, how long to wait for outstanding feedback.
    pub linger: Duration,
    pub needle: NeedleModel,
    pub console_tap: Option<Sender<ConsoleFrame>>,
}

impl Default for OperationConfig {
    fn default() -> Self {
        Self {
            quality: Quality::Lossy(90),
            disparity: DisparityMode::GroundTruth,
            pacing: Pacing::Fixed { fps: 30.0 },
            out_dir: None,
            stats_path: None,
            session: SessionConfig::default(),
            wait_for_mentor: None,
            linger: Duration::from_millis(500),
            needle: NeedleModel::default(),
            console_tap: None,
        }
    }
}

/// Per-frame record; times are microseconds on the service clock.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameStats {
    pub seq: u64,
    pub capture_us: u64,
    pub disparity_us: u64,
    pub encode_us: u64,
    pub payload_bytes: usize,
    /// Wire sequence number, if the frame was sent.
    pub wire_seq: Option<u64>,
    pub sent_at_us: Option<u64>,
    pub send_us: Option<u64>,
    /// First feedback based on this frame, measured from the start of its send.
    pub feedback_rtt_us: Option<u64>,
    /// Duration of the console render that first showed that feedback.
    pub overlay_us: Option<u64>,
    /// Capture to the end of that render.
    pub closed_loop_us: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct OperationSummary {
    pub frames: Vec<FrameStats>,
    pub frames_sent: u64,
    /// Frames overwritten in the send slot before they could go out.
    pub frames_replaced: u64,
    pub feedback_received: u64,
    pub feedback_malformed: u64,
    pub mentor_sessions: u64,
    pub handshake_rtt: Option<Duration>,
    pub elapsed: Duration,
    /// Set when the run ended because of an error rather than exhaustion.
    pub failure: Option<String>,
}

#[derive(Default)]
struct Ledger {
    frames: Vec<FrameStats>,
    by_wire_seq: HashMap<u64, usize>,
}

struct Shared {
    clock: Clock,
    ledger: Mutex<Ledger>,
    sender: Mutex<Option<(u64, SessionSender)>>,
    connected: Condvar,
    guidance: Mutex<GuidanceState>,
    closed_upto: Mutex<Option<usize>>,
    loop_closed: Condvar,
    stop: AtomicBool,
    feedback_received: AtomicU64,
    feedback_malformed: AtomicU64,
    sessions: AtomicU64,
    frames_sent: AtomicU64,
    handshake_rtt: Mutex<Option<Duration>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Shared {
    fn is_connected(&self) -> bool {
        lock(&self.sender).is_some()
    }

    fn wait_connected(&self, timeout: Duration) -> bool {
        let guard = lock(&self.sender);
        let (guard, _) = self
            .connected
            .wait_timeout_while(guard, timeout, |s| s.is_none())
            .unwrap_or_else(|e| e.into_inner());
        guard.is_some()
    }

    fn mark_closed(&self, frame: usize) {
        let mut c = lock(&self.closed_upto);
        if c.is_none_or(|prev| frame > prev) {
            *c = Some(frame);
        }
        self.loop_closed.notify_all();
    }

    fn wait_closed(&self, frame: usize, timeout: Duration) -> bool {
        let guard = lock(&self.closed_upto);
        let (guard, _) = self
            .loop_closed
            .wait_timeout_while(guard, timeout, |c| c.is_none_or(|v| v < frame))
            .unwrap_or_else(|e| e.into_inner());
        guard.is_some_and(|v| v >= frame)
    }
}

enum ConsoleEvent {
    Frame { index: usize, image: Arc<RgbImage> },
    Feedback { based_on_frame: Option<usize> },
}

struct Captured {
    index: usize,
    left: Arc<RgbImage>,
    disparity: DisparityMap,
}

/// Binds `listen` and runs [`serve`].
pub fn run_operation_service(
    listen: &str,
    source: Box<dyn FrameSource>,
    config: OperationConfig,
) -> Result<OperationSummary, OperationError> {
    let listener =
        TcpListener::bind(listen).map_err(|e| OperationError::Bind(listen.to_string(), e))?;
    serve(listener, source, config)
}

/// Streams every source frame and renders mentor guidance until the source
/// is exhausted. Mentors may connect at any time; a later connection
/// replaces an earlier one. Runtime failures end the run early but still
/// produce a summary (with `failure` set) and stats.
pub fn serve(
    listener: TcpListener,
    mut source: Box<dyn FrameSource>,
    config: OperationConfig,
) -> Result<OperationSummary, OperationError> {
    let intr = *source.intrinsics();
    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let local_addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;
    let shared = Arc::new(Shared {
        clock: Clock::new(),
        ledger: Mutex::default(),
        sender: Mutex::new(None),
        connected: Condvar::new(),
        guidance: Mutex::default(),
        closed_upto: Mutex::new(None),
        loop_closed: Condvar::new(),
        stop: AtomicBool::new(false),
        feedback_received: AtomicU64::new(0),
        feedback_malformed: AtomicU64::new(0),
        sessions: AtomicU64::new(0),
        frames_sent: AtomicU64::new(0),
        handshake_rtt: Mutex::new(None),
    });
    let started = Instant::now();

    let (console_tx, console_rx) = mpsc::channel::<ConsoleEvent>();
    let console = {
        let shared = Arc::clone(&shared);
        let config = config.clone();
        thread::Builder::new()
            .name("console".into())
            .spawn(move || console_loop(&shared, console_rx, intr, &config))?
    };
    let receivers: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::default();
    let acceptor = {
        let shared = Arc::clone(&shared);
        let console_tx = console_tx.clone();
        let receivers = Arc::clone(&receivers);
        let session_cfg = config.session.clone();
        thread::Builder::new()
            .name("acceptor".into())
            .spawn(move || {
                accept_loop(
                    listener,
                    &shared,
                    intr,
                    &session_cfg,
                    console_tx,
                    &receivers,
                )
            })?
    };
    log::info!("operation service on {local_addr}");

    let slot: Arc<LatestSlot<(usize, FramePayload)>> = Arc::new(LatestSlot::new());
    let (encode_tx, encode_rx) = mpsc::sync_channel::<Captured>(1);
    let encoder = {
        let shared = Arc::clone(&shared);
        let slot = Arc::clone(&slot);
        let quality = config.quality;
        thread::Builder::new()
            .name("encoder".into())
            .spawn(move || encode_loop(&shared, encode_rx, &slot, quality))?
    };
    let sender = {
        let shared = Arc::clone(&shared);
        let slot = Arc::clone(&slot);
        thread::Builder::new()
            .name("sender".into())
            .spawn(move || send_loop(&shared, &slot))?
    };

    if let Some(wait) = config.wait_for_mentor {
        if !shared.wait_connected(wait) {
            log::warn!("no mentor connected within {wait:?}; streaming anyway");
        }
    }

    let failure = capture_loop(&shared, source.as_mut(), &config, &console_tx, &encode_tx).err();
    if let Some(e) = &failure {
        log::error!("capture stopped: {e}");
    }

    drop(encode_tx);
    let _ = encoder.join();
    slot.close();
    let _ = sender.join();

    let last_sent = lock(&shared.ledger)
        .frames
        .iter()
        .rposition(|f| f.wire_seq.is_some());
    if let Some(last) = last_sent {
        if shared.is_connected() {
            shared.wait_closed(last, config.linger);
        }
    }
    shared.stop.store(true, Ordering::SeqCst);
    if let Some((_, mut tx)) = lock(&shared.sender).take() {
        let _ = tx.send_bye();
        tx.shutdown();
    }
    let _ = acceptor.join();
    for h in std::mem::take(&mut *lock(&receivers)) {
        let _ = h.join();
    }
    drop(console_tx);
    let console_result = console.join().unwrap_or(Ok(()));

    let frames = std::mem::take(&mut lock(&shared.ledger).frames);
    if let Some(path) = &config.stats_path {
        write_stats_csv(path, &frames)?;
    }
    console_result?;
    let handshake_rtt = *lock(&shared.handshake_rtt);
    Ok(OperationSummary {
        frames_sent: shared.frames_sent.load(Ordering::SeqCst),
        frames_replaced: slot.replaced(),
        feedback_received: shared.feedback_received.load(Ordering::SeqCst),
        feedback_malformed: shared.feedback_malformed.load(Ordering::SeqCst),
        mentor_sessions: shared.sessions.load(Ordering::SeqCst),
        handshake_rtt,
        elapsed: started.elapsed(),
        failure: failure.map(|e| e.to_string()),
        frames,
    })
}

fn capture_loop(
    shared: &Shared,
    source: &mut dyn FrameSource,
    config: &OperationConfig,
    console_tx: &Sender<ConsoleEvent>,
    encode_tx: &SyncSender<Captured>,
) -> Result<(), OperationError> {
    let mut disparity = config.disparity.build();
    let start = Instant::now();
    for index in 0usize.. {
        match config.pacing {
            Pacing::Fixed { fps } => {
                let due = start + Duration::from_secs_f64(index as f64 / fps.max(1e-3));
                if let Some(wait) = due.checked_duration_since(Instant::now()) {
                    thread::sleep(wait);
                }
            }
            Pacing::Lockstep { timeout }
                if index > 0
                    && shared.is_connected()
                    && !shared.wait_closed(index - 1, timeout) =>
            {
                log::debug!("frame {} loop did not close within {timeout:?}", index - 1);
            }
            _ => {}
        }
        let capture_us = shared.clock.now_us();
        let Some(frame) = source.next_frame()? else {
            return Ok(());
        };
        let t = Instant::now();
        let disp = disparity.disparity(&frame)?;
        let disparity_us = t.elapsed().as_micros() as u64;
        lock(&shared.ledger).frames.push(FrameStats {
            seq: index as u64,
            capture_us,
            disparity_us,
            ..FrameStats::default()
        });
        let left = Arc::new(frame.left);
        let _ = console_tx.send(ConsoleEvent::Frame {
            index,
            image: Arc::clone(&left),
        });
        if encode_tx
            .send(Captured {
                index,
                left,
                disparity: disp,
            })
            .is_err()
        {
            return Err(OperationError::Pipeline("encoder stopped".into()));
        }
    }
    Ok(())
}

fn encode_loop(
    shared: &Shared,
    rx: Receiver<Captured>,
    slot: &LatestSlot<(usize, FramePayload)>,
    quality: Quality,
) {
    for captured in rx {
        let t = Instant::now();
        let encoded = split_ifp(&captured.disparity)
            .and_then(|ifp| encode_frame(&captured.left, &ifp, quality));
        let encode_us = t.elapsed().as_micros() as u64;
        let encoded = match encoded {
            Ok(e) => e,
            Err(e) => {
                log::error!("frame {} not encoded: {e}", captured.index);
                continue;
            }
        };
        let payload = {
            let mut ledger = lock(&shared.ledger);
            let stats = &mut ledger.frames[captured.index];
            stats.encode_us = encode_us;
            stats.payload_bytes = encoded.total_bytes();
            FramePayload {
                capture_timestamp_us: stats.capture_us,
                disparity_stage_us: stats.disparity_us.min(u32::MAX as u64) as u32,
                encode_stage_us: encode_us.min(u32::MAX as u64) as u32,
                rgb: encoded.rgb_payload,
                ifp: encoded.ifp_payload,
            }
        };
        if slot.put((captured.index, payload)).is_some() {
            log::debug!("send slot full; dropped an older frame");
        }
    }
}

fn send_loop(shared: &Shared, slot: &LatestSlot<(usize, FramePayload)>) {
    while let Some((index, payload)) = slot.take() {
        let mut guard = lock(&shared.sender);
        let Some((session_id, tx)) = guard.as_mut() else {
            continue;
        };
        let session_id = *session_id;
        let wire_seq = tx.next_seq();
        let sent_at_us = shared.clock.now_us();
        {
            let mut ledger = lock(&shared.ledger);
            ledger.by_wire_seq.insert(wire_seq, index);
            ledger.frames[index].sent_at_us = Some(sent_at_us);
        }
        let t = Instant::now();
        match tx.send_frame(&payload) {
            Ok(seq) => {
                debug_assert_eq!(seq, wire_seq);
                let send_us = t.elapsed().as_micros() as u64;
                shared.frames_sent.fetch_add(1, Ordering::SeqCst);
                let mut ledger = lock(&shared.ledger);
                ledger.frames[index].wire_seq = Some(seq);
                ledger.frames[index].send_us = Some(send_us);
            }
            Err(e) => {
                log::warn!("mentor session {session_id} lost while sending: {e}");
                {
                    let mut ledger = lock(&shared.ledger);
                    ledger.by_wire_seq.remove(&wire_seq);
                    ledger.frames[index].sent_at_us = None;
                }
                tx.shutdown();
                *guard = None;
            }
        }
    }
}

fn accept_loop(
    listener: TcpListener,
    shared: &Arc<Shared>,
    intr: CameraIntrinsics,
    session_cfg: &SessionConfig,
    console_tx: Sender<ConsoleEvent>,
    receivers: &Mutex<Vec<JoinHandle<()>>>,
) {
    while !shared.stop.load(Ordering::SeqCst) {
        let (stream, peer) = match listener.accept() {
            Ok(conn) => conn,
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(10));
                continue;
            }
            Err(e) => {
                log::error!("accept failed: {e}");
                thread::sleep(Duration::from_millis(100));
                continue;
            }
        };
        if let Err(e) = stream.set_nonblocking(false) {
            log::warn!("{peer}: {e}");
            continue;
        }
        match establish(stream, peer, shared, intr, session_cfg) {
            Ok(rx) => {
                let session_id = shared.sessions.load(Ordering::SeqCst);
                let shared = Arc::clone(shared);
                let console_tx = console_tx.clone();
                let handle = thread::Builder::new()
                    .name(format!("feedback-{session_id}"))
                    .spawn(move || feedback_loop(&shared, session_id, rx, &console_tx));
                match handle {
                    Ok(h) => lock(receivers).push(h),
                    Err(e) => log::error!("cannot start feedback receiver: {e}"),
                }
            }
            Err(e) => log::warn!("handshake with {peer} failed: {e}"),
        }
    }
}

fn establish(
    stream: std::net::TcpStream,
    peer: SocketAddr,
    shared: &Shared,
    intr: CameraIntrinsics,
    cfg: &SessionConfig,
) -> Result<SessionReceiver, TransportError> {
    let session = session_handshake(stream, Role::Operation, Some(&intr), cfg)?;
    log::info!(
        "mentor {peer} connected, handshake rtt {:?}",
        session.handshake_rtt()
    );
    *lock(&shared.handshake_rtt) = session.handshake_rtt();
    let (tx, rx) = session.split()?;
    let id = shared.sessions.fetch_add(1, Ordering::SeqCst) + 1;
    let mut guard = lock(&shared.sender);
    if let Some((old, previous)) = guard.replace((id, tx)) {
        log::info!("mentor session {old} replaced");
        previous.shutdown();
    }
    shared.connected.notify_all();
    Ok(rx)
}

fn feedback_loop(
    shared: &Shared,
    session_id: u64,
    mut rx: SessionReceiver,
    console_tx: &Sender<ConsoleEvent>,
) {
    loop {
        match rx.recv() {
            Ok(Incoming::Feedback { message, .. }) => {
                let now = shared.clock.now_us();
                lock(&shared.guidance).apply(&message, now);
                shared.feedback_received.fetch_add(1, Ordering::SeqCst);
                let based_on_frame = {
                    let mut ledger = lock(&shared.ledger);
                    let index = ledger.by_wire_seq.get(&message.based_on_seq).copied();
                    if let Some(stats) = index.map(|i| &mut ledger.frames[i]) {
                        if stats.feedback_rtt_us.is_none() {
                            stats.feedback_rtt_us = stats.sent_at_us.map(|s| now.saturating_sub(s));
                        }
                    }
                    index
                };
                let _ = console_tx.send(ConsoleEvent::Feedback { based_on_frame });
            }
            Ok(Incoming::Malformed { error, .. }) => {
                shared.feedback_malformed.fetch_add(1, Ordering::SeqCst);
                log::warn!("malformed message from mentor: {error}");
            }
            Ok(Incoming::Frame(_)) => log::warn!("mentor sent a FRAME; ignored"),
            Ok(Incoming::Bye) => {
                log::info!("mentor session {session_id} said goodbye");
                break;
            }
            Err(TransportError::Closed) => break,
            Err(e) => {
                log::warn!("mentor session {session_id}: {e}");
                break;
            }
        }
    }
    let mut guard = lock(&shared.sender);
    if guard.as_ref().is_some_and(|(id, _)| *id == session_id) {
        if let Some((_, tx)) = guard.take() {
            tx.shutdown();
        }
    }
}

fn console_loop(
    shared: &Shared,
    events: Receiver<ConsoleEvent>,
    intr: CameraIntrinsics,
    config: &OperationConfig,
) -> Result<(), OperationError> {
    let mut current: Option<(usize, Arc<RgbImage>, RgbImage)> = None;
    let mut write_err: Option<OperationError> = None;
    let mut flush = |shown: &Option<(usize, Arc<RgbImage>, RgbImage)>| {
        if let (Some(dir), Some((index, _, image))) = (&config.out_dir, shown) {
            let path = dir.join(format!("frame_{index:06}.png"));
            if let Err(e) = image.save(&path) {
                log::error!("{}: {e}", path.display());
                write_err.get_or_insert(OperationError::Source(format!("{}: {e}", path.display())));
            }
        }
    };
    for event in events {
        let (index, base, trigger) = match event {
            ConsoleEvent::Frame { index, image } => {
                flush(&current);
                (index, image, ConsoleTrigger::NewFrame)
            }
            ConsoleEvent::Feedback { based_on_frame } => match &current {
                Some((index, base, _)) => (
                    *index,
                    Arc::clone(base),
                    ConsoleTrigger::Feedback { based_on_frame },
                ),
                None => continue,
            },
        };
        let guidance = lock(&shared.guidance).clone();
        let t = Instant::now();
        let rendered = render_overlay(&base, &guidance, &intr, &config.needle);
        let done_us = shared.clock.now_us();
        if let ConsoleTrigger::Feedback {
            based_on_frame: Some(f),
        } = trigger
        {
            let newly_closed = {
                let mut ledger = lock(&shared.ledger);
                let stats = &mut ledger.frames[f];
                let fresh = stats.closed_loop_us.is_none();
                if fresh {
                    stats.overlay_us = Some(t.elapsed().as_micros() as u64);
                    stats.closed_loop_us = Some(done_us.saturating_sub(stats.capture_us));
                }
                fresh
            };
            if newly_closed {
                shared.mark_closed(f);
            }
        }
        if let Some(tap) = &config.console_tap {
            let _ = tap.send(ConsoleFrame {
                frame: index,
                trigger,
                image: rendered.clone(),
                guidance,
            });
        }
        current = Some((index, base, rendered));
    }
    flush(&current);
    write_err.map_or(Ok(()), Err)
}

fn opt(v: Option<u64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Columns: seq, capture_us, disparity_us, encode_us, send_us,
/// feedback_rtt_us. Unsent frames and frames without feedback leave the
/// corresponding cells empty.
pub fn write_stats_csv(
    path: &std::path::Path,
    frames: &[FrameStats],
) -> Result<(), OperationError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "seq",
        "capture_us",
        "disparity_us",
        "encode_us",
        "send_us",
        "feedback_rtt_us",
    ])?;
    for f in frames {
        w.write_record([
            f.seq.to_string(),
            f.capture_us.to_string(),
            f.disparity_us.to_string(),
            f.encode_us.to_string(),
            opt(f.send_us),
            opt(f.feedback_rtt_us),
        ])?;
    }
    w.flush()?;
    Ok(())
}
