//! WebSocket bridge for the browser console.
//!
//! After the first frame the server sends one text message with the scene
//! calibration:
//! `{"type":"meta","width":W,"height":H,"f":..,"b":..,"cx":..,"cy":..}`.
//! Every decoded frame is then pushed as one binary message, little-endian:
//!
//! ```text
//! "SRMG" | seq u64 | width u16 | height u16 | f f32 | b f32 | cx f32 | cy f32
//!        | rgb_len u32 | rgb bytes (JPEG, or PNG on the lossless path)
//!        | disparity u16 × width·height, row-major, value = round(d·256), 0 = invalid
//! ```
//!
//! Clients send feedback as JSON text
//! `{"m":1,"i":0,"stroke_id":0,"yaw":0,"pitch":0,"roll":0,"x":0,"y":0,"z":0.1}`;
//! each is answered with `{"ok":true,"based_on_seq":N}` or
//! `{"ok":false,"error":"..."}`.

use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::Deserialize;
use tungstenite::{Message, WebSocket};

use crate::geometry::{CameraIntrinsics, DisparityMap};
use crate::transport::FeedbackMessage;

use super::MentorError;

pub const GATEWAY_MAGIC: [u8; 4] = *b"SRMG";
pub const GATEWAY_HEADER_LEN: usize = 36;

/// JSON feedback document from the console; every field is required.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UiFeedback {
    pub m: u8,
    pub i: u8,
    pub stroke_id: u16,
    pub yaw: f32,
    pub pitch: f32,
    pub roll: f32,
    pub x: f32,
    pub y: f32,
    pub z: f32,
}

impl UiFeedback {
    pub fn parse(text: &str) -> Result<FeedbackMessage, MentorError> {
        let ui: UiFeedback = serde_json::from_str(text)?;
        let msg = ui.to_message(0);
        msg.validate()?;
        Ok(msg)
    }

    pub fn to_message(self, based_on_seq: u64) -> FeedbackMessage {
        let UiFeedback {
            m,
            i,
            stroke_id,
            yaw,
            pitch,
            roll,
            x,
            y,
            z,
        } = self;
        FeedbackMessage {
            m,
            i,
            stroke_id,
            yaw,
            pitch,
            roll,
            x,
            y,
            z,
            based_on_seq,
        }
    }
}

/// Serialises one frame push. The RGB payload is forwarded untouched.
pub fn encode_gateway_frame(
    seq: u64,
    intr: &CameraIntrinsics,
    rgb: &[u8],
    disp: &DisparityMap,
) -> Vec<u8> {
    let (w, h) = disp.dimensions();
    let mut out = Vec::with_capacity(GATEWAY_HEADER_LEN + rgb.len() + 2 * (w * h) as usize);
    out.extend_from_slice(&GATEWAY_MAGIC);
    out.extend_from_slice(&seq.to_le_bytes());
    out.extend_from_slice(&(w as u16).to_le_bytes());
    out.extend_from_slice(&(h as u16).to_le_bytes());
    for v in [intr.f, intr.b, intr.cx, intr.cy] {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.extend_from_slice(&(rgb.len() as u32).to_le_bytes());
    out.extend_from_slice(rgb);
    for (&d, &ok) in disp.values().iter().zip(disp.mask()) {
        let q = if ok {
            (d as f64 * 256.0).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Parsed frame push, for clients and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct GatewayFrame {
    pub seq: u64,
    pub width: u16,
    pub height: u16,
    pub calibration: [f32; 4],
    pub rgb: Vec<u8>,
    pub disparity: Vec<u16>,
}

pub fn decode_gateway_frame(bytes: &[u8]) -> Result<GatewayFrame, MentorError> {
    let bad = |why: &str| MentorError::Gateway(format!("frame push: {why}"));
    if bytes.len() < GATEWAY_HEADER_LEN || bytes[..4] != GATEWAY_MAGIC {
        return Err(bad("bad header"));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let seq = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes"));
    let (width, height) = (u16_at(12), u16_at(14));
    let calibration = [f32_at(16), f32_at(20), f32_at(24), f32_at(28)];
    let rgb_len = u32::from_le_bytes(bytes[32..36].try_into().expect("4 bytes")) as usize;
    let rgb_end = GATEWAY_HEADER_LEN
        .checked_add(rgb_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("rgb overruns message"))?;
    let n = width as usize * height as usize;
    if bytes.len() - rgb_end != 2 * n {
        return Err(bad("disparity size mismatch"));
    }
    let disparity = bytes[rgb_end..]
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    Ok(GatewayFrame {
        seq,
        width,
        height,
        calibration,
        rgb: bytes[GATEWAY_HEADER_LEN..rgb_end].to_vec(),
        disparity,
    })
}

#[derive(Default)]
struct Latest {
    version: u64,
    seq: u64,
    push: Option<Arc<Vec<u8>>>,
    meta: Option<String>,
}

struct Hub {
    latest: Mutex<Latest>,
    fresh: Condvar,
    feedback: Mutex<Sender<FeedbackMessage>>,
    stop: AtomicBool,
    pushed: AtomicU64,
    accepted: AtomicU64,
    rejected: AtomicU64,
}

impl Hub {
    fn wait_newer(
        &self,
        seen: u64,
        timeout: Duration,
    ) -> Option<(u64, Arc<Vec<u8>>, Option<String>)> {
        let guard = self.latest.lock().unwrap_or_else(|e| e.into_inner());
        let (guard, _) = self
            .fresh
            .wait_timeout_while(guard, timeout, |l| {
                l.version <= seen && !self.stop.load(Ordering::SeqCst)
            })
            .unwrap_or_else(|e| e.into_inner());
        if guard.version > seen {
            guard
                .push
                .clone()
                .map(|p| (guard.version, p, guard.meta.clone()))
        } else {
            None
        }
    }

    fn latest_seq(&self) -> u64 {
        self.latest.lock().unwrap_or_else(|e| e.into_inner()).seq
    }
}

/// Running gateway server.
pub struct Gateway {
    hub: Arc<Hub>,
    addr: SocketAddr,
    feedback: Mutex<Receiver<FeedbackMessage>>,
    server: Option<JoinHandle<()>>,
}

/// Binds the console gateway on `listen`.
pub fn run_gateway(listen: &str) -> Result<Gateway, MentorError> {
    Gateway::bind(listen)
}

impl Gateway {
    pub fn bind(listen: &str) -> Result<Gateway, MentorError> {
        let listener = TcpListener::bind(listen)?;
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let (tx, rx) = mpsc::channel();
        let hub = Arc::new(Hub {
            latest: Mutex::default(),
            fresh: Condvar::new(),
            feedback: Mutex::new(tx),
            stop: AtomicBool::new(false),
            pushed: AtomicU64::new(0),
            accepted: AtomicU64::new(0),
            rejected: AtomicU64::new(0),
        });
        let server = {
            let hub = Arc::clone(&hub);
            thread::Builder::new()
                .name("gateway".into())
                .spawn(move || serve(listener, hub))?
        };
        log::info!("console gateway on ws://{addr}");
        Ok(Gateway {
            hub,
            addr,
            feedback: Mutex::new(rx),
            server: Some(server),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Makes `disp`/`rgb` the frame pushed to every console.
    pub fn publish(
        &self,
        seq: u64,
        intr: &CameraIntrinsics,
        rgb_payload: &[u8],
        disp: &DisparityMap,
    ) {
        let push = Arc::new(encode_gateway_frame(seq, intr, rgb_payload, disp));
        let mut latest = self.hub.latest.lock().unwrap_or_else(|e| e.into_inner());
        if latest.meta.is_none() {
            latest.meta = Some(
                serde_json::json!({
                    "type": "meta", "width": intr.width, "height": intr.height,
                    "f": intr.f, "b": intr.b, "cx": intr.cx, "cy": intr.cy,
                })
                .to_string(),
            );
        }
        latest.version += 1;
        latest.seq = seq;
        latest.push = Some(push);
        self.hub.fresh.notify_all();
    }

    /// Validated console feedback, oldest first, waiting up to `timeout`.
    pub fn recv_feedback(&self, timeout: Duration) -> Option<FeedbackMessage> {
        self.feedback
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .recv_timeout(timeout)
            .ok()
    }

    /// Binary frame pushes delivered so far (summed over consoles).
    pub fn frames_pushed(&self) -> u64 {
        self.hub.pushed.load(Ordering::SeqCst)
    }

    pub fn feedback_accepted(&self) -> u64 {
        self.hub.accepted.load(Ordering::SeqCst)
    }

    pub fn feedback_rejected(&self) -> u64 {
        self.hub.rejected.load(Ordering::SeqCst)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.hub.stop.store(true, Ordering::SeqCst);
        self.hub.fresh.notify_all();
        if let Some(h) = self.server.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        self.stop();
    }
}

fn serve(listener: TcpListener, hub: Arc<Hub>) {
    let mut clients: Vec<JoinHandle<()>> = Vec::new();
    while !hub.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let hub = Arc::clone(&hub);
                match thread::Builder::new()
                    .name(format!("console-{peer}"))
                    .spawn(move || {
                        if let Err(e) = console_session(stream, &hub) {
                            log::info!("console {peer} ended: {e}");
                        }
                    }) {
                    Ok(h) => clients.push(h),
                    Err(e) => log::error!("cannot serve console {peer}: {e}"),
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(10))
            }
            Err(e) => {
                log::error!("gateway accept: {e}");
                thread::sleep(Duration::from_millis(100));
            }
        }
        clients.retain(|h| !h.is_finished());
    }
    for h in clients {
        let _ = h.join();
    }
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut))
}

fn console_session(stream: TcpStream, hub: &Hub) -> Result<(), MentorError> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream)
        .map_err(|e| MentorError::Gateway(format!("websocket handshake: {e}")))?;
    ws.get_ref()
        .set_read_timeout(Some(Duration::from_millis(2)))?;
    let ws_err = |e: tungstenite::Error| MentorError::Gateway(e.to_string());
    let mut seen = 0u64;
    let mut meta_sent = false;
    while !hub.stop.load(Ordering::SeqCst) {
        if let Some((version, push, meta)) = hub.wait_newer(seen, Duration::from_millis(5)) {
            if let (false, Some(meta)) = (meta_sent, meta) {
                ws.send(Message::text(meta)).map_err(ws_err)?;
                meta_sent = true;
            }
            ws.send(Message::binary(push.as_ref().clone()))
                .map_err(ws_err)?;
            hub.pushed.fetch_add(1, Ordering::SeqCst);
            seen = version;
        }
        let reply = match ws.read() {
            Ok(Message::Text(text)) => Some(match UiFeedback::parse(text.as_str()) {
                Ok(mut msg) => {
                    msg.based_on_seq = hub.latest_seq();
                    let sent = hub
                        .feedback
                        .lock()
                        .unwrap_or_else(|e| e.into_inner())
                        .send(msg);
                    hub.accepted.fetch_add(1, Ordering::SeqCst);
                    if sent.is_err() {
                        log::warn!("console feedback has no receiver");
                    }
                    serde_json::json!({"ok": true, "based_on_seq": msg.based_on_seq})
                }
                Err(e) => {
                    hub.rejected.fetch_add(1, Ordering::SeqCst);
                    serde_json::json!({"ok": false, "error": e.to_string()})
                }
            }),
            Ok(Message::Binary(_)) => {
                hub.rejected.fetch_add(1, Ordering::SeqCst);
                Some(
                    serde_json::json!({"ok": false, "error": "feedback must be a JSON text message"}),
                )
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => None,
            Err(e) if is_timeout(&e) => None,
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break,
            Err(e) => return Err(ws_err(e)),
        };
        if let Some(reply) = reply {
            ws.send(Message::text(reply.to_string())).map_err(ws_err)?;
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    Ok(())
}
