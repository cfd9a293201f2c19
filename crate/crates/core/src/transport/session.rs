use std::io::BufReader;
use std::net::{Shutdown, TcpStream};
use std::time::{Duration, Instant};

use crate::geometry::CameraIntrinsics;

use super::messages::{FeedbackMessage, FramePayload, HelloPayload, Role};
use super::wire::{read_message, write_message, MsgType, WireMessage, DEFAULT_MAX_PAYLOAD};
use super::TransportError;

pub const PROTOCOL_VERSION: u16 = 1;
pub const DEFAULT_PORT: u16 = 7421;

/// Sender-monotonic microsecond clock. Copies share the same epoch.
#[derive(Debug, Clone, Copy)]
pub struct Clock {
    epoch: Instant,
}

impl Clock {
    pub fn new() -> Self {
        Self {
            epoch: Instant::now(),
        }
    }

    pub fn now_us(&self) -> u64 {
        self.epoch.elapsed().as_micros() as u64
    }
}

impl Default for Clock {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub version: u16,
    pub max_payload: u32,
    pub handshake_timeout: Duration,
    pub disparity_prescale: f32,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            version: PROTOCOL_VERSION,
            max_payload: DEFAULT_MAX_PAYLOAD,
            handshake_timeout: Duration::from_secs(5),
            disparity_prescale: 1.0,
        }
    }
}

#[derive(Debug)]
pub struct Session {
    stream: TcpStream,
    role: Role,
    local: HelloPayload,
    peer: HelloPayload,
    intrinsics: CameraIntrinsics,
    rtt: Option<Duration>,
    clock: Clock,
    max_payload: u32,
}

fn send_hello(
    stream: &mut TcpStream,
    hello: &HelloPayload,
    clock: &Clock,
) -> Result<(), TransportError> {
    let msg = WireMessage::new(MsgType::Hello, 0, clock.now_us(), hello.encode());
    write_message(&msg, stream).map(|_| ())
}

fn recv_hello(stream: &mut TcpStream, max_payload: u32) -> Result<HelloPayload, TransportError> {
    let msg = read_message(&mut *stream, max_payload)?;
    if msg.msg_type != MsgType::Hello {
        return Err(TransportError::Handshake(format!(
            "expected HELLO, got {:?}",
            msg.msg_type
        )));
    }
    HelloPayload::decode(&msg.payload)
}

fn check_peer(local: &HelloPayload, peer: &HelloPayload) -> Result<(), TransportError> {
    if peer.version != local.version {
        return Err(TransportError::VersionMismatch {
            local: local.version,
            peer: peer.version,
        });
    }
    if peer.role == local.role {
        return Err(TransportError::RoleCollision(local.role));
    }
    Ok(())
}

/// Exchanges HELLO on a fresh connection.
///
/// The operation side speaks first and times the reply, which gives the
/// session's round-trip estimate. The mentor side listens first, answers
/// with the operation's calibration echoed back, and adopts it. Either side
/// gives up after `config.handshake_timeout` without a HELLO.
pub fn session_handshake(
    mut stream: TcpStream,
    role: Role,
    intrinsics: Option<&CameraIntrinsics>,
    config: &SessionConfig,
) -> Result<Session, TransportError> {
    let clock = Clock::new();
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(config.handshake_timeout))?;

    let (local, peer, intrinsics, rtt) = match role {
        Role::Operation => {
            let intr = intrinsics.ok_or_else(|| {
                TransportError::Handshake("operation side needs calibration".into())
            })?;
            if intr.width > u16::MAX as u32 || intr.height > u16::MAX as u32 {
                return Err(TransportError::Handshake(
                    "image dimensions exceed 65535".into(),
                ));
            }
            let local = HelloPayload::new(config.version, role, intr, config.disparity_prescale);
            let started = Instant::now();
            send_hello(&mut stream, &local, &clock)?;
            let peer = recv_hello(&mut stream, config.max_payload)?;
            let rtt = started.elapsed();
            check_peer(&local, &peer)?;
            (local, peer, *intr, Some(rtt))
        }
        Role::Mentor => {
            let peer = recv_hello(&mut stream, config.max_payload)?;
            let mut local = peer;
            local.version = config.version;
            local.role = role;
            // Reply before checking so a mismatched peer learns about it too.
            send_hello(&mut stream, &local, &clock)?;
            check_peer(&local, &peer)?;
            (local, peer, peer.intrinsics()?, None)
        }
    };

    stream.set_read_timeout(None)?;
    log::debug!(
        "session established as {role:?}, peer v{} rtt {rtt:?}",
        peer.version
    );
    Ok(Session {
        stream,
        role,
        local,
        peer,
        intrinsics,
        rtt,
        clock,
        max_payload: config.max_payload,
    })
}

impl Session {
    pub fn role(&self) -> Role {
        self.role
    }

    pub fn local_hello(&self) -> &HelloPayload {
        &self.local
    }

    pub fn peer_hello(&self) -> &HelloPayload {
        &self.peer
    }

    /// Calibration in force for this session (the operation side's).
    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    /// Handshake round trip; only the side that spoke first can time it.
    pub fn handshake_rtt(&self) -> Option<Duration> {
        self.rtt
    }

    pub fn clock(&self) -> Clock {
        self.clock
    }

    pub fn split(self) -> Result<(SessionSender, SessionReceiver), TransportError> {
        let read_half = self.stream.try_clone()?;
        Ok((
            SessionSender {
                stream: self.stream,
                next_seq: 1,
                clock: self.clock,
                bytes_sent: 0,
            },
            SessionReceiver {
                reader: BufReader::with_capacity(1 << 16, read_half),
                max_payload: self.max_payload,
                last_frame_seq: None,
                dropped_frames: 0,
            },
        ))
    }
}

/// Write half. Assigns strictly increasing sequence numbers starting at 1.
#[derive(Debug)]
pub struct SessionSender {
    stream: TcpStream,
    next_seq: u64,
    clock: Clock,
    bytes_sent: u64,
}

impl SessionSender {
    fn send(&mut self, msg_type: MsgType, payload: Vec<u8>) -> Result<u64, TransportError> {
        let seq = self.next_seq;
        let msg = WireMessage::new(msg_type, seq, self.clock.now_us(), payload);
        self.bytes_sent += write_message(&msg, &mut self.stream)? as u64;
        self.next_seq += 1;
        Ok(seq)
    }

    pub fn send_frame(&mut self, frame: &FramePayload) -> Result<u64, TransportError> {
        self.send(MsgType::Frame, frame.encode())
    }

    pub fn send_feedback(&mut self, msg: &FeedbackMessage) -> Result<u64, TransportError> {
        msg.validate()?;
        self.send(MsgType::Feedback, msg.encode())
    }

    pub fn send_bye(&mut self) -> Result<u64, TransportError> {
        self.send(MsgType::Bye, Vec::new())
    }

    /// Sequence number the next message will carry.
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    pub fn clock(&self) -> Clock {
        self.clock
    }

    /// Closes both directions, unblocking a receiver parked in `recv`.
    pub fn shutdown(&self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameEnvelope {
    pub seq: u64,
    pub timestamp_us: u64,
    pub payload: FramePayload,
}

#[derive(Debug)]
pub enum Incoming {
    Frame(FrameEnvelope),
    Feedback {
        seq: u64,
        timestamp_us: u64,
        message: FeedbackMessage,
    },
    /// Framing was intact but the payload was not; the stream stays in sync.
    Malformed {
        msg_type: MsgType,
        seq: u64,
        error: TransportError,
    },
    Bye,
}

#[derive(Debug)]
pub struct SessionReceiver {
    reader: BufReader<TcpStream>,
    max_payload: u32,
    last_frame_seq: Option<u64>,
    dropped_frames: u64,
}

impl SessionReceiver {
    /// Blocks for the next deliverable message. Stale or duplicate frames
    /// are skipped and counted in [`dropped_frames`](Self::dropped_frames).
    pub fn recv(&mut self) -> Result<Incoming, TransportError> {
        loop {
            let msg = read_message(&mut self.reader, self.max_payload)?;
            let WireMessage {
                msg_type,
                seq,
                timestamp_us,
                payload,
            } = msg;
            let malformed = |error| {
                Ok(Incoming::Malformed {
                    msg_type,
                    seq,
                    error,
                })
            };
            match msg_type {
                MsgType::Frame => {
                    if self.last_frame_seq.is_some_and(|last| seq <= last) {
                        self.dropped_frames += 1;
                        log::debug!("dropping out-of-order frame {seq}");
                        continue;
                    }
                    self.last_frame_seq = Some(seq);
                    return match FramePayload::decode(&payload) {
                        Ok(payload) => Ok(Incoming::Frame(FrameEnvelope {
                            seq,
                            timestamp_us,
                            payload,
                        })),
                        Err(e) => malformed(e),
                    };
                }
                MsgType::Feedback => {
                    return match FeedbackMessage::decode(&payload) {
                        Ok(message) => Ok(Incoming::Feedback {
                            seq,
                            timestamp_us,
                            message,
                        }),
                        Err(e) => malformed(e),
                    };
                }
                MsgType::Bye => return Ok(Incoming::Bye),
                MsgType::Hello => {
                    return malformed(TransportError::Handshake("HELLO after handshake".into()));
                }
            }
        }
    }

    pub fn dropped_frames(&self) -> u64 {
        self.dropped_frames
    }

    pub fn set_timeout(&self, timeout: Option<Duration>) -> Result<(), TransportError> {
        Ok(self.reader.get_ref().set_read_timeout(timeout)?)
    }
}
