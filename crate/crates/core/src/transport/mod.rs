//! Length-prefixed binary protocol over TCP.
//!
//! Every message is `magic "SRM1" | type u8 | seq u64 | timestamp_us u64 |
//! payload_len u32 | payload`, all integers little-endian.

mod messages;
mod session;
mod slot;
mod wire;

pub use messages::{
    FeedbackKind, FeedbackMessage, FramePayload, HelloPayload, Role, FEEDBACK_LEN, HELLO_LEN,
};
pub use session::{
    session_handshake, Clock, FrameEnvelope, Incoming, Session, SessionConfig, SessionReceiver,
    SessionSender, DEFAULT_PORT, PROTOCOL_VERSION,
};
pub use slot::LatestSlot;
pub use wire::{
    read_message, write_message, MsgType, WireMessage, DEFAULT_MAX_PAYLOAD, HEADER_LEN, MAGIC,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("payload of {len} bytes exceeds limit {max}")]
    Oversize { len: u32, max: u32 },
    #[error("stream ended after {got} of {expected} bytes")]
    Incomplete { expected: usize, got: usize },
    #[error("connection closed")]
    Closed,
    #[error("malformed {kind} payload: {reason}")]
    Payload { kind: &'static str, reason: String },
    #[error("protocol version mismatch: local {local}, peer {peer}")]
    VersionMismatch { local: u16, peer: u16 },
    #[error("role collision: both ends are {0:?}")]
    RoleCollision(Role),
    #[error("handshake: {0}")]
    Handshake(String),
    #[error("timed out")]
    Timeout,
    #[error(transparent)]
    Io(std::io::Error),
}

impl From<std::io::Error> for TransportError {
    fn from(e: std::io::Error) -> Self {
        use std::io::ErrorKind::*;
        match e.kind() {
            WouldBlock | TimedOut => TransportError::Timeout,
            UnexpectedEof | ConnectionReset | ConnectionAborted | BrokenPipe => {
                TransportError::Closed
            }
            _ => TransportError::Io(e),
        }
    }
}
