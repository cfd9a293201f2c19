use std::io::{Read, Write};

use super::TransportError;

pub const MAGIC: [u8; 4] = *b"SRM1";
pub const HEADER_LEN: usize = 25;
pub const DEFAULT_MAX_PAYLOAD: u32 = 32 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Hello = 0x01,
    Frame = 0x02,
    Feedback = 0x03,
    Bye = 0x04,
}

impl MsgType {
    pub fn from_byte(b: u8) -> Result<Self, TransportError> {
        match b {
            0x01 => Ok(MsgType::Hello),
            0x02 => Ok(MsgType::Frame),
            0x03 => Ok(MsgType::Feedback),
            0x04 => Ok(MsgType::Bye),
            other => Err(TransportError::UnknownType(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub msg_type: MsgType,
    pub seq: u64,
    pub timestamp_us: u64,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn new(msg_type: MsgType, seq: u64, timestamp_us: u64, payload: Vec<u8>) -> Self {
        Self {
            msg_type,
            seq,
            timestamp_us,
            payload,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        write_message(self, &mut out).expect("write to Vec");
        out
    }
}

/// Writes header and payload in one `write_all`; returns bytes written.
pub fn write_message(msg: &WireMessage, mut sink: impl Write) -> Result<usize, TransportError> {
    let len = u32::try_from(msg.payload.len()).map_err(|_| TransportError::Oversize {
        len: u32::MAX,
        max: u32::MAX,
    })?;
    let mut buf = Vec::with_capacity(msg.encoded_len());
    buf.extend_from_slice(&MAGIC);
    buf.push(msg.msg_type as u8);
    buf.extend_from_slice(&msg.seq.to_le_bytes());
    buf.extend_from_slice(&msg.timestamp_us.to_le_bytes());
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(&msg.payload);
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(buf.len())
}

/// Reads until `buf` is full or the stream ends; returns bytes read.
fn fill(source: &mut impl Read, buf: &mut [u8]) -> Result<usize, TransportError> {
    let mut got = 0;
    while got < buf.len() {
        match source.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(got)
}

/// Reads one message. A stream that ends cleanly before the first header
/// byte yields [`TransportError::Closed`]; anything shorter than a complete
/// message yields [`TransportError::Incomplete`]. At most `max_payload`
/// bytes are ever allocated.
pub fn read_message(
    mut source: impl Read,
    max_payload: u32,
) -> Result<WireMessage, TransportError> {
    let mut header = [0u8; HEADER_LEN];
    let got = fill(&mut source, &mut header)?;
    if got == 0 {
        return Err(TransportError::Closed);
    }
    if got >= 4 && header[..4] != MAGIC {
        return Err(TransportError::BadMagic(
            header[..4].try_into().expect("4 bytes"),
        ));
    }
    if got < HEADER_LEN {
        return Err(TransportError::Incomplete {
            expected: HEADER_LEN,
            got,
        });
    }
    let msg_type = MsgType::from_byte(header[4])?;
    let seq = u64::from_le_bytes(header[5..13].try_into().expect("8 bytes"));
    let timestamp_us = u64::from_le_bytes(header[13..21].try_into().expect("8 bytes"));
    let len = u32::from_le_bytes(header[21..25].try_into().expect("4 bytes"));
    if len > max_payload {
        return Err(TransportError::Oversize {
            len,
            max: max_payload,
        });
    }
    let mut payload = vec![0u8; len as usize];
    let got = fill(&mut source, &mut payload)?;
    if got < payload.len() {
        return Err(TransportError::Incomplete {
            expected: HEADER_LEN + len as usize,
            got: HEADER_LEN + got,
        });
    }
    Ok(WireMessage {
        msg_type,
        seq,
        timestamp_us,
        payload,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bye_is_header_only() {
        let msg = WireMessage::new(MsgType::Bye, 9, 1234, vec![]);
        let bytes = msg.to_bytes();
        assert_eq!(bytes.len(), 25);
        assert_eq!(read_message(&bytes[..], DEFAULT_MAX_PAYLOAD).unwrap(), msg);
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            read_message(&b"XXXX\x01"[..], 100),
            Err(TransportError::BadMagic(_))
        ));
        assert!(matches!(
            read_message(&b""[..], 100),
            Err(TransportError::Closed)
        ));
        assert!(matches!(
            read_message(&b"SRM1\x02\0\0"[..], 100),
            Err(TransportError::Incomplete { .. })
        ));
        let mut unknown = WireMessage::new(MsgType::Bye, 0, 0, vec![]).to_bytes();
        unknown[4] = 0x09;
        assert!(matches!(
            read_message(&unknown[..], 100),
            Err(TransportError::UnknownType(9))
        ));
    }

    #[test]
    fn oversize_rejected_before_allocation() {
        let mut bytes = WireMessage::new(MsgType::Frame, 1, 1, vec![]).to_bytes();
        bytes[21..25].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(
            read_message(&bytes[..], DEFAULT_MAX_PAYLOAD),
            Err(TransportError::Oversize { len: u32::MAX, .. })
        ));
    }

    #[test]
    fn truncated_payload() {
        let bytes = WireMessage::new(MsgType::Frame, 1, 1, vec![7; 10]).to_bytes();
        assert!(matches!(
            read_message(&bytes[..bytes.len() - 1], 100),
            Err(TransportError::Incomplete {
                expected: 35,
                got: 34
            })
        ));
    }

    #[test]
    fn consecutive_messages_share_a_stream() {
        let a = WireMessage::new(MsgType::Feedback, 1, 10, vec![1, 2, 3]);
        let b = WireMessage::new(MsgType::Bye, 2, 11, vec![]);
        let mut buf = a.to_bytes();
        buf.extend(b.to_bytes());
        let mut cur = std::io::Cursor::new(buf);
        assert_eq!(read_message(&mut cur, 100).unwrap(), a);
        assert_eq!(read_message(&mut cur, 100).unwrap(), b);
        assert!(matches!(
            read_message(&mut cur, 100),
            Err(TransportError::Closed)
        ));
    }
}
