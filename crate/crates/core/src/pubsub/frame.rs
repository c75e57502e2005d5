//! Wire framing.
//!
//! All integers are big-endian.
//!
//! ```text
//! 0x52 0x56 | version 0x01 | kind | u16 topic_len | topic
//!   PUB/MSG: u64 publish_ts | u32 payload_len | payload
//!   ERR:     u32 message_len | UTF-8 message
//! ```

use std::io::{self, Read};

use thiserror::Error;

use super::topic::Topic;

pub const MAGIC: [u8; 2] = [0x52, 0x56];
pub const VERSION: u8 = 0x01;
const HEADER_LEN: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameKind {
    Sub = 0x01,
    Unsub = 0x02,
    Pub = 0x03,
    Msg = 0x04,
    Err = 0x05,
}

impl FrameKind {
    pub fn from_byte(b: u8) -> Option<FrameKind> {
        Some(match b {
            0x01 => FrameKind::Sub,
            0x02 => FrameKind::Unsub,
            0x03 => FrameKind::Pub,
            0x04 => FrameKind::Msg,
            0x05 => FrameKind::Err,
            _ => return None,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("bad magic {0:02x} {1:02x}")]
    BadMagic(u8, u8),
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("unknown frame kind {0:#04x}")]
    BadKind(u8),
    #[error("truncated frame")]
    Truncated,
    #[error("empty topic")]
    EmptyTopic,
    #[error("invalid topic: {0}")]
    InvalidTopic(String),
    #[error("error message is not UTF-8")]
    InvalidMessage,
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Sub {
        topic: Topic,
    },
    Unsub {
        topic: Topic,
    },
    Pub {
        topic: Topic,
        publish_ts: u64,
        payload: Vec<u8>,
    },
    Msg {
        topic: Topic,
        publish_ts: u64,
        payload: Vec<u8>,
    },
    Err {
        topic: Topic,
        message: String,
    },
}

impl Frame {
    pub fn kind(&self) -> FrameKind {
        match self {
            Frame::Sub { .. } => FrameKind::Sub,
            Frame::Unsub { .. } => FrameKind::Unsub,
            Frame::Pub { .. } => FrameKind::Pub,
            Frame::Msg { .. } => FrameKind::Msg,
            Frame::Err { .. } => FrameKind::Err,
        }
    }

    pub fn topic(&self) -> &Topic {
        match self {
            Frame::Sub { topic }
            | Frame::Unsub { topic }
            | Frame::Pub { topic, .. }
            | Frame::Msg { topic, .. }
            | Frame::Err { topic, .. } => topic,
        }
    }
}

fn put_header(out: &mut Vec<u8>, kind: FrameKind, topic: &Topic) {
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(kind as u8);
    out.extend_from_slice(&(topic.len() as u16).to_be_bytes());
    out.extend_from_slice(topic.as_bytes());
}

/// Encodes a data frame without building a [`Frame`] first.
pub fn encode_data(kind: FrameKind, topic: &Topic, publish_ts: u64, payload: &[u8]) -> Vec<u8> {
    debug_assert!(matches!(kind, FrameKind::Pub | FrameKind::Msg));
    assert!(payload.len() <= u32::MAX as usize, "payload exceeds 4 GiB");
    let mut out = Vec::with_capacity(HEADER_LEN + topic.len() + 12 + payload.len());
    put_header(&mut out, kind, topic);
    out.extend_from_slice(&publish_ts.to_be_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    out
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    match frame {
        Frame::Sub { topic } | Frame::Unsub { topic } => {
            let mut out = Vec::with_capacity(HEADER_LEN + topic.len());
            put_header(&mut out, frame.kind(), topic);
            out
        }
        Frame::Pub {
            topic,
            publish_ts,
            payload,
        }
        | Frame::Msg {
            topic,
            publish_ts,
            payload,
        } => encode_data(frame.kind(), topic, *publish_ts, payload),
        Frame::Err { topic, message } => {
            let mut out = Vec::with_capacity(HEADER_LEN + topic.len() + 4 + message.len());
            put_header(&mut out, FrameKind::Err, topic);
            out.extend_from_slice(&(message.len() as u32).to_be_bytes());
            out.extend_from_slice(message.as_bytes());
            out
        }
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        let end = self.pos.checked_add(n).ok_or(FrameError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(FrameError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, FrameError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FrameError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FrameError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn check_preamble(magic0: u8, magic1: u8, version: u8, kind: u8) -> Result<FrameKind, FrameError> {
    if [magic0, magic1] != MAGIC {
        return Err(FrameError::BadMagic(magic0, magic1));
    }
    if version != VERSION {
        return Err(FrameError::BadVersion(version));
    }
    FrameKind::from_byte(kind).ok_or(FrameError::BadKind(kind))
}

fn parse_topic(bytes: &[u8]) -> Result<Topic, FrameError> {
    if bytes.is_empty() {
        return Err(FrameError::EmptyTopic);
    }
    let s = std::str::from_utf8(bytes).map_err(|_| FrameError::InvalidTopic("not UTF-8".into()))?;
    Topic::new(s).map_err(|e| FrameError::InvalidTopic(e.to_string()))
}

/// Decodes the frame at the start of `bytes`, returning it and the number of
/// bytes consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(Frame, usize), FrameError> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let pre = c.take(4)?;
    let kind = check_preamble(pre[0], pre[1], pre[2], pre[3])?;
    let topic_len = c.u16()? as usize;
    let topic = parse_topic(c.take(topic_len)?)?;
    let frame = match kind {
        FrameKind::Sub => Frame::Sub { topic },
        FrameKind::Unsub => Frame::Unsub { topic },
        FrameKind::Pub | FrameKind::Msg => {
            let publish_ts = c.u64()?;
            let len = c.u32()? as usize;
            let payload = c.take(len)?.to_vec();
            if kind == FrameKind::Pub {
                Frame::Pub {
                    topic,
                    publish_ts,
                    payload,
                }
            } else {
                Frame::Msg {
                    topic,
                    publish_ts,
                    payload,
                }
            }
        }
        FrameKind::Err => {
            let len = c.u32()? as usize;
            let message = std::str::from_utf8(c.take(len)?)
                .map_err(|_| FrameError::InvalidMessage)?
                .to_string();
            Frame::Err { topic, message }
        }
    };
    Ok((frame, c.pos))
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    let (frame, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(FrameError::TrailingBytes(bytes.len() - used));
    }
    Ok(frame)
}

/// Kind and topic of a frame already validated by [`read_frame`].
pub(crate) fn raw_kind_topic(raw: &[u8]) -> (FrameKind, &str) {
    let kind = FrameKind::from_byte(raw[3]).expect("validated frame");
    let len = u16::from_be_bytes([raw[4], raw[5]]) as usize;
    let topic = std::str::from_utf8(&raw[6..6 + len]).expect("validated frame");
    (kind, topic)
}

/// Reads one complete frame from a stream and returns its raw bytes.
///
/// Returns `Ok(None)` on a clean end of stream at a frame boundary. The frame
/// structure and topic are validated; payload bytes are not inspected.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, WireError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(FrameError::Truncated.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
        // Reject garbage as soon as the preamble is visible.
        if got >= 4 {
            check_preamble(header[0], header[1], header[2], header[3])?;
        }
    }
    let kind = check_preamble(header[0], header[1], header[2], header[3])?;
    let topic_len = u16::from_be_bytes([header[4], header[5]]) as usize;
    let mut raw = header.to_vec();
    read_more(r, &mut raw, topic_len)?;
    parse_topic(&raw[HEADER_LEN..])?;
    match kind {
        FrameKind::Sub | FrameKind::Unsub => {}
        FrameKind::Pub | FrameKind::Msg => {
            read_more(r, &mut raw, 12)?;
            let at = raw.len() - 4;
            let len = u32::from_be_bytes(raw[at..].try_into().unwrap()) as usize;
            read_more(r, &mut raw, len)?;
        }
        FrameKind::Err => {
            read_more(r, &mut raw, 4)?;
            let at = raw.len() - 4;
            let len = u32::from_be_bytes(raw[at..].try_into().unwrap()) as usize;
            read_more(r, &mut raw, len)?;
        }
    }
    Ok(Some(raw))
}

fn read_more<R: Read>(r: &mut R, buf: &mut Vec<u8>, n: usize) -> Result<(), WireError> {
    // Grows with the data actually received, so a bogus length cannot force a
    // large allocation up front.
    let got = r.by_ref().take(n as u64).read_to_end(buf)?;
    if got < n {
        return Err(FrameError::Truncated.into());
    }
    Ok(())
}
