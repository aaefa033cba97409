//! Wire format shared by both transport backends.
//!
//! One frame per message, fields in order, integers and the timestamp
//! big-endian:
//!
//! ```text
//! "DMS1"              4 bytes  magic
//! kind                1 byte   0 data, 1 null, 2 end
//! timestamp           8 bytes  f64
//! label_len           2 bytes  u16
//! label               label_len bytes, UTF-8
//! body_len            4 bytes  u32
//! body                body_len bytes, UTF-8
//! seq                 8 bytes  u64
//! ```
//!
//! A data frame with timestamp 50.0, label "A", body "1000" is 32 bytes;
//! a null frame with empty label and body is 27.

use std::io::{self, Read};

use thiserror::Error;

use super::{MessageKind, TimestampedMessage};
use crate::time::SimTime;

pub const MAGIC: &[u8; 4] = b"DMS1";

/// Refuse bodies above this size when decoding. Real bodies are short
/// decimal strings; anything near the cap is a corrupt length field.
pub const MAX_BODY_LEN: u32 = 1 << 26;

/// Fixed overhead of a frame around its label and body.
pub const HEADER_LEN: usize = 4 + 1 + 8 + 2 + 4 + 8;

#[derive(Debug, Error, PartialEq)]
pub enum FrameError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unknown message kind {0}")]
    BadKind(u8),
    #[error("timestamp {0} is not a valid simulation time")]
    BadTimestamp(f64),
    #[error("label is not UTF-8")]
    LabelNotUtf8,
    #[error("body is not UTF-8")]
    BodyNotUtf8,
    #[error("body length {0} exceeds limit {MAX_BODY_LEN}")]
    BodyTooLong(u32),
    #[error("frame truncated in {0}")]
    Truncated(&'static str),
}

pub fn encoded_len(msg: &TimestampedMessage) -> usize {
    HEADER_LEN + msg.label.len() + msg.body.len()
}

pub fn encode(msg: &TimestampedMessage) -> Vec<u8> {
    assert!(msg.label.len() <= u16::MAX as usize, "label too long");
    assert!(msg.body.len() <= MAX_BODY_LEN as usize, "body too long");
    let mut out = Vec::with_capacity(encoded_len(msg));
    out.extend_from_slice(MAGIC);
    out.push(msg.kind as u8);
    out.extend_from_slice(&msg.timestamp.hours().to_be_bytes());
    out.extend_from_slice(&(msg.label.len() as u16).to_be_bytes());
    out.extend_from_slice(msg.label.as_bytes());
    out.extend_from_slice(&(msg.body.len() as u32).to_be_bytes());
    out.extend_from_slice(msg.body.as_bytes());
    out.extend_from_slice(&msg.seq.to_be_bytes());
    out
}

/// Decode one frame from the front of `buf`. Returns the message and the
/// number of bytes consumed.
pub fn decode(buf: &[u8]) -> Result<(TimestampedMessage, usize), FrameError> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize, what: &'static str| -> Result<&[u8], FrameError> {
        if buf.len() < *pos + n {
            return Err(FrameError::Truncated(what));
        }
        let s = &buf[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    let magic = take(&mut pos, 4, "magic")?;
    if magic != MAGIC {
        return Err(FrameError::BadMagic(magic.try_into().unwrap()));
    }
    let kind_byte = take(&mut pos, 1, "kind")?[0];
    let kind = MessageKind::from_u8(kind_byte).ok_or(FrameError::BadKind(kind_byte))?;
    let ts_bits = take(&mut pos, 8, "timestamp")?;
    let ts = f64::from_be_bytes(ts_bits.try_into().unwrap());
    if !ts.is_finite() || ts < 0.0 {
        return Err(FrameError::BadTimestamp(ts));
    }
    let label_len = u16::from_be_bytes(take(&mut pos, 2, "label length")?.try_into().unwrap());
    let label = std::str::from_utf8(take(&mut pos, label_len as usize, "label")?)
        .map_err(|_| FrameError::LabelNotUtf8)?
        .to_string();
    let body_len = u32::from_be_bytes(take(&mut pos, 4, "body length")?.try_into().unwrap());
    if body_len > MAX_BODY_LEN {
        return Err(FrameError::BodyTooLong(body_len));
    }
    let body = std::str::from_utf8(take(&mut pos, body_len as usize, "body")?)
        .map_err(|_| FrameError::BodyNotUtf8)?
        .to_string();
    let seq = u64::from_be_bytes(take(&mut pos, 8, "seq")?.try_into().unwrap());

    Ok((
        TimestampedMessage {
            kind,
            timestamp: SimTime::new(ts),
            label,
            body,
            seq,
        },
        pos,
    ))
}

/// Read exactly one frame from a byte stream. `Ok(None)` means the stream
/// ended cleanly on a frame boundary; EOF mid-frame is an error.
pub fn read_frame(r: &mut impl Read) -> Result<Option<TimestampedMessage>, FrameError> {
    // Probe the first byte separately so a clean EOF is distinguishable.
    let mut first = [0u8; 1];
    match r.read(&mut first) {
        Ok(0) => return Ok(None),
        Ok(1) => {}
        Ok(_) => unreachable!(),
        Err(e) if e.kind() == io::ErrorKind::Interrupted => return read_frame(r),
        Err(_) => return Err(FrameError::Truncated("magic")),
    }
    read_frame_after_first(first[0], r).map(Some)
}

/// Continuation of [`read_frame`] once the caller has pulled the first
/// byte off the stream itself (blocking reader loops do that to tell a
/// clean disconnect from a mid-frame one).
pub fn read_frame_after_first(
    first: u8,
    r: &mut impl Read,
) -> Result<TimestampedMessage, FrameError> {
    let mut head = [0u8; 15]; // magic(4) kind(1) timestamp(8) label_len(2)
    head[0] = first;
    read_exact_or(r, &mut head[1..], "header")?;
    // head = magic(4) kind(1) ts(8) label_len(2) body_len comes later.
    let magic: [u8; 4] = head[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    let label_len = u16::from_be_bytes(head[13..15].try_into().unwrap()) as usize;
    let mut label = vec![0u8; label_len];
    read_exact_or(r, &mut label, "label")?;
    let mut len4 = [0u8; 4];
    read_exact_or(r, &mut len4, "body length")?;
    let body_len = u32::from_be_bytes(len4);
    if body_len > MAX_BODY_LEN {
        return Err(FrameError::BodyTooLong(body_len));
    }
    let mut body = vec![0u8; body_len as usize];
    read_exact_or(r, &mut body, "body")?;
    let mut seq8 = [0u8; 8];
    read_exact_or(r, &mut seq8, "seq")?;

    let mut whole = Vec::with_capacity(HEADER_LEN + label_len + body.len());
    whole.extend_from_slice(&head);
    whole.extend_from_slice(&label);
    whole.extend_from_slice(&len4);
    whole.extend_from_slice(&body);
    whole.extend_from_slice(&seq8);
    let (msg, used) = decode(&whole)?;
    debug_assert_eq!(used, whole.len());
    Ok(msg)
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], what: &'static str) -> Result<(), FrameError> {
    r.read_exact(buf).map_err(|_| FrameError::Truncated(what))
}
