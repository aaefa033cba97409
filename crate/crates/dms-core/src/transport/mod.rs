//! Message-queue transport.
//!
//! Every LP owns two named queues, created in its own process: a data
//! queue `pq-<lp>` for payload messages and a synchronization queue
//! `sq-<lp>` for null and end-of-stream messages. Queues are
//! single-consumer, FIFO per sender, at-most-once. Producers anywhere
//! address a queue as `host[:port]/queue-name`.
//!
//! Two backends share one message type and one wire format:
//!
//! * [`inproc`] - queues as in-memory buffers, for every-LP-in-one-process
//!   runs.
//! * [`tcp`] - a listener per LP process; senders hold one long-lived
//!   connection per receiving endpoint and stream frames back to back.
//!   Frames are routed to `pq`/`sq` by message kind on arrival, so the
//!   wire does not carry queue names.
//!
//! A run behaves identically on either backend; the sync engine only sees
//! [`TimestampedMessage`] values in per-sender FIFO order.

pub mod frame;
pub mod inproc;
pub mod tcp;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

/// What a message means to the synchronization protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    /// A batch of parts: timestamp is the arrival time at the receiver.
    Data = 0,
    /// A promise: the sender will never again send anything earlier than
    /// this timestamp on this link.
    Null = 1,
    /// End of stream: the sender is done with this link for good.
    End = 2,
}

impl MessageKind {
    pub fn from_u8(v: u8) -> Option<MessageKind> {
        Some(match v {
            0 => MessageKind::Data,
            1 => MessageKind::Null,
            2 => MessageKind::End,
            _ => return None,
        })
    }
}

/// The unit of exchange between LPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestampedMessage {
    pub kind: MessageKind,
    pub timestamp: SimTime,
    /// Sending LP id. Receivers use it to find the right input channel.
    pub label: String,
    /// Decimal unit count for data messages, empty for null/end.
    pub body: String,
    /// Strictly increasing per (sender, destination queue).
    pub seq: u64,
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("queue {0:?} does not exist")]
    UnknownQueue(String),
    #[error("queue {0:?} already has a consumer")]
    AlreadyBound(String),
    #[error("queue {0:?} is closed")]
    Closed(String),
    #[error("cannot reach {addr} after {attempts} attempts: {last}")]
    Unreachable {
        addr: String,
        attempts: u32,
        last: String,
    },
    #[error("malformed frame: {0}")]
    Malformed(#[from] frame::FrameError),
    #[error("bad queue address {text:?}: {msg}")]
    BadAddress { text: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that can push a message toward a destination queue.
pub trait MessageSender: Send + Sync {
    fn send(&self, msg: &TimestampedMessage) -> Result<(), TransportError>;
}

/// Name of an LP's data queue.
pub fn data_queue_name(lp: &str) -> String {
    format!("pq-{lp}")
}

/// Name of an LP's synchronization queue.
pub fn sync_queue_name(lp: &str) -> String {
    format!("sq-{lp}")
}

/// A parsed queue address: `host[:port]/queue`.
///
/// The legacy direct form `DIRECT=OS:<host>\private$\<queue>` is accepted
/// as an alias and normalizes to the same structure (it carries no port).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueAddress {
    pub host: String,
    pub port: Option<u16>,
    pub queue: String,
}

impl QueueAddress {
    pub fn parse(text: &str) -> Result<QueueAddress, TransportError> {
        let bad = |msg: &str| TransportError::BadAddress {
            text: text.to_string(),
            msg: msg.to_string(),
        };
        let trimmed = text.trim();
        // Alias: DIRECT=OS:host\private$\queue (case-insensitive keyword,
        // spaces around '=' tolerated).
        if let Some(rest) = strip_direct_prefix(trimmed) {
            let mut parts = rest.split('\\').filter(|p| !p.is_empty());
            let host = parts.next().ok_or_else(|| bad("missing host"))?;
            let marker = parts.next().ok_or_else(|| bad("missing private$ segment"))?;
            if !marker.eq_ignore_ascii_case("private$") {
                return Err(bad("expected private$ segment"));
            }
            let queue = parts.next().ok_or_else(|| bad("missing queue name"))?;
            if parts.next().is_some() {
                return Err(bad("trailing path segments"));
            }
            return QueueAddress::assemble(host, None, queue, bad);
        }
        let (loc, queue) = trimmed.split_once('/').ok_or_else(|| bad("missing '/'"))?;
        match loc.rsplit_once(':') {
            Some((host, port)) => {
                let port: u16 = port.parse().map_err(|_| bad("bad port"))?;
                QueueAddress::assemble(host, Some(port), queue, bad)
            }
            None => QueueAddress::assemble(loc, None, queue, bad),
        }
    }

    fn assemble(
        host: &str,
        port: Option<u16>,
        queue: &str,
        bad: impl Fn(&str) -> TransportError,
    ) -> Result<QueueAddress, TransportError> {
        let host = host.trim();
        let queue = queue.trim();
        if host.is_empty() {
            return Err(bad("empty host"));
        }
        if queue.is_empty() {
            return Err(bad("empty queue name"));
        }
        if queue.contains(['/', '\\']) {
            return Err(bad("queue name must not contain path separators"));
        }
        Ok(QueueAddress {
            host: host.to_string(),
            port,
            queue: queue.to_string(),
        })
    }

    /// `host/queue` or `host:port/queue`; parsing this form yields back
    /// the identical address.
    pub fn canonical(&self) -> String {
        match self.port {
            Some(p) => format!("{}:{}/{}", self.host, p, self.queue),
            None => format!("{}/{}", self.host, self.queue),
        }
    }
}

fn strip_direct_prefix(text: &str) -> Option<&str> {
    let upper = text.to_ascii_uppercase();
    let direct = upper.find("DIRECT")?;
    if direct != 0 {
        return None;
    }
    let after = &text["DIRECT".len()..];
    let after = after.trim_start();
    let after = after.strip_prefix('=')?;
    let after = after.trim_start();
    let rest = if after.len() >= 3 && after[..3].eq_ignore_ascii_case("OS:") {
        &after[3..]
    } else {
        return None;
    };
    Some(rest)
}

impl fmt::Display for QueueAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.canonical())
    }
}
