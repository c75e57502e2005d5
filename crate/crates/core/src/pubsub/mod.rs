//! Reliable topic-based publish/subscribe.
//!
//! A single [`Broker`] per network routes every `PUB` on a topic as a `MSG` to
//! each current subscriber of exactly that topic. Delivery is reliable and
//! keeps everything: nothing is dropped, and when a subscriber connection
//! falls `high_watermark` messages behind, the broker stops reading from the
//! publishers feeding it until it catches up.
//!
//! Clients talk to the broker through the [`Transport`] trait, implemented by
//! [`TcpClient`] and by the in-process [`Loopback`] hub. Both honour the same
//! contract:
//!
//! * `publish` enqueues exactly one message; a dead link is reported as an
//!   error on the next call.
//! * `subscribe` returns once the subscription is active at the broker, so a
//!   message published afterwards (from any client) is delivered.
//! * Messages from one publisher on one topic arrive in publish order.
//! * A client may be shared between threads; publishing and subscribing are
//!   internally synchronized. A [`Subscription`] is read by one thread at a time.

mod broker;
mod client;
pub mod frame;
mod loopback;
mod topic;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use crossbeam_channel::{Receiver, RecvTimeoutError, TryRecvError};
use thiserror::Error;

pub use broker::{broker_run, Broker, QosConfig};
pub use client::TcpClient;
pub use frame::{decode_frame, encode_frame, Frame, FrameError, FrameKind};
pub use loopback::{Loopback, LoopbackClient};
pub use topic::{parse_topic_list, Topic, TopicError, MAX_TOPIC_LEN};

pub const DEFAULT_PORT: u16 = 7447;
pub const ENDPOINT_ENV: &str = "RVC_ENDPOINT";
pub const DEFAULT_HIGH_WATERMARK: usize = 65_536;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("cannot connect to {endpoint}: {source}")]
    Connect {
        endpoint: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid endpoint {0:?}")]
    BadEndpoint(String),
    #[error("connection closed: {0}")]
    Closed(String),
    #[error("subscription handshake timed out")]
    HandshakeTimeout,
}

/// A delivered message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub topic: Topic,
    pub publish_ts: u64,
    pub payload: Vec<u8>,
}

pub trait Transport: Send + Sync {
    fn publish(&self, topic: &Topic, payload: &[u8], publish_ts: u64) -> Result<(), TransportError>;

    /// One subscription receiving all listed topics, interleaved in arrival order.
    fn subscribe_many(&self, topics: &[Topic]) -> Result<Subscription, TransportError>;

    fn subscribe(&self, topic: &Topic) -> Result<Subscription, TransportError> {
        self.subscribe_many(std::slice::from_ref(topic))
    }

    /// Short name of the transport, recorded in benchmark reports.
    fn label(&self) -> &'static str;
}

/// Liveness of a connection, shared by a client and its subscriptions.
#[derive(Debug, Default)]
pub(crate) struct LinkStatus {
    closed: AtomicBool,
    reason: Mutex<Option<String>>,
}

impl LinkStatus {
    pub(crate) fn close(&self, reason: impl Into<String>) {
        let mut r = self.reason.lock().unwrap();
        if r.is_none() {
            *r = Some(reason.into());
        }
        self.closed.store(true, Ordering::Release);
    }

    pub(crate) fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Acquire)
    }

    pub(crate) fn error(&self) -> TransportError {
        let reason = self.reason.lock().unwrap().clone();
        TransportError::Closed(reason.unwrap_or_else(|| "link closed".into()))
    }

    pub(crate) fn check(&self) -> Result<(), TransportError> {
        if self.is_closed() {
            Err(self.error())
        } else {
            Ok(())
        }
    }
}

/// Receiving end of a subscription. Dropping it unsubscribes.
pub struct Subscription {
    rx: Receiver<Message>,
    status: Arc<LinkStatus>,
    on_drop: Option<Box<dyn FnOnce() + Send + Sync>>,
}

impl Subscription {
    pub(crate) fn new(
        rx: Receiver<Message>,
        status: Arc<LinkStatus>,
        on_drop: Box<dyn FnOnce() + Send + Sync>,
    ) -> Subscription {
        Subscription {
            rx,
            status,
            on_drop: Some(on_drop),
        }
    }

    /// Waits up to `timeout`; `Ok(None)` means nothing arrived. Messages
    /// already received are still returned after the link has failed.
    pub fn next_message(&self, timeout: Duration) -> Result<Option<Message>, TransportError> {
        match self.rx.recv_timeout(timeout) {
            Ok(m) => Ok(Some(m)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(self.status.error()),
        }
    }

    pub fn try_next(&self) -> Result<Option<Message>, TransportError> {
        match self.rx.try_recv() {
            Ok(m) => Ok(Some(m)),
            Err(TryRecvError::Empty) => Ok(None),
            Err(TryRecvError::Disconnected) => Err(self.status.error()),
        }
    }

    /// Blocks until a message arrives or the link fails.
    pub fn recv(&self) -> Result<Message, TransportError> {
        self.rx.recv().map_err(|_| self.status.error())
    }

    /// Number of messages received but not yet consumed.
    pub fn pending(&self) -> usize {
        self.rx.len()
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        if let Some(f) = self.on_drop.take() {
            f();
        }
    }
}

/// Where to find a network: a TCP address (`host:port`, optionally prefixed
/// with `tcp://`) or a named in-process hub (`mem://name`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    Mem(String),
}

impl Endpoint {
    pub fn parse(s: &str) -> Result<Endpoint, TransportError> {
        let s = s.trim();
        if let Some(name) = s.strip_prefix("mem://") {
            if name.is_empty() {
                return Err(TransportError::BadEndpoint(s.into()));
            }
            return Ok(Endpoint::Mem(name.into()));
        }
        let addr = s.strip_prefix("tcp://").unwrap_or(s);
        if addr.is_empty() {
            return Err(TransportError::BadEndpoint(s.into()));
        }
        if addr.contains(':') {
            Ok(Endpoint::Tcp(addr.into()))
        } else {
            Ok(Endpoint::Tcp(format!("{addr}:{DEFAULT_PORT}")))
        }
    }
}

/// `$RVC_ENDPOINT`, or the default local broker address.
pub fn default_endpoint() -> String {
    std::env::var(ENDPOINT_ENV).unwrap_or_else(|_| format!("127.0.0.1:{DEFAULT_PORT}"))
}

pub fn connect(endpoint: &str) -> Result<Arc<dyn Transport>, TransportError> {
    match Endpoint::parse(endpoint)? {
        Endpoint::Tcp(addr) => Ok(Arc::new(TcpClient::connect(&addr)?)),
        Endpoint::Mem(name) => Ok(Arc::new(Loopback::named(&name).client())),
    }
}

/// Nanoseconds since the Unix epoch, for `publish_ts`.
pub fn now_epoch_ns() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0)
}
