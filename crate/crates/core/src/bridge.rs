//! One-way forwarding of selected topics from one pub/sub network to another.
//!
//! The broker has no wildcard subscriptions, so the topics to forward are
//! always an explicit list: the allow list when it is non-empty, otherwise
//! the configured `topics`. Denied topics are never forwarded. Payloads and
//! publish timestamps cross unchanged, in per-topic order.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use log::debug;
use thiserror::Error;

use crate::node::{NodeHandle, POLL};
use crate::pubsub::{Endpoint, Subscription, Topic, Transport, TransportError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BridgeError {
    #[error("source and destination are the same network ({0})")]
    SameNetwork(String),
    #[error("no topics to forward: give an allow list or an explicit topic list")]
    NothingAdmitted,
    #[error("bridges in opposite directions both forward {0}")]
    Loop(String),
    #[error("invalid endpoint {0:?}")]
    BadEndpoint(String),
}

fn parse_endpoint(s: &str) -> Result<Endpoint, BridgeError> {
    Endpoint::parse(s).map_err(|_| BridgeError::BadEndpoint(s.into()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgeConfig {
    pub src_endpoint: String,
    pub dst_endpoint: String,
    /// Empty means every topic in `topics` is allowed.
    pub allow: BTreeSet<Topic>,
    pub deny: BTreeSet<Topic>,
    /// Topics to forward when `allow` is empty.
    pub topics: BTreeSet<Topic>,
}

impl BridgeConfig {
    pub fn new(src_endpoint: &str, dst_endpoint: &str) -> BridgeConfig {
        BridgeConfig {
            src_endpoint: src_endpoint.into(),
            dst_endpoint: dst_endpoint.into(),
            allow: BTreeSet::new(),
            deny: BTreeSet::new(),
            topics: BTreeSet::new(),
        }
    }

    pub fn allow(mut self, topics: impl IntoIterator<Item = Topic>) -> BridgeConfig {
        self.allow.extend(topics);
        self
    }

    pub fn deny(mut self, topics: impl IntoIterator<Item = Topic>) -> BridgeConfig {
        self.deny.extend(topics);
        self
    }

    pub fn topics(mut self, topics: impl IntoIterator<Item = Topic>) -> BridgeConfig {
        self.topics.extend(topics);
        self
    }

    /// Topics this bridge subscribes to and forwards.
    pub fn admitted(&self) -> BTreeSet<Topic> {
        let base = if self.allow.is_empty() {
            &self.topics
        } else {
            &self.allow
        };
        base.iter().filter(|t| bridge_admits(self, t)).cloned().collect()
    }

    pub fn validate(&self) -> Result<(), BridgeError> {
        if parse_endpoint(&self.src_endpoint)? == parse_endpoint(&self.dst_endpoint)? {
            return Err(BridgeError::SameNetwork(self.src_endpoint.clone()));
        }
        if self.admitted().is_empty() {
            return Err(BridgeError::NothingAdmitted);
        }
        Ok(())
    }
}

/// Deny wins; an empty allow list allows everything else.
pub fn bridge_admits(cfg: &BridgeConfig, topic: &Topic) -> bool {
    if cfg.deny.contains(topic) {
        return false;
    }
    cfg.allow.is_empty() || cfg.allow.contains(topic)
}

/// Rejects sets of bridges in which two opposite-direction bridges forward a
/// common topic, which would bounce its messages back and forth forever.
pub fn validate_bridges(bridges: &[BridgeConfig]) -> Result<(), BridgeError> {
    for b in bridges {
        b.validate()?;
    }
    let ends = |c: &BridgeConfig| -> Result<(Endpoint, Endpoint), BridgeError> {
        Ok((parse_endpoint(&c.src_endpoint)?, parse_endpoint(&c.dst_endpoint)?))
    };
    for (i, a) in bridges.iter().enumerate() {
        let (a_src, a_dst) = ends(a)?;
        for b in &bridges[i + 1..] {
            let (b_src, b_dst) = ends(b)?;
            if a_src == b_dst && a_dst == b_src {
                if let Some(t) = a.admitted().intersection(&b.admitted()).next() {
                    return Err(BridgeError::Loop(t.to_string()));
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Default)]
pub struct BridgeStats {
    pub forwarded: AtomicU64,
}

impl BridgeStats {
    pub fn forwarded(&self) -> u64 {
        self.forwarded.load(Ordering::Relaxed)
    }
}

fn forward_loop(
    sub: Subscription,
    dst: &dyn Transport,
    stop: &AtomicBool,
    stats: &BridgeStats,
) -> Result<(), TransportError> {
    while !stop.load(Ordering::Relaxed) {
        if let Some(m) = sub.next_message(POLL)? {
            dst.publish(&m.topic, &m.payload, m.publish_ts)?;
            stats.forwarded.fetch_add(1, Ordering::Relaxed);
        }
    }
    debug!("bridge stopped after {} messages", stats.forwarded());
    Ok(())
}

#[derive(Debug, Error)]
pub enum BridgeRunError {
    #[error(transparent)]
    Config(#[from] BridgeError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Forwards admitted topics from `src` to `dst` until `stop` is set or either
/// connection fails.
pub fn bridge_run(
    cfg: &BridgeConfig,
    src: &dyn Transport,
    dst: &dyn Transport,
    stop: &AtomicBool,
    stats: &BridgeStats,
) -> Result<(), BridgeRunError> {
    cfg.validate()?;
    let topics: Vec<Topic> = cfg.admitted().into_iter().collect();
    let sub = src.subscribe_many(&topics)?;
    Ok(forward_loop(sub, dst, stop, stats)?)
}

pub type BridgeNode = NodeHandle<BridgeStats>;

/// Starts a bridge on its own thread; forwarding is live when this returns.
pub fn spawn_bridge(
    cfg: &BridgeConfig,
    src: Arc<dyn Transport>,
    dst: Arc<dyn Transport>,
) -> Result<BridgeNode, BridgeRunError> {
    cfg.validate()?;
    let topics: Vec<Topic> = cfg.admitted().into_iter().collect();
    let sub = src.subscribe_many(&topics)?;
    Ok(NodeHandle::spawn(
        "rvc-bridge",
        BridgeStats::default(),
        move |stop, stats| {
            let _src = src;
            forward_loop(sub, dst.as_ref(), stop, stats)
        },
    ))
}
