//! Approximate-time synchronization of several timed topics into one stream.
//!
//! Each configured topic has a bounded queue of timed records. Once every
//! queue holds a message and every queue is settled with respect to the pivot
//! (the latest of the queue heads), one message per topic is chosen so that
//! the set spans the shortest possible time, and the set is emitted. A queue
//! is settled when it reaches the pivot, or when no message arriving later
//! could sit closer to the pivot than its newest one. Chosen messages and
//! everything older are then removed, so each message is used at most once
//! and consecutive sets never overlap. No time-difference threshold is needed.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use log::{debug, warn};
use thiserror::Error;

use crate::node::{NodeHandle, POLL};
use crate::pubsub::{Subscription, Topic, Transport, TransportError};
use crate::trace::{decode_timed_record, encode_record, is_valid_name, Record, Time};

pub const DEFAULT_MAX_TOPICS: usize = 9;
pub const DEFAULT_QUEUE_DEPTH: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyncError {
    #[error("topic {0} listed twice")]
    DuplicateTopic(String),
    #[error("{count} topics configured; between 2 and {max} are supported")]
    TopicCount { count: usize, max: usize },
    #[error("queue depth must be positive")]
    ZeroDepth,
    #[error("output topic {0} is also an input")]
    OutputIsInput(String),
    #[error("topic {0} is not synchronized")]
    UnknownTopic(String),
    #[error("time went backwards on {topic}: {time} after {last}")]
    TimeRegression { topic: String, time: Time, last: Time },
    #[error("merged field {0} is produced by more than one topic")]
    KeyCollision(String),
    #[error("merged field {0} is not a valid name")]
    InvalidKey(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncConfig {
    pub topics: Vec<Topic>,
    pub queue_depth: usize,
    pub output_topic: Topic,
    pub max_topics: usize,
}

impl SyncConfig {
    pub fn new(topics: Vec<Topic>, output_topic: Topic) -> SyncConfig {
        SyncConfig {
            topics,
            queue_depth: DEFAULT_QUEUE_DEPTH,
            output_topic,
            max_topics: DEFAULT_MAX_TOPICS,
        }
    }

    pub fn with_depth(mut self, depth: usize) -> SyncConfig {
        self.queue_depth = depth;
        self
    }

    pub fn with_max_topics(mut self, max: usize) -> SyncConfig {
        self.max_topics = max;
        self
    }

    pub fn validate(&self) -> Result<(), SyncError> {
        let count = self.topics.len();
        if count < 2 || count > self.max_topics {
            return Err(SyncError::TopicCount {
                count,
                max: self.max_topics,
            });
        }
        for (i, t) in self.topics.iter().enumerate() {
            if self.topics[..i].contains(t) {
                return Err(SyncError::DuplicateTopic(t.to_string()));
            }
        }
        if self.queue_depth == 0 {
            return Err(SyncError::ZeroDepth);
        }
        if self.topics.contains(&self.output_topic) {
            return Err(SyncError::OutputIsInput(self.output_topic.to_string()));
        }
        Ok(())
    }
}

/// One record per configured topic, in configuration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncSet {
    pub pivot_time: Time,
    pub members: Vec<(Topic, Record)>,
    pub span: Time,
}

impl SyncSet {
    pub fn member(&self, topic: &Topic) -> Option<&Record> {
        self.members.iter().find(|(t, _)| t == topic).map(|(_, r)| r)
    }
}

#[derive(Debug, Clone)]
pub struct SyncState {
    cfg: SyncConfig,
    queues: Vec<VecDeque<Record>>,
    last: Vec<Option<Time>>,
    latest: Time,
    last_pivot: Option<Time>,
    dropped: u64,
}

impl SyncState {
    pub fn new(cfg: SyncConfig) -> Result<SyncState, SyncError> {
        cfg.validate()?;
        let n = cfg.topics.len();
        Ok(SyncState {
            cfg,
            queues: vec![VecDeque::new(); n],
            last: vec![None; n],
            latest: 0,
            last_pivot: None,
            dropped: 0,
        })
    }

    pub fn config(&self) -> &SyncConfig {
        &self.cfg
    }

    /// Queued (not yet used) records of `topic`, oldest first.
    pub fn queued(&self, topic: &Topic) -> Option<&VecDeque<Record>> {
        self.index(topic).map(|i| &self.queues[i])
    }

    /// Messages discarded because their queue overflowed.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    fn index(&self, topic: &Topic) -> Option<usize> {
        self.cfg.topics.iter().position(|t| t == topic)
    }

    /// Queues `record` and returns every set that became complete.
    pub fn push(&mut self, topic: &Topic, record: Record) -> Result<Vec<SyncSet>, SyncError> {
        let i = self
            .index(topic)
            .ok_or_else(|| SyncError::UnknownTopic(topic.to_string()))?;
        if let Some(last) = self.last[i] {
            if record.time < last {
                return Err(SyncError::TimeRegression {
                    topic: topic.to_string(),
                    time: record.time,
                    last,
                });
            }
        }
        self.last[i] = Some(record.time);
        self.latest = self.latest.max(record.time);
        let q = &mut self.queues[i];
        q.push_back(record);
        if q.len() > self.cfg.queue_depth {
            q.pop_front();
            self.dropped += 1;
        }
        let mut out = Vec::new();
        while let Some(set) = self.try_emit() {
            out.push(set);
        }
        Ok(out)
    }

    fn try_emit(&mut self) -> Option<SyncSet> {
        let mut pivot = 0;
        for q in &self.queues {
            pivot = pivot.max(q.front()?.time);
        }
        // Later arrivals are taken to be later than anything seen so far, so a
        // topic short of the pivot is settled once no such arrival could land
        // strictly closer to it.
        let horizon = self.latest + 1 - pivot;
        let settled = |q: &VecDeque<Record>| {
            q.back()
                .is_some_and(|r| r.time >= pivot || pivot - r.time <= horizon)
        };
        if !self.queues.iter().all(settled) {
            return None;
        }
        let picks = min_span_selection(&self.queues, self.last_pivot)?;
        let mut members = Vec::with_capacity(picks.len());
        for (i, &p) in picks.iter().enumerate() {
            let chosen = self.queues[i][p].clone();
            let q = &mut self.queues[i];
            while q.front().is_some_and(|r| r.time <= chosen.time) {
                q.pop_front();
            }
            members.push((self.cfg.topics[i].clone(), chosen));
        }
        let hi = members.iter().map(|(_, r)| r.time).max().unwrap_or(0);
        let lo = members.iter().map(|(_, r)| r.time).min().unwrap_or(0);
        self.last_pivot = Some(hi);
        Some(SyncSet {
            pivot_time: hi,
            members,
            span: hi - lo,
        })
    }
}

/// Index per queue of the selection with the smallest span whose latest time
/// is after `floor` (the previous pivot), so pivots strictly increase even
/// when a topic repeats a timestamp. Ties go to the smallest latest time, then
/// to the earliest message of each queue.
fn min_span_selection(queues: &[VecDeque<Record>], floor: Option<Time>) -> Option<Vec<usize>> {
    let admissible = |t: Time| floor.is_none_or(|f| t > f);
    let mut best: Option<(Time, Time, Vec<usize>)> = None;
    let mut consider = |picks: Vec<usize>| {
        let times = picks.iter().zip(queues).map(|(&p, q)| q[p].time);
        let hi = times.clone().max().unwrap();
        if !admissible(hi) {
            return;
        }
        let span = hi - times.min().unwrap();
        if best.as_ref().is_none_or(|(s, h, _)| (span, hi) < (*s, *h)) {
            best = Some((span, hi, picks));
        }
    };
    for q in queues {
        for r in q {
            let lo = r.time;
            let base: Vec<usize> = queues.iter().map(|q| q.partition_point(|m| m.time < lo)).collect();
            if base.iter().zip(queues).any(|(&p, q)| p == q.len()) {
                continue;
            }
            let hi = base.iter().zip(queues).map(|(&p, q)| q[p].time).max().unwrap();
            if admissible(hi) {
                consider(base);
                continue;
            }
            // Lift one topic past the floor; the others stay as early as possible.
            let f = floor.unwrap_or(0);
            for (j, q) in queues.iter().enumerate() {
                let p = q.partition_point(|m| m.time <= f);
                if p < q.len() {
                    let mut picks = base.clone();
                    picks[j] = p;
                    consider(picks);
                }
            }
        }
    }
    best.map(|(_, _, p)| p)
}

/// Flattens a set into one record at the pivot time; each field `f` of the
/// member from topic `a/b` becomes `b.f`.
pub fn sync_merge(set: &SyncSet) -> Result<Record, SyncError> {
    let mut out = Record::new(set.pivot_time);
    for (topic, member) in &set.members {
        let prefix = topic.last_segment();
        for (field, value) in &member.fields {
            let key = format!("{prefix}.{field}");
            if !is_valid_name(&key) {
                return Err(SyncError::InvalidKey(key));
            }
            if out.fields.insert(key.clone(), *value).is_some() {
                return Err(SyncError::KeyCollision(key));
            }
        }
    }
    Ok(out)
}

/// Live counters of a running synchronizer.
#[derive(Debug, Default)]
pub struct SyncStats {
    pub received: AtomicU64,
    pub sets: AtomicU64,
    pub decode_errors: AtomicU64,
    pub order_errors: AtomicU64,
    pub merge_errors: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SyncCounts {
    pub received: u64,
    pub sets: u64,
    pub decode_errors: u64,
    pub order_errors: u64,
    pub merge_errors: u64,
}

impl SyncStats {
    pub fn snapshot(&self) -> SyncCounts {
        SyncCounts {
            received: self.received.load(Ordering::Relaxed),
            sets: self.sets.load(Ordering::Relaxed),
            decode_errors: self.decode_errors.load(Ordering::Relaxed),
            order_errors: self.order_errors.load(Ordering::Relaxed),
            merge_errors: self.merge_errors.load(Ordering::Relaxed),
        }
    }
}

fn sync_loop(
    mut state: SyncState,
    sub: Subscription,
    output: &dyn Transport,
    stop: &AtomicBool,
    stats: &SyncStats,
) -> Result<(), TransportError> {
    let out_topic = state.config().output_topic.clone();
    while !stop.load(Ordering::Relaxed) {
        let Some(msg) = sub.next_message(POLL)? else {
            continue;
        };
        stats.received.fetch_add(1, Ordering::Relaxed);
        let record = match std::str::from_utf8(&msg.payload)
            .map_err(|e| e.to_string())
            .and_then(|s| decode_timed_record(s).map_err(|e| e.to_string()))
        {
            Ok(r) => r,
            Err(e) => {
                warn!("skipping message on {}: {e}", msg.topic);
                stats.decode_errors.fetch_add(1, Ordering::Relaxed);
                continue;
            }
        };
        let sets = match state.push(&msg.topic, record) {
            Ok(sets) => sets,
            Err(e) => {
                warn!("skipping message on {}: {e}", msg.topic);
                stats.order_errors.fetch_add(1, Ordering::Relaxed);
                continue;
            }
        };
        for set in sets {
            match sync_merge(&set) {
                Ok(merged) => {
                    let payload = encode_record(&merged, true);
                    output.publish(&out_topic, payload.as_bytes(), msg.publish_ts)?;
                    stats.sets.fetch_add(1, Ordering::Relaxed);
                }
                Err(e) => {
                    warn!("dropping set at {}: {e}", set.pivot_time);
                    stats.merge_errors.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
    }
    debug!("synchronizer stopped");
    Ok(())
}

/// Subscribes `cfg.topics` on `input` and publishes merged sets on `output`
/// until `stop` is set. Incomplete sets are discarded on shutdown.
pub fn sync_run(
    cfg: SyncConfig,
    input: &dyn Transport,
    output: &dyn Transport,
    stop: &AtomicBool,
    stats: &SyncStats,
) -> Result<(), SyncRunError> {
    let state = SyncState::new(cfg)?;
    let sub = input.subscribe_many(&state.config().topics)?;
    Ok(sync_loop(state, sub, output, stop, stats)?)
}

#[derive(Debug, Error)]
pub enum SyncRunError {
    #[error(transparent)]
    Config(#[from] SyncError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

pub type SyncNode = NodeHandle<SyncStats>;

/// Starts a synchronizer on its own thread; its subscriptions are active when
/// this returns.
pub fn spawn_sync(
    cfg: SyncConfig,
    input: Arc<dyn Transport>,
    output: Arc<dyn Transport>,
) -> Result<SyncNode, SyncRunError> {
    let state = SyncState::new(cfg)?;
    let sub = input.subscribe_many(&state.config().topics)?;
    Ok(NodeHandle::spawn(
        "rvc-sync",
        SyncStats::default(),
        move |stop, stats| {
            let _input = input;
            sync_loop(state, sub, output.as_ref(), stop, stats)
        },
    ))
}
