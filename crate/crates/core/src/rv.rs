//! The runtime-verification participant: monitors a topic and publishes a
//! verdict for every message (or only when the verdict changes).
//!
//! Both the networked node and local file replay feed messages through the
//! same [`RvProcessor`], so the two paths produce identical verdict streams.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use log::{debug, warn};
use thiserror::Error;

use crate::mtl::{parse, Monitor, MonitorError, ParseError};
use crate::node::{NodeHandle, POLL};
use crate::pubsub::{connect, Subscription, Topic, Transport, TransportError};
use crate::trace::{decode_record, encode_verdict, DecodeError, Time, Verdict};

/// When verdicts are published.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Emit {
    #[default]
    Every,
    OnChange,
}

impl FromStr for Emit {
    type Err = String;

    fn from_str(s: &str) -> Result<Emit, String> {
        match s {
            "every" | "every-message" => Ok(Emit::Every),
            "on-change" => Ok(Emit::OnChange),
            _ => Err(format!("unknown emit policy {s:?} (expected every or on-change)")),
        }
    }
}

impl fmt::Display for Emit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Emit::Every => "every",
            Emit::OnChange => "on-change",
        })
    }
}

#[derive(Debug, Error)]
pub enum RvConfigError {
    #[error("formula: {0}")]
    Formula(#[from] ParseError),
    #[error("input and verdict topic are both {0}")]
    SameTopic(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RvNodeConfig {
    pub formula_text: String,
    pub input_topic: Topic,
    pub verdict_topic: Topic,
    pub endpoint: String,
    /// Reject records that lack an atom instead of reading it as false.
    pub strict: bool,
    pub emit: Emit,
}

impl RvNodeConfig {
    pub fn new(formula_text: &str, input_topic: Topic, verdict_topic: Topic) -> RvNodeConfig {
        RvNodeConfig {
            formula_text: formula_text.into(),
            input_topic,
            verdict_topic,
            endpoint: crate::pubsub::default_endpoint(),
            strict: true,
            emit: Emit::Every,
        }
    }

    pub fn validate(&self) -> Result<(), RvConfigError> {
        if self.input_topic == self.verdict_topic {
            return Err(RvConfigError::SameTopic(self.input_topic.to_string()));
        }
        parse(&self.formula_text)?;
        Ok(())
    }
}

/// Why a message produced no verdict.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RvSkip {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("payload is not UTF-8")]
    NotUtf8,
    #[error(transparent)]
    Monitor(#[from] MonitorError),
}

#[derive(Debug, Default)]
pub struct RvStats {
    pub received: AtomicU64,
    pub verdicts: AtomicU64,
    pub decode_errors: AtomicU64,
    pub order_errors: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RvCounts {
    pub received: u64,
    pub verdicts: u64,
    pub decode_errors: u64,
    pub order_errors: u64,
}

impl RvStats {
    pub fn snapshot(&self) -> RvCounts {
        RvCounts {
            received: self.received.load(Ordering::Relaxed),
            verdicts: self.verdicts.load(Ordering::Relaxed),
            decode_errors: self.decode_errors.load(Ordering::Relaxed),
            order_errors: self.order_errors.load(Ordering::Relaxed),
        }
    }
}

impl fmt::Display for RvCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "received={} verdicts={} decode_errors={} order_errors={}",
            self.received, self.verdicts, self.decode_errors, self.order_errors
        )
    }
}

/// Decodes messages in arrival order, steps the monitor and applies the emit
/// policy. Messages without `time` are stamped with their arrival index.
#[derive(Debug, Clone)]
pub struct RvProcessor {
    monitor: Monitor,
    emit: Emit,
    arrivals: Time,
    last_verdict: Option<bool>,
}

impl RvProcessor {
    pub fn new(formula_text: &str, strict: bool, emit: Emit) -> Result<RvProcessor, ParseError> {
        Ok(RvProcessor {
            monitor: Monitor::new(parse(formula_text)?, strict),
            emit,
            arrivals: 0,
            last_verdict: None,
        })
    }

    /// Processes one message. `Ok(None)` means the verdict was suppressed by
    /// the on-change policy; on `Err` the monitor state is unchanged.
    pub fn process(&mut self, payload: &[u8]) -> Result<Option<Verdict>, RvSkip> {
        let index = self.arrivals;
        self.arrivals += 1;
        let text = std::str::from_utf8(payload).map_err(|_| RvSkip::NotUtf8)?;
        let record = decode_record(text, index)?;
        let verdict = self.monitor.step(&record)?;
        let changed = self.last_verdict != Some(verdict.value);
        self.last_verdict = Some(verdict.value);
        Ok((self.emit == Emit::Every || changed).then_some(verdict))
    }

    fn process_counted(&mut self, payload: &[u8], stats: &RvStats) -> Option<Verdict> {
        stats.received.fetch_add(1, Ordering::Relaxed);
        match self.process(payload) {
            Ok(v) => v,
            Err(e) => {
                warn!("skipping message {}: {e}", self.arrivals - 1);
                let counter = match e {
                    RvSkip::Monitor(MonitorError::NonIncreasing { .. }) => &stats.order_errors,
                    _ => &stats.decode_errors,
                };
                counter.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }
}

fn rv_loop(
    mut proc: RvProcessor,
    sub: Subscription,
    output: &dyn Transport,
    verdict_topic: &Topic,
    stop: &AtomicBool,
    stats: &RvStats,
) -> Result<(), TransportError> {
    while !stop.load(Ordering::Relaxed) {
        let Some(msg) = sub.next_message(POLL)? else {
            continue;
        };
        if let Some(v) = proc.process_counted(&msg.payload, stats) {
            output.publish(verdict_topic, encode_verdict(&v).as_bytes(), msg.publish_ts)?;
            stats.verdicts.fetch_add(1, Ordering::Relaxed);
        }
    }
    debug!("rv node stopped: {}", stats.snapshot());
    Ok(())
}

#[derive(Debug, Error)]
pub enum RvRunError {
    #[error(transparent)]
    Config(#[from] RvConfigError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Connects to `cfg.endpoint` and monitors until `stop` is set.
pub fn rv_node_run(cfg: &RvNodeConfig, stop: &AtomicBool, stats: &RvStats) -> Result<(), RvRunError> {
    cfg.validate()?;
    let transport = connect(&cfg.endpoint)?;
    let proc = RvProcessor::new(&cfg.formula_text, cfg.strict, cfg.emit).map_err(RvConfigError::from)?;
    let sub = transport.subscribe(&cfg.input_topic)?;
    Ok(rv_loop(proc, sub, transport.as_ref(), &cfg.verdict_topic, stop, stats)?)
}

pub type RvNode = NodeHandle<RvStats>;

/// Starts a monitor node on `transport` (`cfg.endpoint` is not used); it is
/// subscribed when this returns.
pub fn spawn_rv_node(cfg: &RvNodeConfig, transport: Arc<dyn Transport>) -> Result<RvNode, RvRunError> {
    cfg.validate()?;
    let proc = RvProcessor::new(&cfg.formula_text, cfg.strict, cfg.emit).map_err(RvConfigError::from)?;
    let sub = transport.subscribe(&cfg.input_topic)?;
    let verdict_topic = cfg.verdict_topic.clone();
    Ok(NodeHandle::spawn("rvc-monitor", RvStats::default(), move |stop, stats| {
        rv_loop(proc, sub, transport.as_ref(), &verdict_topic, stop, stats)
    }))
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Formula(#[from] ParseError),
    #[error("line {line}: {source}")]
    Record { line: usize, source: RvSkip },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Local replay of a trace file: each line is processed exactly as a message
/// would be by a node. Returns the verdicts and the wall time in seconds,
/// including reading the file.
pub fn rv_replay_local(
    formula_text: &str,
    trace_path: impl AsRef<Path>,
    emit: Emit,
    strict: bool,
) -> Result<(Vec<Verdict>, f64), ReplayError> {
    let mut proc = RvProcessor::new(formula_text, strict, emit)?;
    let start = Instant::now();
    let reader = BufReader::with_capacity(1 << 16, File::open(trace_path)?);
    let mut verdicts = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        match proc.process(line.as_bytes()) {
            Ok(Some(v)) => verdicts.push(v),
            Ok(None) => {}
            Err(source) => return Err(ReplayError::Record { line: i + 1, source }),
        }
    }
    Ok((verdicts, start.elapsed().as_secs_f64()))
}
