//! Benchmark campaigns: throughput against payload size, one-way latency
//! against publish rate, and monitoring over the network against local
//! replay.
//!
//! Intervals are measured on the monotonic clock of the measuring side. The
//! epoch timestamps carried in frames are informational only.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::node::{NodeHandle, POLL};
use crate::pubsub::{now_epoch_ns, Topic, Transport, TransportError};
use crate::rv::{rv_replay_local, spawn_rv_node, Emit, ReplayError, RvNodeConfig, RvRunError};
use crate::timescales::{
    generate_trace, make_formula, trace_file_name, Family, GenMode, GenSpec,
};
use crate::trace::{encode_verdict, write_trace_file, TraceError};

pub const THROUGHPUT_TOPIC: &str = "bench/throughput";
pub const PING_TOPIC: &str = "bench/ping";
pub const PONG_TOPIC: &str = "bench/pong";
pub const RV_INPUT_TOPIC: &str = "rv/in";
pub const RV_VERDICT_TOPIC: &str = "rv/verdict";

pub const PAYLOAD_SWEEP: [usize; 7] = [8, 64, 512, 4 << 10, 32 << 10, 256 << 10, 1 << 20];
pub const RATE_SWEEP: [f64; 5] = [10.0, 100.0, 1_000.0, 10_000.0, 100_000.0];
pub const DEFAULT_WARMUP: f64 = 0.1;

/// How long a receiver waits for the next expected message before declaring
/// it lost.
const STALL_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("reliability violation: received {got} of {expected} messages")]
    Missing { expected: u64, got: u64 },
    #[error("no echo responder answered on {PONG_TOPIC}")]
    NoResponder,
    #[error("verdict {index} differs between networked and local runs")]
    VerdictMismatch { index: usize },
    #[error("received {got} of {expected} verdicts")]
    LostVerdicts { expected: usize, got: usize },
    #[error("invalid benchmark parameter: {0}")]
    InvalidArg(String),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Node(#[from] RvRunError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A report type that can be written as CSV with a fixed header.
pub trait CsvRow: Serialize {
    const HEADER: &'static [&'static str];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub transport_label: String,
    pub network_mode_label: String,
    pub payload_bytes: usize,
    pub message_count: u64,
    pub elapsed_seconds: f64,
    pub msgs_per_sec: f64,
    pub mbits_per_sec: f64,
}

impl ThroughputReport {
    /// Derives the rates from a count of messages received over `elapsed_seconds`.
    pub fn new(
        transport_label: &str,
        network_mode_label: &str,
        payload_bytes: usize,
        message_count: u64,
        elapsed_seconds: f64,
    ) -> ThroughputReport {
        let msgs_per_sec = message_count as f64 / elapsed_seconds;
        ThroughputReport {
            transport_label: transport_label.into(),
            network_mode_label: network_mode_label.into(),
            payload_bytes,
            message_count,
            elapsed_seconds,
            msgs_per_sec,
            mbits_per_sec: msgs_per_sec * payload_bytes as f64 * 8.0 / 1e6,
        }
    }
}

impl CsvRow for ThroughputReport {
    const HEADER: &'static [&'static str] = &[
        "transport_label",
        "network_mode_label",
        "payload_bytes",
        "message_count",
        "elapsed_seconds",
        "msgs_per_sec",
        "mbits_per_sec",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub rate_msgs_per_sec: f64,
    pub sample_count: usize,
    pub p50_us: f64,
    pub p99_us: f64,
    pub mean_us: f64,
    pub achieved_rate_msgs_per_sec: f64,
    /// Achieved rate fell below 90% of the target.
    pub below_target: bool,
}

impl LatencyReport {
    /// Builds a report from one-way latencies in microseconds.
    pub fn from_samples(rate: f64, achieved: f64, samples: &[f64]) -> LatencyReport {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = if sorted.is_empty() {
            0.0
        } else {
            sorted.iter().sum::<f64>() / sorted.len() as f64
        };
        LatencyReport {
            rate_msgs_per_sec: rate,
            sample_count: sorted.len(),
            p50_us: percentile(&sorted, 50.0),
            p99_us: percentile(&sorted, 99.0),
            mean_us: mean,
            achieved_rate_msgs_per_sec: achieved,
            below_target: achieved < 0.9 * rate,
        }
    }
}

impl CsvRow for LatencyReport {
    const HEADER: &'static [&'static str] = &[
        "rate_msgs_per_sec",
        "sample_count",
        "p50_us",
        "p99_us",
        "mean_us",
        "achieved_rate_msgs_per_sec",
        "below_target",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RvBenchReport {
    pub family: String,
    pub scale: u64,
    pub path_label: String,
    pub total_seconds: f64,
}

impl CsvRow for RvBenchReport {
    const HEADER: &'static [&'static str] = &["family", "scale", "path_label", "total_seconds"];
}

/// Nearest-rank percentile of ascending `sorted`; 0 for no samples.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Writes a header row and one row per report. Parent directories are created.
pub fn write_csv<T: CsvRow>(reports: &[T], path: impl AsRef<Path>) -> Result<(), BenchError> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(T::HEADER)?;
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>, BenchError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}

/// `<root>/<campaign>/<UTC timestamp>.csv`
pub fn results_path(root: impl AsRef<Path>, campaign: &str) -> PathBuf {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    root.as_ref().join(campaign).join(format!("{stamp}.csv"))
}

#[derive(Debug, Clone)]
pub struct ThroughputOpts {
    pub payload_bytes: usize,
    pub message_count: u64,
    pub warmup_fraction: f64,
    pub network_mode_label: String,
}

impl ThroughputOpts {
    /// Default count for a payload size: about 128 MiB of payload, between
    /// 64 and 200,000 messages.
    pub fn new(payload_bytes: usize) -> ThroughputOpts {
        let count = ((128usize << 20) / payload_bytes.max(1)).clamp(64, 200_000);
        ThroughputOpts {
            payload_bytes,
            message_count: count as u64,
            warmup_fraction: DEFAULT_WARMUP,
            network_mode_label: "host".into(),
        }
    }
}

fn check_warmup(w: f64) -> Result<(), BenchError> {
    if (0.0..=0.5).contains(&w) {
        Ok(())
    } else {
        Err(BenchError::InvalidArg(format!("warmup fraction {w} outside [0, 0.5]")))
    }
}

/// Floods `message_count` payloads from `publisher` and times the arrivals
/// after the warmup prefix at a subscriber on `subscriber`.
pub fn bench_throughput(
    publisher: &dyn Transport,
    subscriber: &dyn Transport,
    opts: &ThroughputOpts,
) -> Result<ThroughputReport, BenchError> {
    check_warmup(opts.warmup_fraction)?;
    if opts.payload_bytes == 0 {
        return Err(BenchError::InvalidArg("payload must be at least 1 byte".into()));
    }
    let n = opts.message_count;
    let warm = ((n as f64) * opts.warmup_fraction).floor() as u64;
    if n < 2 || warm + 1 >= n {
        return Err(BenchError::InvalidArg(format!("{n} messages leave nothing to time")));
    }
    let topic = Topic::new(THROUGHPUT_TOPIC).unwrap();
    let sub = subscriber.subscribe(&topic)?;
    let payload = vec![0xA5u8; opts.payload_bytes];

    let (start, end, got) = thread::scope(|s| -> Result<_, BenchError> {
        let receiver = s.spawn(|| -> Result<(Instant, Instant, u64), BenchError> {
            let mut got = 0u64;
            let mut start = None;
            let mut last = Instant::now();
            while got < n {
                match sub.next_message(STALL_TIMEOUT)? {
                    Some(_) => {
                        last = Instant::now();
                        if got == warm {
                            start = Some(last);
                        }
                        got += 1;
                    }
                    None => return Err(BenchError::Missing { expected: n, got }),
                }
            }
            Ok((start.expect("warmup index reached"), last, got))
        });
        for _ in 0..n {
            publisher.publish(&topic, &payload, now_epoch_ns())?;
        }
        receiver.join().expect("receiver panicked")
    })?;
    debug_assert_eq!(got, n);
    let elapsed = (end - start).as_secs_f64().max(1e-9);
    Ok(ThroughputReport::new(
        publisher.label(),
        &opts.network_mode_label,
        opts.payload_bytes,
        n - 1 - warm,
        elapsed,
    ))
}

#[derive(Debug, Default)]
pub struct EchoStats {
    pub echoed: AtomicU64,
}

pub type EchoNode = NodeHandle<EchoStats>;

fn echo_loop(
    sub: crate::pubsub::Subscription,
    t: &dyn Transport,
    stop: &AtomicBool,
    stats: &EchoStats,
) -> Result<(), TransportError> {
    let pong = Topic::new(PONG_TOPIC).unwrap();
    while !stop.load(Ordering::Relaxed) {
        if let Some(m) = sub.next_message(POLL)? {
            t.publish(&pong, &m.payload, m.publish_ts)?;
            stats.echoed.fetch_add(1, Ordering::Relaxed);
        }
    }
    Ok(())
}

/// Republishes every message on `bench/ping` to `bench/pong` until `stop` is set.
pub fn echo_run(t: &dyn Transport, stop: &AtomicBool, stats: &EchoStats) -> Result<(), TransportError> {
    let sub = t.subscribe(&Topic::new(PING_TOPIC).unwrap())?;
    echo_loop(sub, t, stop, stats)
}

/// Starts an echo responder on its own thread.
pub fn spawn_echo(t: Arc<dyn Transport>) -> Result<EchoNode, TransportError> {
    let sub = t.subscribe(&Topic::new(PING_TOPIC).unwrap())?;
    Ok(NodeHandle::spawn("rvc-echo", EchoStats::default(), move |stop, stats| {
        echo_loop(sub, t.as_ref(), stop, stats)
    }))
}

#[derive(Debug, Clone)]
pub struct LatencyOpts {
    pub rate_msgs_per_sec: f64,
    pub duration: Duration,
    pub payload_bytes: usize,
    pub warmup_fraction: f64,
}

impl LatencyOpts {
    pub fn new(rate_msgs_per_sec: f64, duration: Duration) -> LatencyOpts {
        LatencyOpts {
            rate_msgs_per_sec,
            duration,
            payload_bytes: 64,
            warmup_fraction: DEFAULT_WARMUP,
        }
    }
}

/// Sleeps for most of the wait and spins for the rest, so sends start close
/// to their schedule without burning a core at low rates. The spin yields so
/// that the broker and responder still run on a machine with few cores.
fn wait_until(target: Instant) {
    const SPIN: Duration = Duration::from_micros(200);
    loop {
        let now = Instant::now();
        if now >= target {
            return;
        }
        let left = target - now;
        if left > SPIN {
            thread::sleep(left - SPIN);
        } else {
            thread::yield_now();
        }
    }
}

const PROBE_SEQ: u64 = u64::MAX;

/// Pings at a fixed rate against an echo responder and reports one-way
/// latency as half the round trip.
pub fn bench_latency(t: &dyn Transport, opts: &LatencyOpts) -> Result<LatencyReport, BenchError> {
    check_warmup(opts.warmup_fraction)?;
    // Written so NaN is rejected too.
    if opts.rate_msgs_per_sec.is_nan() || opts.rate_msgs_per_sec < 1.0 {
        return Err(BenchError::InvalidArg("rate must be at least 1 msg/s".into()));
    }
    let ping = Topic::new(PING_TOPIC).unwrap();
    let sub = t.subscribe(&Topic::new(PONG_TOPIC).unwrap())?;
    let mut payload = vec![0u8; opts.payload_bytes.max(8)];

    // Wait for a responder before measuring.
    payload[..8].copy_from_slice(&PROBE_SEQ.to_be_bytes());
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        if Instant::now() > deadline {
            return Err(BenchError::NoResponder);
        }
        t.publish(&ping, &payload, now_epoch_ns())?;
        if sub.next_message(Duration::from_millis(100))?.is_some() {
            break;
        }
    }
    while sub.next_message(Duration::from_millis(100))?.is_some() {}

    let n = ((opts.rate_msgs_per_sec * opts.duration.as_secs_f64()).round() as usize).max(2);
    let interval = Duration::from_secs_f64(1.0 / opts.rate_msgs_per_sec);
    let mut sent = vec![None::<Instant>; n];
    let arrivals = thread::scope(|s| -> Result<Vec<Option<Instant>>, BenchError> {
        let receiver = s.spawn(|| -> Result<Vec<Option<Instant>>, BenchError> {
            let mut arrived = vec![None; n];
            let mut got = 0;
            while got < n {
                let Some(m) = sub.next_message(STALL_TIMEOUT)? else {
                    break;
                };
                let now = Instant::now();
                let seq = u64::from_be_bytes(m.payload[..8].try_into().unwrap_or([0xff; 8]));
                if let Some(slot) = arrived.get_mut(seq as usize) {
                    if slot.is_none() {
                        *slot = Some(now);
                        got += 1;
                    }
                }
            }
            Ok(arrived)
        });
        let start = Instant::now();
        for (i, slot) in sent.iter_mut().enumerate() {
            wait_until(start + interval * i as u32);
            payload[..8].copy_from_slice(&(i as u64).to_be_bytes());
            *slot = Some(Instant::now());
            t.publish(&ping, &payload, now_epoch_ns())?;
        }
        receiver.join().expect("receiver panicked")
    })?;

    let got = arrivals.iter().filter(|a| a.is_some()).count();
    if got < n {
        return Err(BenchError::Missing {
            expected: n as u64,
            got: got as u64,
        });
    }
    let first = sent[0].unwrap();
    let last = sent[n - 1].unwrap();
    let achieved = (n - 1) as f64 / (last - first).as_secs_f64().max(1e-9);
    let skip = ((n as f64) * opts.warmup_fraction).floor() as usize;
    let samples: Vec<f64> = sent
        .iter()
        .zip(&arrivals)
        .skip(skip)
        .map(|(s, a)| (a.unwrap() - s.unwrap()).as_secs_f64() * 1e6 / 2.0)
        .collect();
    Ok(LatencyReport::from_samples(opts.rate_msgs_per_sec, achieved, &samples))
}

/// Local replay of a trace file: verdict lines and the report.
pub fn bench_rv_local(
    family: Family,
    trace_path: &Path,
) -> Result<(RvBenchReport, Vec<String>), BenchError> {
    let formula = make_formula(family).to_string();
    let (verdicts, secs) = rv_replay_local(&formula, trace_path, Emit::Every, true)?;
    let lines = verdicts.iter().map(encode_verdict).collect();
    Ok((rv_report(family, "local", secs), lines))
}

fn rv_report(family: Family, path_label: &str, total_seconds: f64) -> RvBenchReport {
    RvBenchReport {
        family: family.name.as_str().into(),
        scale: family.scale,
        path_label: path_label.into(),
        total_seconds,
    }
}

/// Publishes every line of the trace on `input` and collects one verdict per
/// line from `verdicts`; a monitor node must be serving that pair of topics.
/// Timed from the first publish to the last verdict.
pub fn bench_rv_networked(
    family: Family,
    trace_path: &Path,
    t: &dyn Transport,
    input: &Topic,
    verdicts: &Topic,
) -> Result<(RvBenchReport, Vec<String>), BenchError> {
    let lines: Vec<String> = BufReader::new(fs::File::open(trace_path)?)
        .lines()
        .collect::<Result<_, _>>()?;
    let sub = t.subscribe(verdicts)?;
    let expected = lines.len();
    let start = Instant::now();
    let received = thread::scope(|s| -> Result<Vec<String>, BenchError> {
        let collector = s.spawn(|| -> Result<Vec<String>, BenchError> {
            let mut out = Vec::with_capacity(expected);
            while out.len() < expected {
                match sub.next_message(STALL_TIMEOUT)? {
                    Some(m) => out.push(String::from_utf8_lossy(&m.payload).into_owned()),
                    None => break,
                }
            }
            Ok(out)
        });
        for line in &lines {
            t.publish(input, line.as_bytes(), now_epoch_ns())?;
        }
        collector.join().expect("collector panicked")
    })?;
    let secs = start.elapsed().as_secs_f64();
    if received.len() < expected {
        return Err(BenchError::LostVerdicts {
            expected,
            got: received.len(),
        });
    }
    Ok((rv_report(family, "networked", secs), received))
}

/// Index of the first difference between two verdict streams.
pub fn first_mismatch(a: &[String], b: &[String]) -> Option<usize> {
    a.iter()
        .zip(b)
        .position(|(x, y)| x != y)
        .or_else(|| (a.len() != b.len()).then_some(a.len().min(b.len())))
}

#[derive(Debug, Clone)]
pub struct RvMatrixOpts {
    pub families: Vec<Family>,
    pub length: usize,
    pub seed: u64,
    pub mode: GenMode,
    pub trace_dir: PathBuf,
    pub networked: bool,
}

/// Runs each family locally and, when enabled, through a monitor node on the
/// network reached by `connect`. Each family gets a freshly generated trace
/// and its own node; verdict streams of the two paths must agree.
pub fn run_rv_matrix(
    opts: &RvMatrixOpts,
    connect: &dyn Fn() -> Result<Arc<dyn Transport>, TransportError>,
) -> Result<Vec<RvBenchReport>, BenchError> {
    fs::create_dir_all(&opts.trace_dir)?;
    let mut reports = Vec::new();
    for &family in &opts.families {
        let path = opts.trace_dir.join(trace_file_name(family, opts.seed));
        let trace = generate_trace(&GenSpec {
            family,
            length: opts.length,
            seed: opts.seed,
            mode: opts.mode,
        });
        write_trace_file(&path, &trace)?;
        let (local, local_lines) = bench_rv_local(family, &path)?;
        log::info!("{family} local {:.3}s", local.total_seconds);
        if opts.networked {
            let input = Topic::new(RV_INPUT_TOPIC).unwrap();
            let out = Topic::new(RV_VERDICT_TOPIC).unwrap();
            let cfg = RvNodeConfig::new(&make_formula(family).to_string(), input.clone(), out.clone());
            let node = spawn_rv_node(&cfg, connect()?)?;
            let bench_side = connect()?;
            let (net, net_lines) = bench_rv_networked(family, &path, bench_side.as_ref(), &input, &out)?;
            node.stop()?;
            if let Some(index) = first_mismatch(&net_lines, &local_lines) {
                return Err(BenchError::VerdictMismatch { index });
            }
            log::info!("{family} networked {:.3}s", net.total_seconds);
            reports.push(net);
        }
        reports.push(local);
    }
    Ok(reports)
}

/// Writes reports in the wide layout: one row per family and scale, one
/// column per path label (in first-seen order).
pub fn write_table_csv(reports: &[RvBenchReport], path: impl AsRef<Path>) -> Result<(), BenchError> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut labels: Vec<&str> = Vec::new();
    let mut rows: Vec<String> = Vec::new();
    for r in reports {
        if !labels.contains(&r.path_label.as_str()) {
            labels.push(&r.path_label);
        }
        let row = format!("{}{}", r.family, r.scale);
        if !rows.contains(&row) {
            rows.push(row);
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["family"];
    header.extend(&labels);
    w.write_record(&header)?;
    for row in &rows {
        let mut rec = vec![row.clone()];
        for label in &labels {
            let cell = reports
                .iter()
                .find(|r| format!("{}{}", r.family, r.scale) == *row && r.path_label == *label)
                .map(|r| format!("{:.6}", r.total_seconds))
                .unwrap_or_default();
            rec.push(cell);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
