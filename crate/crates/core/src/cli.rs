//! The `rvc` command line: one executable serving every participant role.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime or
//! transport failure, 3 verification failure (oracle check, verdict mismatch).

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Once};
use std::thread;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{
    self, bench_latency, bench_rv_local, bench_rv_networked, bench_throughput, first_mismatch,
    run_rv_matrix, write_csv, write_table_csv, BenchError, EchoStats, LatencyOpts, RvMatrixOpts,
    ThroughputOpts,
};
use crate::bridge::{bridge_run, BridgeConfig, BridgeRunError, BridgeStats};
use crate::mtl::{oracle_eval, parse, Monitor};
use crate::pubsub::{
    broker_run, connect, now_epoch_ns, parse_topic_list, Broker, QosConfig,
    Topic, Transport, DEFAULT_HIGH_WATERMARK, DEFAULT_PORT, ENDPOINT_ENV,
};
use crate::rv::{rv_node_run, rv_replay_local, Emit, RvNodeConfig, RvRunError, RvStats};
use crate::sync::{sync_run, SyncConfig, SyncRunError, SyncStats, DEFAULT_MAX_TOPICS, DEFAULT_QUEUE_DEPTH};
use crate::timescales::{
    generate_trace, list_families, make_formula, trace_file_name, Family, FamilyName, GenMode,
    GenSpec, SCALES,
};
use crate::trace::{encode_verdict, read_trace_file, write_trace_file};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Verification(_) => EXIT_VERIFY,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) | CliError::Verification(m) => m,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

impl From<SyncRunError> for CliError {
    fn from(e: SyncRunError) -> Self {
        match e {
            SyncRunError::Config(e) => usage(e),
            SyncRunError::Transport(e) => runtime(e),
        }
    }
}

impl From<BridgeRunError> for CliError {
    fn from(e: BridgeRunError) -> Self {
        match e {
            BridgeRunError::Config(e) => usage(e),
            BridgeRunError::Transport(e) => runtime(e),
        }
    }
}

impl From<RvRunError> for CliError {
    fn from(e: RvRunError) -> Self {
        match e {
            RvRunError::Config(e) => usage(e),
            RvRunError::Transport(e) => runtime(e),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::VerdictMismatch { .. } => CliError::Verification(e.to_string()),
            BenchError::InvalidArg(_) => usage(e),
            _ => runtime(e),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rvc", version, about = "Monitor temporal properties of messages on pub/sub networks")]
struct Cli {
    /// Broker address (host:port, tcp://host:port) or in-process hub (mem://name).
    #[arg(long, global = true, env = ENDPOINT_ENV, default_value_t = default_endpoint_flag())]
    endpoint: String,

    /// Log filter: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

fn default_endpoint_flag() -> String {
    format!("127.0.0.1:{DEFAULT_PORT}")
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a broker.
    Broker(BrokerArgs),
    /// Monitor a topic and publish verdicts.
    Monitor(MonitorArgs),
    /// Synchronize several timed topics into one merged topic.
    Sync(SyncArgs),
    /// Forward selected topics from one network to another.
    Bridge(BridgeArgs),
    /// Generate timescales benchmark traces.
    Gen(GenArgs),
    /// Monitor a trace file locally and print verdicts.
    Replay(ReplayArgs),
    /// Evaluate a formula on a trace file with the brute-force reference evaluator.
    Oracle(OracleArgs),
    /// Publish each line of a file as one message.
    Publish(PublishArgs),
    /// Print messages received on topics, one per line.
    Subscribe(SubscribeArgs),
    /// Benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Debug, Args)]
struct RunFor {
    /// Stop after this many seconds instead of waiting for a signal.
    #[arg(long, value_name = "SECONDS")]
    run_for: Option<f64>,
}

#[derive(Debug, Args)]
struct BrokerArgs {
    /// Address to listen on.
    #[arg(long, default_value_t = format!("0.0.0.0:{DEFAULT_PORT}"))]
    listen: String,
    /// Messages queued per subscriber before publishers are paused; 0 is unbounded.
    #[arg(long, default_value_t = DEFAULT_HIGH_WATERMARK)]
    high_watermark: usize,
    #[command(flatten)]
    run_for: RunFor,
}

#[derive(Debug, Args)]
struct MonitorArgs {
    /// Formula text, or @path to read it from a file.
    #[arg(long)]
    formula: String,
    /// Input topic.
    #[arg(long = "in", default_value = bench::RV_INPUT_TOPIC)]
    input: String,
    /// Verdict topic.
    #[arg(long = "out", default_value = bench::RV_VERDICT_TOPIC)]
    output: String,
    /// Read missing atoms as false instead of skipping the message.
    #[arg(long)]
    lenient: bool,
    /// Publish only when the verdict changes.
    #[arg(long)]
    on_change: bool,
    #[command(flatten)]
    run_for: RunFor,
}

#[derive(Debug, Args)]
struct SyncArgs {
    /// Comma-separated input topics.
    #[arg(long)]
    topics: String,
    /// Topic for merged records.
    #[arg(long, default_value = "rv/sync")]
    output: String,
    /// Queue depth per input topic.
    #[arg(long, default_value_t = DEFAULT_QUEUE_DEPTH)]
    depth: usize,
    /// Maximum number of input topics.
    #[arg(long, default_value_t = DEFAULT_MAX_TOPICS)]
    max_topics: usize,
    /// Network to publish merged records on (defaults to --endpoint).
    #[arg(long)]
    out_endpoint: Option<String>,
    #[command(flatten)]
    run_for: RunFor,
}

#[derive(Debug, Args)]
struct BridgeArgs {
    /// Source network.
    #[arg(long)]
    src: String,
    /// Destination network.
    #[arg(long)]
    dst: String,
    /// Comma-separated topics to forward.
    #[arg(long, default_value = "")]
    allow: String,
    /// Comma-separated topics never to forward.
    #[arg(long, default_value = "")]
    deny: String,
    /// Topics to forward when --allow is empty.
    #[arg(long, default_value = "")]
    topics: String,
    #[command(flatten)]
    run_for: RunFor,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Satisfying,
    Random,
}

impl From<ModeArg> for GenMode {
    fn from(m: ModeArg) -> GenMode {
        match m {
            ModeArg::Satisfying => GenMode::Satisfying,
            ModeArg::Random => GenMode::Random,
        }
    }
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Family name, e.g. AbsentAQ.
    #[arg(long, required_unless_present = "all")]
    family: Option<String>,
    /// Metric scale: 10, 100 or 1000.
    #[arg(long, required_unless_present = "all")]
    scale: Option<u64>,
    /// Generate all 30 family/scale pairs into --dir.
    #[arg(long, conflicts_with_all = ["family", "scale", "out"])]
    all: bool,
    /// Number of records.
    #[arg(long, default_value_t = 1_000_000)]
    length: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "satisfying")]
    mode: ModeArg,
    /// Output file (single family).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output directory for generated files named <family><scale>-<seed>.jsonl.
    #[arg(long, default_value = ".")]
    dir: PathBuf,
    /// Also print the family formula.
    #[arg(long)]
    print_formula: bool,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Formula text, or @path.
    #[arg(long)]
    formula: String,
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    on_change: bool,
    #[arg(long)]
    lenient: bool,
}

#[derive(Debug, Args)]
struct OracleArgs {
    /// Formula text, or @path.
    #[arg(long)]
    formula: String,
    #[arg(long)]
    trace: PathBuf,
    /// Compare with the online monitor instead of printing; exit 3 on any difference.
    #[arg(long)]
    check: bool,
}

#[derive(Debug, Args)]
struct PublishArgs {
    #[arg(long)]
    topic: String,
    /// File with one message per line; `-` reads standard input.
    #[arg(long, default_value = "-")]
    file: PathBuf,
    /// Messages per second; unpaced when absent.
    #[arg(long)]
    rate: Option<f64>,
}

#[derive(Debug, Args)]
struct SubscribeArgs {
    /// Comma-separated topics.
    #[arg(long)]
    topic: String,
    /// Exit after this many messages.
    #[arg(long)]
    count: Option<u64>,
    /// Exit after this many seconds without a message.
    #[arg(long)]
    idle_timeout: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// Throughput against payload size.
    Throughput(ThroughputArgs),
    /// One-way latency against publish rate (needs `rvc bench echo` running).
    Latency(LatencyArgs),
    /// Networked monitoring against local replay.
    Rv(RvArgs),
    /// Echo responder for the latency benchmark.
    Echo(EchoArgs),
}

#[derive(Debug, Args)]
struct CommonBench {
    /// Network mode label recorded in reports (bridge, host, ipvlan, macvlan, ...).
    #[arg(long, default_value = "host")]
    network_mode: String,
    /// Results root; files go to <root>/<campaign>/<timestamp>.csv.
    #[arg(long, default_value = "results")]
    results: PathBuf,
    /// Write the CSV here instead of the results directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Start a broker in this process on a free local port and use it.
    #[arg(long)]
    spawn_broker: bool,
}

#[derive(Debug, Args)]
struct ThroughputArgs {
    /// Comma-separated payload sizes in bytes.
    #[arg(long, default_value = "8,64,512,4096,32768,262144,1048576")]
    payloads: String,
    /// Messages per payload size (default: about 128 MiB worth, 64..=200000).
    #[arg(long)]
    count: Option<u64>,
    #[arg(long, default_value_t = bench::DEFAULT_WARMUP)]
    warmup: f64,
    #[command(flatten)]
    common: CommonBench,
}

#[derive(Debug, Args)]
struct LatencyArgs {
    /// Comma-separated publish rates in messages per second.
    #[arg(long, default_value = "10,100,1000,10000,100000")]
    rates: String,
    /// Seconds per rate.
    #[arg(long, default_value_t = 5.0)]
    duration: f64,
    #[arg(long, default_value_t = 64)]
    payload: usize,
    #[arg(long, default_value_t = bench::DEFAULT_WARMUP)]
    warmup: f64,
    /// Run an echo responder in this process too.
    #[arg(long)]
    spawn_echo: bool,
    #[command(flatten)]
    common: CommonBench,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PathArg {
    Local,
    Networked,
    Both,
}

#[derive(Debug, Args)]
struct RvArgs {
    /// Family name; omit with --matrix.
    #[arg(long, required_unless_present = "matrix")]
    family: Option<String>,
    #[arg(long, required_unless_present = "matrix")]
    scale: Option<u64>,
    /// Run every family and scale and also write the wide table CSV.
    #[arg(long, conflicts_with_all = ["family", "scale", "trace"])]
    matrix: bool,
    /// Only the listed scales with --matrix (comma-separated).
    #[arg(long)]
    scales: Option<String>,
    /// Existing trace file; generated when absent.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000)]
    length: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "satisfying")]
    gen_mode: ModeArg,
    #[arg(long, value_enum, default_value = "both")]
    path: PathArg,
    /// Use an already running `rvc monitor` instead of starting one.
    #[arg(long)]
    external_node: bool,
    #[arg(long, default_value = bench::RV_INPUT_TOPIC)]
    in_topic: String,
    #[arg(long, default_value = bench::RV_VERDICT_TOPIC)]
    verdict_topic: String,
    /// Directory for generated traces.
    #[arg(long, default_value = "traces")]
    trace_dir: PathBuf,
    /// Wide table CSV path (default: <results>/rv-table/<timestamp>.csv).
    #[arg(long)]
    table: Option<PathBuf>,
    #[command(flatten)]
    common: CommonBench,
}

#[derive(Debug, Args)]
struct EchoArgs {
    #[command(flatten)]
    run_for: RunFor,
}

static STOP: AtomicBool = AtomicBool::new(false);

fn install_signal_handler() {
    static INSTALL: Once = Once::new();
    INSTALL.call_once(|| {
        if let Err(e) = ctrlc::set_handler(|| STOP.store(true, Ordering::SeqCst)) {
            log::warn!("cannot install signal handler: {e}");
        }
    });
}

/// Stop flag for a long-running command: set by SIGINT/SIGTERM or after
/// `run_for` seconds.
fn stop_flag(run_for: &RunFor) -> &'static AtomicBool {
    install_signal_handler();
    STOP.store(false, Ordering::SeqCst);
    if let Some(secs) = run_for.run_for {
        let deadline = Duration::from_secs_f64(secs.max(0.0));
        thread::spawn(move || {
            thread::sleep(deadline);
            STOP.store(true, Ordering::SeqCst);
        });
    }
    &STOP
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::new()
        .parse_filters(level)
        .format_timestamp_millis()
        .try_init();
}

fn topic(s: &str) -> Result<Topic, CliError> {
    Topic::new(s).map_err(usage)
}

fn topics(s: &str) -> Result<Vec<Topic>, CliError> {
    parse_topic_list(s).map_err(usage)
}

fn formula_text(arg: &str) -> Result<String, CliError> {
    match arg.strip_prefix('@') {
        Some(path) => fs::read_to_string(path)
            .map(|s| s.trim().to_string())
            .map_err(|e| usage(format!("{path}: {e}"))),
        None => Ok(arg.to_string()),
    }
}

fn family(name: &str, scale: u64) -> Result<Family, CliError> {
    let name: FamilyName = name.parse().map_err(usage)?;
    if !SCALES.contains(&scale) {
        return Err(usage(format!("scale must be one of {SCALES:?}")));
    }
    Ok(Family::new(name, scale))
}

fn connect_to(endpoint: &str) -> Result<Arc<dyn Transport>, CliError> {
    connect(endpoint).map_err(runtime)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse().map_err(|_| usage(format!("invalid {what} {x:?}"))))
        .collect()
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(&cli.log_level);
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("rvc: {}", e.message());
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let endpoint = cli.endpoint;
    match cli.command {
        Command::Broker(a) => cmd_broker(a),
        Command::Monitor(a) => cmd_monitor(a, &endpoint),
        Command::Sync(a) => cmd_sync(a, &endpoint),
        Command::Bridge(a) => cmd_bridge(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Publish(a) => cmd_publish(a, &endpoint),
        Command::Subscribe(a) => cmd_subscribe(a, &endpoint),
        Command::Bench(BenchCommand::Throughput(a)) => cmd_throughput(a, &endpoint),
        Command::Bench(BenchCommand::Latency(a)) => cmd_latency(a, &endpoint),
        Command::Bench(BenchCommand::Rv(a)) => cmd_bench_rv(a, &endpoint),
        Command::Bench(BenchCommand::Echo(a)) => cmd_echo(a, &endpoint),
    }
}

fn cmd_broker(a: BrokerArgs) -> Result<(), CliError> {
    let qos = QosConfig {
        high_watermark: (a.high_watermark > 0).then_some(a.high_watermark),
    };
    let stop = stop_flag(&a.run_for);
    broker_run(&a.listen, qos, stop).map_err(|e| runtime(format!("broker on {}: {e}", a.listen)))
}

fn cmd_monitor(a: MonitorArgs, endpoint: &str) -> Result<(), CliError> {
    let cfg = RvNodeConfig {
        formula_text: formula_text(&a.formula)?,
        input_topic: topic(&a.input)?,
        verdict_topic: topic(&a.output)?,
        endpoint: endpoint.to_string(),
        strict: !a.lenient,
        emit: if a.on_change { Emit::OnChange } else { Emit::Every },
    };
    let stop = stop_flag(&a.run_for);
    let stats = RvStats::default();
    let result = rv_node_run(&cfg, stop, &stats);
    eprintln!("{}", stats.snapshot());
    Ok(result?)
}

fn cmd_sync(a: SyncArgs, endpoint: &str) -> Result<(), CliError> {
    let cfg = SyncConfig::new(topics(&a.topics)?, topic(&a.output)?)
        .with_depth(a.depth)
        .with_max_topics(a.max_topics);
    cfg.validate().map_err(usage)?;
    let input = connect_to(endpoint)?;
    let output = match &a.out_endpoint {
        Some(ep) => connect_to(ep)?,
        None => input.clone(),
    };
    let stop = stop_flag(&a.run_for);
    let stats = SyncStats::default();
    let result = sync_run(cfg, input.as_ref(), output.as_ref(), stop, &stats);
    let c = stats.snapshot();
    eprintln!(
        "received={} sets={} decode_errors={} order_errors={} merge_errors={}",
        c.received, c.sets, c.decode_errors, c.order_errors, c.merge_errors
    );
    Ok(result?)
}

fn cmd_bridge(a: BridgeArgs) -> Result<(), CliError> {
    let cfg = BridgeConfig::new(&a.src, &a.dst)
        .allow(topics(&a.allow)?)
        .deny(topics(&a.deny)?)
        .topics(topics(&a.topics)?);
    cfg.validate().map_err(usage)?;
    let src = connect_to(&a.src)?;
    let dst = connect_to(&a.dst)?;
    let stop = stop_flag(&a.run_for);
    let stats = BridgeStats::default();
    let result = bridge_run(&cfg, src.as_ref(), dst.as_ref(), stop, &stats);
    eprintln!("forwarded={}", stats.forwarded());
    Ok(result?)
}

fn cmd_gen(a: GenArgs) -> Result<(), CliError> {
    let families = if a.all {
        list_families()
    } else {
        vec![family(a.family.as_deref().unwrap_or_default(), a.scale.unwrap_or_default())?]
    };
    for f in families {
        let path = match (&a.out, a.all) {
            (Some(out), false) => out.clone(),
            _ => a.dir.join(trace_file_name(f, a.seed)),
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(runtime)?;
        }
        let trace = generate_trace(&GenSpec {
            family: f,
            length: a.length,
            seed: a.seed,
            mode: a.mode.into(),
        });
        write_trace_file(&path, &trace).map_err(runtime)?;
        if a.print_formula {
            println!("{f}\t{}\t{}", make_formula(f), path.display());
        } else {
            eprintln!("wrote {} ({} records)", path.display(), trace.len());
        }
    }
    Ok(())
}

fn cmd_replay(a: ReplayArgs) -> Result<(), CliError> {
    let text = formula_text(&a.formula)?;
    parse(&text).map_err(usage)?;
    let emit = if a.on_change { Emit::OnChange } else { Emit::Every };
    let (verdicts, secs) = rv_replay_local(&text, &a.trace, emit, !a.lenient).map_err(runtime)?;
    let mut out = BufWriter::new(io::stdout().lock());
    for v in &verdicts {
        writeln!(out, "{}", encode_verdict(v)).map_err(runtime)?;
    }
    out.flush().map_err(runtime)?;
    eprintln!("{} verdicts in {secs:.6} s", verdicts.len());
    Ok(())
}

fn cmd_oracle(a: OracleArgs) -> Result<(), CliError> {
    let f = parse(&formula_text(&a.formula)?).map_err(usage)?;
    let trace = read_trace_file(&a.trace).map_err(runtime)?;
    let expected = oracle_eval(&f, &trace).map_err(runtime)?;
    if a.check {
        let mut m = Monitor::new(f, true);
        let online = m.run(trace.iter()).map_err(runtime)?;
        return match online.iter().zip(&expected).position(|(x, y)| x != y) {
            None => {
                eprintln!("{} verdicts agree", expected.len());
                Ok(())
            }
            Some(i) => Err(CliError::Verification(format!(
                "monitor and oracle disagree at record {i} (time {}): {} vs {}",
                expected[i].time, online[i].value, expected[i].value
            ))),
        };
    }
    let mut out = BufWriter::new(io::stdout().lock());
    for v in &expected {
        writeln!(out, "{}", encode_verdict(v)).map_err(runtime)?;
    }
    out.flush().map_err(runtime)
}

fn cmd_publish(a: PublishArgs, endpoint: &str) -> Result<(), CliError> {
    let t = topic(&a.topic)?;
    let input: Box<dyn BufRead> = if a.file.as_os_str() == "-" {
        Box::new(BufReader::new(io::stdin()))
    } else {
        Box::new(BufReader::new(fs::File::open(&a.file).map_err(|e| usage(format!("{}: {e}", a.file.display())))?))
    };
    let client = connect_to(endpoint)?;
    let interval = a.rate.filter(|r| *r > 0.0).map(|r| Duration::from_secs_f64(1.0 / r));
    let start = Instant::now();
    let mut n = 0u32;
    for line in input.lines() {
        let line = line.map_err(runtime)?;
        if line.is_empty() {
            continue;
        }
        if let Some(iv) = interval {
            let due = start + iv * n;
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }
        client.publish(&t, line.as_bytes(), now_epoch_ns()).map_err(runtime)?;
        n += 1;
    }
    eprintln!("published {n} messages on {t}");
    Ok(())
}

fn cmd_subscribe(a: SubscribeArgs, endpoint: &str) -> Result<(), CliError> {
    let ts = topics(&a.topic)?;
    if ts.is_empty() {
        return Err(usage("no topic given"));
    }
    let client = connect_to(endpoint)?;
    let sub = client.subscribe_many(&ts).map_err(runtime)?;
    install_signal_handler();
    STOP.store(false, Ordering::SeqCst);
    let idle = a.idle_timeout.map(Duration::from_secs_f64);
    let mut last = Instant::now();
    let mut seen = 0u64;
    let stdout = io::stdout();
    while !STOP.load(Ordering::Relaxed) && a.count.is_none_or(|c| seen < c) {
        match sub.next_message(Duration::from_millis(50)).map_err(runtime)? {
            Some(m) => {
                let mut out = stdout.lock();
                out.write_all(&m.payload).map_err(runtime)?;
                out.write_all(b"\n").map_err(runtime)?;
                out.flush().map_err(runtime)?;
                seen += 1;
                last = Instant::now();
            }
            None => {
                if idle.is_some_and(|d| last.elapsed() >= d) {
                    break;
                }
            }
        }
    }
    Ok(())
}

/// Keeps an in-process broker alive for the duration of a benchmark.
fn bench_endpoint(common: &CommonBench, endpoint: &str) -> Result<(Option<Broker>, String), CliError> {
    if common.spawn_broker {
        let b = Broker::bind("127.0.0.1:0", QosConfig::default()).map_err(runtime)?;
        let ep = b.endpoint();
        Ok((Some(b), ep))
    } else {
        Ok((None, endpoint.to_string()))
    }
}

fn output_path(common: &CommonBench, campaign: &str) -> PathBuf {
    common
        .out
        .clone()
        .unwrap_or_else(|| bench::results_path(&common.results, campaign))
}

fn cmd_throughput(a: ThroughputArgs, endpoint: &str) -> Result<(), CliError> {
    let payloads: Vec<usize> = parse_list(&a.payloads, "payload size")?;
    let (_broker, ep) = bench_endpoint(&a.common, endpoint)?;
    let publisher = connect_to(&ep)?;
    let subscriber = connect_to(&ep)?;
    let mut rows = Vec::new();
    for p in payloads {
        let mut opts = ThroughputOpts::new(p);
        if let Some(c) = a.count {
            opts.message_count = c;
        }
        opts.warmup_fraction = a.warmup;
        opts.network_mode_label = a.common.network_mode.clone();
        let r = bench_throughput(publisher.as_ref(), subscriber.as_ref(), &opts)?;
        println!(
            "payload={} msgs_per_sec={:.0} mbits_per_sec={:.1}",
            r.payload_bytes, r.msgs_per_sec, r.mbits_per_sec
        );
        rows.push(r);
    }
    let path = output_path(&a.common, "throughput");
    write_csv(&rows, &path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_latency(a: LatencyArgs, endpoint: &str) -> Result<(), CliError> {
    let rates: Vec<f64> = parse_list(&a.rates, "rate")?;
    let (_broker, ep) = bench_endpoint(&a.common, endpoint)?;
    let _echo = if a.spawn_echo {
        Some(bench::spawn_echo(connect_to(&ep)?).map_err(runtime)?)
    } else {
        None
    };
    let client = connect_to(&ep)?;
    let mut rows = Vec::new();
    for rate in rates {
        let mut opts = LatencyOpts::new(rate, Duration::from_secs_f64(a.duration));
        opts.payload_bytes = a.payload;
        opts.warmup_fraction = a.warmup;
        let r = bench_latency(client.as_ref(), &opts)?;
        println!(
            "rate={} samples={} p50_us={:.1} p99_us={:.1} mean_us={:.1}{}",
            r.rate_msgs_per_sec,
            r.sample_count,
            r.p50_us,
            r.p99_us,
            r.mean_us,
            if r.below_target { " below_target" } else { "" }
        );
        rows.push(r);
    }
    let path = output_path(&a.common, "latency");
    write_csv(&rows, &path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_bench_rv(a: RvArgs, endpoint: &str) -> Result<(), CliError> {
    let (_broker, ep) = bench_endpoint(&a.common, endpoint)?;
    let reports = if a.matrix {
        let scales: Vec<u64> = match &a.scales {
            Some(s) => parse_list(s, "scale")?,
            None => SCALES.to_vec(),
        };
        let families = list_families()
            .into_iter()
            .filter(|f| scales.contains(&f.scale))
            .collect();
        let opts = RvMatrixOpts {
            families,
            length: a.length,
            seed: a.seed,
            mode: a.gen_mode.into(),
            trace_dir: a.trace_dir.clone(),
            networked: a.path != PathArg::Local,
        };
        let ep2 = ep.clone();
        let reports = run_rv_matrix(&opts, &move || connect(&ep2))?;
        let table = a
            .table
            .clone()
            .unwrap_or_else(|| bench::results_path(&a.common.results, "rv-table"));
        write_table_csv(&reports, &table)?;
        eprintln!("wrote {}", table.display());
        reports
    } else {
        single_rv(&a, &ep)?
    };
    for r in &reports {
        println!("{}{} {} {:.6}", r.family, r.scale, r.path_label, r.total_seconds);
    }
    let path = output_path(&a.common, "rv");
    write_csv(&reports, &path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn single_rv(a: &RvArgs, ep: &str) -> Result<Vec<bench::RvBenchReport>, CliError> {
    let f = family(a.family.as_deref().unwrap_or_default(), a.scale.unwrap_or_default())?;
    let path = match &a.trace {
        Some(p) => p.clone(),
        None => {
            fs::create_dir_all(&a.trace_dir).map_err(runtime)?;
            let p = a.trace_dir.join(trace_file_name(f, a.seed));
            let trace = generate_trace(&GenSpec {
                family: f,
                length: a.length,
                seed: a.seed,
                mode: a.gen_mode.into(),
            });
            write_trace_file(&p, &trace).map_err(runtime)?;
            p
        }
    };
    let mut reports = Vec::new();
    let mut local_lines = None;
    if a.path != PathArg::Networked {
        let (r, lines) = bench_rv_local(f, &path)?;
        reports.push(r);
        local_lines = Some(lines);
    }
    if a.path != PathArg::Local {
        let input = topic(&a.in_topic)?;
        let verdicts = topic(&a.verdict_topic)?;
        let node = if a.external_node {
            None
        } else {
            let cfg = RvNodeConfig::new(&make_formula(f).to_string(), input.clone(), verdicts.clone());
            Some(crate::rv::spawn_rv_node(&cfg, connect_to(ep)?)?)
        };
        let client = connect_to(ep)?;
        let (r, lines) = bench_rv_networked(f, &path, client.as_ref(), &input, &verdicts)?;
        if let Some(node) = node {
            node.stop().map_err(runtime)?;
        }
        if let Some(local) = &local_lines {
            if let Some(i) = first_mismatch(&lines, local) {
                return Err(CliError::Verification(format!(
                    "verdict {i} differs between networked and local runs"
                )));
            }
        }
        reports.insert(0, r);
    }
    Ok(reports)
}

fn cmd_echo(a: EchoArgs, endpoint: &str) -> Result<(), CliError> {
    let client = connect_to(endpoint)?;
    let stop = stop_flag(&a.run_for);
    let stats = EchoStats::default();
    let result = bench::echo_run(client.as_ref(), stop, &stats);
    eprintln!("echoed={}", stats.echoed.load(Ordering::Relaxed));
    result.map_err(runtime)
}
