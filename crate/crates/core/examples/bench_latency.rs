//! Publish-rate sweep against an echo responder, reporting one-way latency.
//!
//! Run with `cargo run --release --example bench_latency [seconds-per-rate]`.

use std::sync::Arc;
use std::time::Duration;

use rvc::bench::{bench_latency, spawn_echo, LatencyOpts, RATE_SWEEP};
use rvc::pubsub::{Broker, QosConfig, TcpClient, Transport};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let secs: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3.0);
    let broker = Broker::bind("127.0.0.1:0", QosConfig::default())?;
    let responder: Arc<dyn Transport> = Arc::new(TcpClient::connect(&broker.endpoint())?);
    let _echo = spawn_echo(responder)?;
    let pinger = TcpClient::connect(&broker.endpoint())?;

    for rate in RATE_SWEEP {
        let r = bench_latency(&pinger, &LatencyOpts::new(rate, Duration::from_secs_f64(secs)))?;
        println!(
            "{:>8} msg/s  n={:<7} p50 {:>8.1} us  p99 {:>8.1} us  mean {:>8.1} us{}",
            rate,
            r.sample_count,
            r.p50_us,
            r.p99_us,
            r.mean_us,
            if r.below_target { "  (rate not reached)" } else { "" }
        );
    }
    Ok(())
}
