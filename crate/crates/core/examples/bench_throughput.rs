//! Payload-size sweep against a broker on the loopback interface.
//!
//! Run with `cargo run --release --example bench_throughput [out.csv]`.

use rvc::bench::{bench_throughput, write_csv, ThroughputOpts, PAYLOAD_SWEEP};
use rvc::pubsub::{Broker, QosConfig, TcpClient};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let broker = Broker::bind("127.0.0.1:0", QosConfig::default())?;
    let publisher = TcpClient::connect(&broker.endpoint())?;
    let subscriber = TcpClient::connect(&broker.endpoint())?;

    let mut rows = Vec::new();
    for payload in PAYLOAD_SWEEP {
        let report = bench_throughput(&publisher, &subscriber, &ThroughputOpts::new(payload))?;
        println!(
            "{:>8} B  {:>12.0} msg/s  {:>10.1} Mbit/s",
            report.payload_bytes, report.msgs_per_sec, report.mbits_per_sec
        );
        rows.push(report);
    }
    if let Some(path) = std::env::args().nth(1) {
        write_csv(&rows, &path)?;
        println!("wrote {path}");
    }
    Ok(())
}
