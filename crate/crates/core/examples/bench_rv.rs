//! Compares networked monitoring through a broker with local replay for every
//! timescales family at scale 10, checking that both produce the same verdicts.
//!
//! Run with `cargo run --release --example bench_rv [length]`.

use rvc::bench::{run_rv_matrix, RvMatrixOpts};
use rvc::pubsub::{Broker, QosConfig, TcpClient, Transport};
use rvc::timescales::{list_families, GenMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let length: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(100_000);
    let broker = Broker::bind("127.0.0.1:0", QosConfig::default())?;
    let dir = tempfile::tempdir()?;
    let opts = RvMatrixOpts {
        families: list_families().into_iter().filter(|f| f.scale == 10).collect(),
        length,
        seed: 1,
        mode: GenMode::Satisfying,
        trace_dir: dir.path().to_path_buf(),
        networked: true,
    };
    let endpoint = broker.endpoint();
    let connect = move || {
        TcpClient::connect(&endpoint).map(|c| std::sync::Arc::new(c) as std::sync::Arc<dyn Transport>)
    };
    let reports = run_rv_matrix(&opts, &connect)?;
    for pair in reports.chunks(2) {
        println!(
            "{:<16} networked {:>8.3} s  local {:>8.3} s",
            format!("{}{}", pair[0].family, pair[0].scale),
            pair[0].total_seconds,
            pair[1].total_seconds
        );
    }
    Ok(())
}
