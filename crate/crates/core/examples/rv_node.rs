//! Runs a monitor node on a broker: records published on `rv/in` produce
//! verdicts on `rv/verdict`.
//!
//! Run with `cargo run --example rv_node`.

use std::sync::Arc;
use std::time::Duration;

use rvc::pubsub::{now_epoch_ns, Broker, QosConfig, TcpClient, Topic, Transport};
use rvc::rv::{spawn_rv_node, RvNodeConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let broker = Broker::bind("127.0.0.1:0", QosConfig::default())?;
    let input = Topic::new("rv/in")?;
    let verdicts = Topic::new("rv/verdict")?;

    let cfg = RvNodeConfig::new("historically[0:10] (alarm -> once[0:2] ack)", input.clone(), verdicts.clone());
    let node = spawn_rv_node(&cfg, Arc::new(TcpClient::connect(&broker.endpoint())?))?;

    let client = TcpClient::connect(&broker.endpoint())?;
    let sub = client.subscribe(&verdicts)?;
    let records = [
        r#"{"time":0,"alarm":false,"ack":false}"#,
        r#"{"time":1,"alarm":true,"ack":true}"#,
        r#"{"time":4,"alarm":true,"ack":false}"#,
        r#"{"time":20,"alarm":false,"ack":false}"#,
    ];
    for r in records {
        client.publish(&input, r.as_bytes(), now_epoch_ns())?;
        let v = sub.next_message(Duration::from_secs(2))?.ok_or("no verdict")?;
        println!("{r:<40} -> {}", String::from_utf8_lossy(&v.payload));
    }
    let stats = node.stop()?;
    println!("{}", stats.snapshot());
    Ok(())
}
