//! Forwards one topic between two brokers while a denied topic stays local.
//!
//! Run with `cargo run --example bridge`.

use std::sync::Arc;
use std::time::Duration;

use rvc::bridge::{spawn_bridge, BridgeConfig};
use rvc::pubsub::{now_epoch_ns, Broker, QosConfig, TcpClient, Topic, Transport};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let site_a = Broker::bind("127.0.0.1:0", QosConfig::default())?;
    let site_b = Broker::bind("127.0.0.1:0", QosConfig::default())?;
    let telemetry = Topic::new("robot/telemetry")?;
    let secret = Topic::new("robot/keys")?;

    let cfg = BridgeConfig::new(&site_a.endpoint(), &site_b.endpoint())
        .topics([telemetry.clone(), secret.clone()])
        .deny([secret.clone()]);
    let bridge = spawn_bridge(
        &cfg,
        Arc::new(TcpClient::connect(&site_a.endpoint())?),
        Arc::new(TcpClient::connect(&site_b.endpoint())?),
    )?;

    let remote = TcpClient::connect(&site_b.endpoint())?;
    let sub = remote.subscribe_many(&[telemetry.clone(), secret.clone()])?;
    let local = TcpClient::connect(&site_a.endpoint())?;
    for i in 0..5 {
        local.publish(&telemetry, format!(r#"{{"seq":{i}}}"#).as_bytes(), now_epoch_ns())?;
        local.publish(&secret, b"do not forward", now_epoch_ns())?;
    }
    while let Some(m) = sub.next_message(Duration::from_millis(300))? {
        println!("site B got {} {}", m.topic, String::from_utf8_lossy(&m.payload));
    }
    println!("forwarded {}", bridge.stop()?.forwarded());
    Ok(())
}
