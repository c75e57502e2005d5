//! Starts a broker, subscribes over TCP and publishes a few messages; then
//! does the same over the in-process loopback transport.
//!
//! Run with `cargo run --example pubsub`.

use std::time::Duration;

use rvc::pubsub::{now_epoch_ns, Broker, Loopback, QosConfig, TcpClient, Topic, Transport};

fn round_trip(publisher: &dyn Transport, subscriber: &dyn Transport) -> Result<(), Box<dyn std::error::Error>> {
    let topic = Topic::new("demo/greetings")?;
    let sub = subscriber.subscribe(&topic)?;
    for i in 0..3 {
        publisher.publish(&topic, format!("hello #{i}").as_bytes(), now_epoch_ns())?;
    }
    for _ in 0..3 {
        let m = sub
            .next_message(Duration::from_secs(1))?
            .ok_or("message did not arrive")?;
        println!("[{}] {} {}", subscriber.label(), m.topic, String::from_utf8_lossy(&m.payload));
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let broker = Broker::bind("127.0.0.1:0", QosConfig::default())?;
    println!("broker listening on {}", broker.endpoint());
    let a = TcpClient::connect(&broker.endpoint())?;
    let b = TcpClient::connect(&broker.endpoint())?;
    round_trip(&a, &b)?;

    let hub = Loopback::new();
    round_trip(&hub.client(), &hub.client())?;
    Ok(())
}
