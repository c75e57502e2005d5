//! Combines two timed topics into one stream of merged records and monitors a
//! property spanning both.
//!
//! Run with `cargo run --example synchronizer`.

use std::sync::Arc;
use std::time::Duration;

use rvc::pubsub::{now_epoch_ns, Loopback, Topic, Transport};
use rvc::rv::{spawn_rv_node, RvNodeConfig};
use rvc::sync::{spawn_sync, SyncConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hub = Loopback::new();
    let door = Topic::new("robot/door")?;
    let motor = Topic::new("robot/motor")?;
    let merged = Topic::new("robot/state")?;
    let verdicts = Topic::new("robot/verdict")?;

    let cfg = SyncConfig::new(vec![door.clone(), motor.clone()], merged.clone());
    let _sync = spawn_sync(cfg, Arc::new(hub.client()), Arc::new(hub.client()))?;
    // Merged keys are "<last topic segment>.<field>".
    let rv = RvNodeConfig::new("motor.on -> !door.open", merged.clone(), verdicts.clone());
    let _node = spawn_rv_node(&rv, Arc::new(hub.client()))?;

    let client = hub.client();
    let sub = client.subscribe(&verdicts)?;
    for (t, open, on) in [(0, false, true), (1, true, false), (2, true, true), (3, false, false)] {
        client.publish(&door, format!(r#"{{"time":{t},"open":{open}}}"#).as_bytes(), now_epoch_ns())?;
        client.publish(&motor, format!(r#"{{"time":{t},"on":{on}}}"#).as_bytes(), now_epoch_ns())?;
    }
    // The last instant is emitted once a later record shows it is complete.
    client.publish(&door, br#"{"time":4,"open":false}"#, now_epoch_ns())?;
    client.publish(&motor, br#"{"time":4,"on":false}"#, now_epoch_ns())?;
    while let Some(v) = sub.next_message(Duration::from_millis(500))? {
        println!("{}", String::from_utf8_lossy(&v.payload));
    }
    Ok(())
}
