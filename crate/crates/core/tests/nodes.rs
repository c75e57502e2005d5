//! End-to-end behaviour of the synchronizer, bridge and monitor nodes over
//! real brokers.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rvc::bridge::{spawn_bridge, BridgeConfig};
use rvc::mtl::{parse, Monitor};
use rvc::pubsub::{now_epoch_ns, Broker, Loopback, QosConfig, TcpClient, Topic, Transport};
use rvc::rv::{spawn_rv_node, RvNodeConfig};
use rvc::sync::{spawn_sync, SyncConfig};
use rvc::trace::{decode_timed_record, encode_verdict};

fn t(s: &str) -> Topic {
    Topic::new(s).unwrap()
}

fn broker() -> Broker {
    Broker::bind("127.0.0.1:0", QosConfig::default()).unwrap()
}

fn tcp(b: &Broker) -> Arc<dyn Transport> {
    Arc::new(TcpClient::connect(&b.endpoint()).unwrap())
}

fn drain(sub: &rvc::pubsub::Subscription, idle: Duration) -> Vec<String> {
    let mut out = Vec::new();
    while let Some(m) = sub.next_message(idle).unwrap() {
        out.push(String::from_utf8(m.payload).unwrap());
    }
    out
}

#[test]
fn monitor_node_matches_local_monitor() {
    let b = broker();
    let cfg = RvNodeConfig::new("once[0:3] p", t("in"), t("out"));
    let node = spawn_rv_node(&cfg, tcp(&b)).unwrap();
    let client = tcp(&b);
    let sub = client.subscribe(&t("out")).unwrap();
    let inputs: Vec<String> = (0..200)
        .map(|i| format!(r#"{{"time":{},"p":{}}}"#, i * 2, i % 7 == 0))
        .collect();
    for line in &inputs {
        client.publish(&t("in"), line.as_bytes(), now_epoch_ns()).unwrap();
    }
    let got = drain(&sub, Duration::from_secs(2));
    let mut m = Monitor::new(parse("once[0:3] p").unwrap(), true);
    let want: Vec<String> = inputs
        .iter()
        .map(|l| encode_verdict(&m.step(&decode_timed_record(l).unwrap()).unwrap()))
        .collect();
    assert_eq!(got, want);
    let counts = node.stop().unwrap().snapshot();
    assert_eq!((counts.received, counts.verdicts), (200, 200));
}

#[test]
fn monitor_node_skips_bad_messages_and_continues() {
    let hub = Loopback::new();
    let cfg = RvNodeConfig::new("p", t("in"), t("out"));
    let node = spawn_rv_node(&cfg, Arc::new(hub.client())).unwrap();
    let c = hub.client();
    let sub = c.subscribe(&t("out")).unwrap();
    for line in [r#"{"time":1,"p":true}"#, "not json", r#"{"time":0,"p":true}"#, r#"{"time":2,"q":true}"#, r#"{"time":3,"p":false}"#] {
        c.publish(&t("in"), line.as_bytes(), 0).unwrap();
    }
    let got = drain(&sub, Duration::from_millis(500));
    assert_eq!(got, vec![r#"{"time":1,"verdict":true}"#, r#"{"time":3,"verdict":false}"#]);
    let counts = node.stop().unwrap().snapshot();
    assert_eq!(counts.received, 5);
    assert!(counts.decode_errors >= 1 && counts.order_errors >= 1);
}

#[test]
fn sync_node_publishes_merged_records() {
    let b = broker();
    let cfg = SyncConfig::new(vec![t("a/x"), t("b/y")], t("merged"));
    let node = spawn_sync(cfg, tcp(&b), tcp(&b)).unwrap();
    let c = tcp(&b);
    let sub = c.subscribe(&t("merged")).unwrap();
    for i in 0..=20u64 {
        c.publish(&t("a/x"), format!(r#"{{"time":{i},"v":{}}}"#, i % 2 == 0).as_bytes(), 0).unwrap();
        c.publish(&t("b/y"), format!(r#"{{"time":{i},"w":{}}}"#, i % 3 == 0).as_bytes(), 0).unwrap();
    }
    let got = drain(&sub, Duration::from_secs(1));
    assert!(got.len() >= 20, "only {} merged records", got.len());
    for (i, line) in got.iter().enumerate() {
        let r = decode_timed_record(line).unwrap();
        assert_eq!(r.time, i as u64);
        assert_eq!(r.get("x.v"), Some(i % 2 == 0));
        assert_eq!(r.get("y.w"), Some(i % 3 == 0));
    }
    assert_eq!(node.stop().unwrap().snapshot().received, 42);
}

#[test]
fn bridge_chain_preserves_order_and_timestamps() {
    let (a, b, c) = (broker(), broker(), broker());
    let ab = BridgeConfig::new(&a.endpoint(), &b.endpoint()).topics([t("data")]);
    let bc = BridgeConfig::new(&b.endpoint(), &c.endpoint()).topics([t("data")]);
    let _ab = spawn_bridge(&ab, tcp(&a), tcp(&b)).unwrap();
    let _bc = spawn_bridge(&bc, tcp(&b), tcp(&c)).unwrap();
    let far = tcp(&c);
    let sub = far.subscribe(&t("data")).unwrap();
    let near = tcp(&a);
    for i in 0..500u64 {
        near.publish(&t("data"), &i.to_be_bytes(), 1000 + i).unwrap();
    }
    for i in 0..500u64 {
        let m = sub.next_message(Duration::from_secs(5)).unwrap().expect("message lost");
        assert_eq!(m.payload, i.to_be_bytes());
        assert_eq!(m.publish_ts, 1000 + i);
    }
    assert!(sub.next_message(Duration::from_millis(200)).unwrap().is_none());
}

#[test]
fn bridge_hops_add_latency() {
    fn mean_rtt(pub_side: &dyn Transport, sub_side: &dyn Transport, topic: &Topic) -> f64 {
        let sub = sub_side.subscribe(topic).unwrap();
        let n = 300;
        let mut total = 0.0;
        for i in 0..n {
            let start = Instant::now();
            pub_side.publish(topic, &[i as u8], 0).unwrap();
            sub.next_message(Duration::from_secs(5)).unwrap().unwrap();
            total += start.elapsed().as_secs_f64();
        }
        total / n as f64
    }
    let (a, b) = (broker(), broker());
    let direct = mean_rtt(tcp(&a).as_ref(), tcp(&a).as_ref(), &t("lat"));
    let cfg = BridgeConfig::new(&a.endpoint(), &b.endpoint()).topics([t("lat")]);
    let _bridge = spawn_bridge(&cfg, tcp(&a), tcp(&b)).unwrap();
    let bridged = mean_rtt(tcp(&a).as_ref(), tcp(&b).as_ref(), &t("lat"));
    assert!(bridged > direct, "bridged {bridged:e} s not above direct {direct:e} s");
}
