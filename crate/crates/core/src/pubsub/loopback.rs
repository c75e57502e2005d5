use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use crossbeam_channel::{unbounded, Sender};

use super::{LinkStatus, Message, Subscription, Topic, Transport, TransportError};

/// Subscribers of one topic, keyed by subscription id.
type Routes = HashMap<Topic, Vec<(u64, Sender<Message>)>>;

#[derive(Default)]
struct Hub {
    routes: Mutex<Routes>,
    status: Arc<LinkStatus>,
    next_id: AtomicU64,
}

/// In-process broker. Clients of one hub see each other's messages exactly as
/// they would through a TCP broker. Subscription queues are unbounded.
#[derive(Clone, Default)]
pub struct Loopback {
    hub: Arc<Hub>,
}

fn registry() -> &'static Mutex<HashMap<String, Loopback>> {
    static REGISTRY: OnceLock<Mutex<HashMap<String, Loopback>>> = OnceLock::new();
    REGISTRY.get_or_init(Default::default)
}

impl Loopback {
    pub fn new() -> Loopback {
        Loopback::default()
    }

    /// The process-wide hub called `name`, created on first use.
    /// A hub that was shut down is replaced by a fresh one.
    pub fn named(name: &str) -> Loopback {
        let mut reg = registry().lock().unwrap();
        let entry = reg.entry(name.to_string()).or_default();
        if entry.hub.status.is_closed() {
            *entry = Loopback::new();
        }
        entry.clone()
    }

    pub fn client(&self) -> LoopbackClient {
        LoopbackClient {
            hub: self.hub.clone(),
        }
    }

    /// Closes the hub: pending messages stay readable, further publishes fail.
    pub fn shutdown(&self) {
        self.hub.status.close("loopback hub shut down");
        self.hub.routes.lock().unwrap().clear();
    }
}

#[derive(Clone)]
pub struct LoopbackClient {
    hub: Arc<Hub>,
}

impl Transport for LoopbackClient {
    fn publish(&self, topic: &Topic, payload: &[u8], publish_ts: u64) -> Result<(), TransportError> {
        self.hub.status.check()?;
        let routes = self.hub.routes.lock().unwrap();
        if let Some(list) = routes.get(topic) {
            for (_, tx) in list {
                let _ = tx.send(Message {
                    topic: topic.clone(),
                    publish_ts,
                    payload: payload.to_vec(),
                });
            }
        }
        Ok(())
    }

    fn subscribe_many(&self, topics: &[Topic]) -> Result<Subscription, TransportError> {
        self.hub.status.check()?;
        let mut topics = topics.to_vec();
        topics.sort();
        topics.dedup();
        let id = self.hub.next_id.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = unbounded();
        {
            let mut routes = self.hub.routes.lock().unwrap();
            for t in &topics {
                routes.entry(t.clone()).or_default().push((id, tx.clone()));
            }
        }
        let hub = Arc::downgrade(&self.hub);
        let cleanup = Box::new(move || {
            if let Some(hub) = hub.upgrade() {
                let mut routes = hub.routes.lock().unwrap();
                for t in &topics {
                    if let Some(list) = routes.get_mut(t) {
                        list.retain(|(i, _)| *i != id);
                        if list.is_empty() {
                            routes.remove(t);
                        }
                    }
                }
            }
        });
        Ok(Subscription::new(rx, self.hub.status.clone(), cleanup))
    }

    fn label(&self) -> &'static str {
        "loopback"
    }
}
