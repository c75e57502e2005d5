//! Background participants (synchronizer, bridge, monitor, echo responder)
//! run on their own thread behind a [`NodeHandle`].

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::pubsub::TransportError;

/// How often node loops check for a stop request while idle.
pub(crate) const POLL: Duration = Duration::from_millis(50);

/// A participant running on a background thread. Dropping the handle stops it.
pub struct NodeHandle<S> {
    stop: Arc<AtomicBool>,
    stats: Arc<S>,
    thread: Option<JoinHandle<Result<(), TransportError>>>,
}

impl<S: Send + Sync + 'static> NodeHandle<S> {
    pub(crate) fn spawn<F>(name: &str, stats: S, body: F) -> NodeHandle<S>
    where
        F: FnOnce(&AtomicBool, &S) -> Result<(), TransportError> + Send + 'static,
    {
        let stop = Arc::new(AtomicBool::new(false));
        let stats = Arc::new(stats);
        let thread = {
            let (stop, stats) = (stop.clone(), stats.clone());
            thread::Builder::new()
                .name(name.into())
                .spawn(move || body(&stop, &stats))
                .expect("spawn node thread")
        };
        NodeHandle {
            stop,
            stats,
            thread: Some(thread),
        }
    }
}

impl<S> NodeHandle<S> {
    /// Live counters.
    pub fn stats(&self) -> &S {
        &self.stats
    }

    /// True once the node loop has exited, e.g. after losing its connection.
    pub fn is_finished(&self) -> bool {
        self.thread.as_ref().is_none_or(|h| h.is_finished())
    }

    /// Requests a stop, waits for the loop to exit and returns its result.
    pub fn stop(mut self) -> Result<Arc<S>, TransportError> {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.thread.take() {
            h.join().expect("node thread panicked")?;
        }
        Ok(self.stats.clone())
    }
}

impl<S> Drop for NodeHandle<S> {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.thread.take() {
            let _ = h.join();
        }
    }
}
