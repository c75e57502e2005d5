use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_channel::{bounded, unbounded, Receiver, Sender};
use log::{debug, warn};

use super::frame::{self, encode_frame, raw_kind_topic, Frame, FrameKind, WireError};
use super::{Topic, DEFAULT_HIGH_WATERMARK};

/// Delivery settings. Delivery is always reliable and keeps every message;
/// only the per-subscriber queue bound is configurable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QosConfig {
    /// Frames buffered per subscriber connection before publishers are paused.
    /// `None` buffers without bound.
    pub high_watermark: Option<usize>,
}

impl Default for QosConfig {
    fn default() -> Self {
        QosConfig {
            high_watermark: Some(DEFAULT_HIGH_WATERMARK),
        }
    }
}

enum Out {
    Frame(Arc<Vec<u8>>),
    Close,
}

#[derive(Clone)]
struct Subscriber {
    conn: u64,
    tx: Sender<Out>,
}

/// Topic -> subscriber connections. Lists are replaced on change so routing a
/// message only clones an `Arc`.
#[derive(Default)]
struct Router {
    routes: RwLock<HashMap<String, Arc<[Subscriber]>>>,
}

impl Router {
    fn subscribe(&self, topic: &str, sub: Subscriber) {
        let mut routes = self.routes.write().unwrap();
        let current = routes.get(topic).cloned().unwrap_or_else(|| Arc::from(vec![]));
        if current.iter().any(|s| s.conn == sub.conn) {
            return;
        }
        let mut next = current.to_vec();
        next.push(sub);
        routes.insert(topic.to_string(), next.into());
    }

    fn unsubscribe(&self, topic: &str, conn: u64) {
        let mut routes = self.routes.write().unwrap();
        if let Some(current) = routes.get(topic) {
            let next: Vec<Subscriber> = current.iter().filter(|s| s.conn != conn).cloned().collect();
            if next.is_empty() {
                routes.remove(topic);
            } else {
                routes.insert(topic.to_string(), next.into());
            }
        }
    }

    fn remove_conn(&self, conn: u64) {
        let mut routes = self.routes.write().unwrap();
        routes.retain(|_, subs| {
            if subs.iter().any(|s| s.conn == conn) {
                let next: Vec<Subscriber> = subs.iter().filter(|s| s.conn != conn).cloned().collect();
                *subs = next.into();
            }
            !subs.is_empty()
        });
    }

    fn get(&self, topic: &str) -> Option<Arc<[Subscriber]>> {
        self.routes.read().unwrap().get(topic).cloned()
    }
}

struct Shared {
    router: Router,
    qos: QosConfig,
    stopping: AtomicBool,
    conns: Mutex<HashMap<u64, TcpStream>>,
    threads: Mutex<Vec<JoinHandle<()>>>,
    next_conn: AtomicU64,
}

/// A running broker. Dropping it shuts it down.
pub struct Broker {
    addr: SocketAddr,
    shared: Arc<Shared>,
    acceptor: Option<JoinHandle<()>>,
}

impl Broker {
    /// Binds `endpoint` (`host:port`; port 0 picks a free port) and starts serving.
    pub fn bind(endpoint: &str, qos: QosConfig) -> io::Result<Broker> {
        let addr = endpoint
            .strip_prefix("tcp://")
            .unwrap_or(endpoint)
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no address"))?;
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            router: Router::default(),
            qos,
            stopping: AtomicBool::new(false),
            conns: Mutex::new(HashMap::new()),
            threads: Mutex::new(Vec::new()),
            next_conn: AtomicU64::new(1),
        });
        let acceptor = {
            let shared = shared.clone();
            thread::Builder::new()
                .name("broker-accept".into())
                .spawn(move || accept_loop(listener, shared))?
        };
        debug!("broker listening on {addr}");
        Ok(Broker {
            addr,
            shared,
            acceptor: Some(acceptor),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// `host:port` string clients can connect to.
    pub fn endpoint(&self) -> String {
        self.addr.to_string()
    }

    pub fn connection_count(&self) -> usize {
        self.shared.conns.lock().unwrap().len()
    }

    /// Stops accepting, closes every connection and joins all broker threads.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if self.shared.stopping.swap(true, Ordering::SeqCst) {
            return;
        }
        // Unblock accept().
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        for (_, s) in self.shared.conns.lock().unwrap().drain() {
            let _ = s.shutdown(Shutdown::Both);
        }
        let threads: Vec<_> = self.shared.threads.lock().unwrap().drain(..).collect();
        for h in threads {
            let _ = h.join();
        }
    }
}

impl Drop for Broker {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Serves on `endpoint` until `stop` becomes true.
pub fn broker_run(endpoint: &str, qos: QosConfig, stop: &AtomicBool) -> io::Result<()> {
    let broker = Broker::bind(endpoint, qos)?;
    log::info!("broker serving on {}", broker.endpoint());
    while !stop.load(Ordering::Relaxed) {
        thread::sleep(Duration::from_millis(50));
    }
    broker.shutdown();
    Ok(())
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    for stream in listener.incoming() {
        if shared.stopping.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                warn!("accept failed: {e}");
                continue;
            }
        };
        if let Err(e) = start_connection(stream, &shared) {
            warn!("connection setup failed: {e}");
        }
    }
}

fn start_connection(stream: TcpStream, shared: &Arc<Shared>) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let id = shared.next_conn.fetch_add(1, Ordering::Relaxed);
    let (tx, rx) = match shared.qos.high_watermark {
        Some(n) => bounded(n.max(1)),
        None => unbounded(),
    };
    let write_half = stream.try_clone()?;
    shared.conns.lock().unwrap().insert(id, stream.try_clone()?);

    let writer = thread::Builder::new()
        .name(format!("broker-w{id}"))
        .spawn(move || writer_loop(write_half, rx))?;
    let reader = {
        let shared = shared.clone();
        thread::Builder::new()
            .name(format!("broker-r{id}"))
            .spawn(move || reader_loop(id, stream, tx, shared))?
    };
    let mut threads = shared.threads.lock().unwrap();
    threads.retain(|h| !h.is_finished());
    threads.push(writer);
    threads.push(reader);
    Ok(())
}

fn writer_loop(stream: TcpStream, rx: Receiver<Out>) {
    let mut w = BufWriter::with_capacity(64 * 1024, stream);
    let result = (|| -> io::Result<()> {
        while let Ok(out) = rx.recv() {
            let mut next = Some(out);
            // Drain whatever is queued, then flush once.
            while let Some(out) = next {
                match out {
                    Out::Frame(bytes) => w.write_all(&bytes)?,
                    Out::Close => {
                        w.flush()?;
                        return Ok(());
                    }
                }
                next = rx.try_recv().ok();
            }
            w.flush()?;
        }
        Ok(())
    })();
    if let Err(e) = result {
        debug!("broker writer: {e}");
    }
    let _ = w.get_ref().shutdown(Shutdown::Both);
}

fn err_frame(topic: &str, message: String) -> Arc<Vec<u8>> {
    let topic = Topic::new(topic).unwrap_or_else(|_| Topic::new("_").unwrap());
    Arc::new(encode_frame(&Frame::Err { topic, message }))
}

fn reader_loop(id: u64, stream: TcpStream, tx: Sender<Out>, shared: Arc<Shared>) {
    let mut reader = BufReader::with_capacity(64 * 1024, &stream);
    loop {
        let raw = match frame::read_frame(&mut reader) {
            Ok(Some(raw)) => raw,
            Ok(None) => break,
            Err(WireError::Io(e)) => {
                debug!("conn {id}: {e}");
                break;
            }
            Err(WireError::Frame(e)) => {
                warn!("conn {id}: protocol error: {e}");
                shared.router.remove_conn(id);
                let _ = tx.send(Out::Frame(err_frame("_", e.to_string())));
                let _ = tx.send(Out::Close);
                shared.conns.lock().unwrap().remove(&id);
                return;
            }
        };
        let (kind, topic) = raw_kind_topic(&raw);
        match kind {
            FrameKind::Sub => shared.router.subscribe(
                topic,
                Subscriber {
                    conn: id,
                    tx: tx.clone(),
                },
            ),
            FrameKind::Unsub => shared.router.unsubscribe(topic, id),
            FrameKind::Pub => {
                let Some(subs) = shared.router.get(topic) else {
                    continue;
                };
                let mut raw = raw;
                raw[3] = FrameKind::Msg as u8;
                let bytes = Arc::new(raw);
                for s in subs.iter() {
                    // Blocks at the high watermark; that pauses this publisher.
                    let _ = s.tx.send(Out::Frame(bytes.clone()));
                }
            }
            FrameKind::Msg | FrameKind::Err => {
                let msg = format!("clients may not send {kind:?} frames");
                warn!("conn {id}: {msg}");
                shared.router.remove_conn(id);
                let _ = tx.send(Out::Frame(err_frame(topic, msg)));
                let _ = tx.send(Out::Close);
                shared.conns.lock().unwrap().remove(&id);
                return;
            }
        }
    }
    shared.router.remove_conn(id);
    shared.conns.lock().unwrap().remove(&id);
    let _ = stream.shutdown(Shutdown::Both);
    let _ = tx.try_send(Out::Close);
}
