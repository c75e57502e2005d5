use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_channel::{bounded, unbounded, Receiver, RecvTimeoutError, Sender};
use log::debug;
use rand::Rng;

use super::frame::{self, decode_frame, encode_data, Frame, FrameKind, WireError};
use super::{LinkStatus, Message, Subscription, Topic, Transport, TransportError};

const OUT_QUEUE: usize = 1024;
const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);

enum Out {
    Frame(Vec<u8>),
    Close,
}

type Routes = HashMap<Topic, Vec<(u64, Sender<Message>)>>;

struct Inner {
    out: Sender<Out>,
    routes: Mutex<Routes>,
    /// Serializes SUB/UNSUB frames with the route table changes they belong to.
    control: Mutex<()>,
    status: Arc<LinkStatus>,
    barrier: Topic,
    waiters: Mutex<HashMap<u64, Sender<()>>>,
    next_id: AtomicU64,
}

impl Inner {
    fn send(&self, bytes: Vec<u8>) -> Result<(), TransportError> {
        self.status.check()?;
        self.out
            .send(Out::Frame(bytes))
            .map_err(|_| self.status.error())
    }

    fn control_frame(&self, kind: FrameKind, topic: &Topic) -> Result<(), TransportError> {
        let frame = match kind {
            FrameKind::Sub => Frame::Sub {
                topic: topic.clone(),
            },
            _ => Frame::Unsub {
                topic: topic.clone(),
            },
        };
        self.send(frame::encode_frame(&frame))
    }

    /// Round-trips a nonce through the broker. Frames from one connection are
    /// handled in order, so every earlier SUB is active once the echo returns.
    fn sync_with_broker(&self) -> Result<(), TransportError> {
        let nonce: u64 = rand::thread_rng().gen();
        let (tx, rx) = bounded(1);
        self.waiters.lock().unwrap().insert(nonce, tx);
        let sent = self.send(encode_data(FrameKind::Pub, &self.barrier, 0, &nonce.to_be_bytes()));
        let result = sent.and_then(|()| match rx.recv_timeout(HANDSHAKE_TIMEOUT) {
            Ok(()) => Ok(()),
            Err(RecvTimeoutError::Timeout) => Err(TransportError::HandshakeTimeout),
            Err(RecvTimeoutError::Disconnected) => Err(self.status.error()),
        });
        self.waiters.lock().unwrap().remove(&nonce);
        result
    }

    fn unsubscribe(&self, id: u64, topics: &[Topic]) {
        let _guard = self.control.lock().unwrap();
        let mut emptied = Vec::new();
        {
            let mut routes = self.routes.lock().unwrap();
            for t in topics {
                if let Some(list) = routes.get_mut(t) {
                    list.retain(|(i, _)| *i != id);
                    if list.is_empty() {
                        routes.remove(t);
                        emptied.push(t.clone());
                    }
                }
            }
        }
        for t in emptied {
            let _ = self.control_frame(FrameKind::Unsub, &t);
        }
    }
}

/// Connection to a [`Broker`](super::Broker) over TCP.
pub struct TcpClient {
    inner: Arc<Inner>,
    stream: TcpStream,
    writer: Option<JoinHandle<()>>,
    reader: Option<JoinHandle<()>>,
}

impl TcpClient {
    pub fn connect(addr: &str) -> Result<TcpClient, TransportError> {
        let addr = addr.strip_prefix("tcp://").unwrap_or(addr);
        let connect_err = |source| TransportError::Connect {
            endpoint: addr.to_string(),
            source,
        };
        let stream = TcpStream::connect(addr).map_err(connect_err)?;
        stream.set_nodelay(true).map_err(connect_err)?;
        let read_half = stream.try_clone().map_err(connect_err)?;
        let write_half = stream.try_clone().map_err(connect_err)?;

        let status = Arc::new(LinkStatus::default());
        let (out_tx, out_rx) = bounded(OUT_QUEUE);
        let barrier = Topic::new(&format!("_rvc/barrier/{:016x}", rand::thread_rng().gen::<u64>()))
            .expect("valid barrier topic");
        let inner = Arc::new(Inner {
            out: out_tx,
            routes: Mutex::new(HashMap::new()),
            control: Mutex::new(()),
            status: status.clone(),
            barrier: barrier.clone(),
            waiters: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        });

        let writer = {
            let status = status.clone();
            thread::Builder::new()
                .name("rvc-client-w".into())
                .spawn(move || writer_loop(write_half, out_rx, status))
                .map_err(connect_err)?
        };
        let reader = {
            let inner = inner.clone();
            thread::Builder::new()
                .name("rvc-client-r".into())
                .spawn(move || reader_loop(read_half, inner))
                .map_err(connect_err)?
        };
        let client = TcpClient {
            inner,
            stream,
            writer: Some(writer),
            reader: Some(reader),
        };
        client.inner.control_frame(FrameKind::Sub, &barrier)?;
        client.inner.sync_with_broker()?;
        Ok(client)
    }

    /// True once the connection has failed or been closed by the broker.
    pub fn is_closed(&self) -> bool {
        self.inner.status.is_closed()
    }
}

impl Transport for TcpClient {
    fn publish(&self, topic: &Topic, payload: &[u8], publish_ts: u64) -> Result<(), TransportError> {
        self.inner
            .send(encode_data(FrameKind::Pub, topic, publish_ts, payload))
    }

    fn subscribe_many(&self, topics: &[Topic]) -> Result<Subscription, TransportError> {
        let inner = &self.inner;
        inner.status.check()?;
        let mut topics = topics.to_vec();
        topics.sort();
        topics.dedup();
        let id = inner.next_id.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = unbounded();
        {
            let _guard = inner.control.lock().unwrap();
            let mut fresh = Vec::new();
            {
                let mut routes = inner.routes.lock().unwrap();
                for t in &topics {
                    let list = routes.entry(t.clone()).or_default();
                    if list.is_empty() {
                        fresh.push(t.clone());
                    }
                    list.push((id, tx.clone()));
                }
            }
            for t in &fresh {
                inner.control_frame(FrameKind::Sub, t)?;
            }
        }
        let cleanup = {
            let inner = Arc::downgrade(inner);
            let topics = topics.clone();
            Box::new(move || {
                if let Some(inner) = inner.upgrade() {
                    inner.unsubscribe(id, &topics);
                }
            })
        };
        let sub = Subscription::new(rx, inner.status.clone(), cleanup);
        inner.sync_with_broker()?;
        Ok(sub)
    }

    fn label(&self) -> &'static str {
        "tcp"
    }
}

impl Drop for TcpClient {
    fn drop(&mut self) {
        if self
            .inner
            .out
            .send_timeout(Out::Close, Duration::from_secs(5))
            .is_err()
        {
            let _ = self.stream.shutdown(Shutdown::Both);
        }
        if let Some(h) = self.writer.take() {
            let _ = h.join();
        }
        let _ = self.stream.shutdown(Shutdown::Both);
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}

fn writer_loop(stream: TcpStream, rx: Receiver<Out>, status: Arc<LinkStatus>) {
    let mut w = BufWriter::with_capacity(64 * 1024, &stream);
    let result = (|| -> std::io::Result<()> {
        while let Ok(out) = rx.recv() {
            let mut next = Some(out);
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
        status.close(format!("write failed: {e}"));
    }
    drop(w);
    let _ = stream.shutdown(Shutdown::Write);
}

fn reader_loop(stream: TcpStream, inner: Arc<Inner>) {
    let mut reader = BufReader::with_capacity(64 * 1024, &stream);
    let reason = loop {
        let raw = match frame::read_frame(&mut reader) {
            Ok(Some(raw)) => raw,
            Ok(None) => break "connection closed by broker".to_string(),
            Err(WireError::Io(e)) => break format!("read failed: {e}"),
            Err(WireError::Frame(e)) => break format!("protocol error from broker: {e}"),
        };
        match decode_frame(&raw) {
            Ok(Frame::Msg {
                topic,
                publish_ts,
                payload,
            }) => {
                if topic == inner.barrier {
                    if let Ok(b) = <[u8; 8]>::try_from(payload.as_slice()) {
                        let nonce = u64::from_be_bytes(b);
                        if let Some(tx) = inner.waiters.lock().unwrap().remove(&nonce) {
                            let _ = tx.send(());
                        }
                    }
                    continue;
                }
                let routes = inner.routes.lock().unwrap();
                if let Some(list) = routes.get(&topic) {
                    let msg = Message {
                        topic,
                        publish_ts,
                        payload,
                    };
                    for (_, tx) in list {
                        let _ = tx.send(msg.clone());
                    }
                }
            }
            Ok(Frame::Err { topic, message }) => {
                break format!("broker error on {topic}: {message}");
            }
            Ok(other) => debug!("ignoring unexpected {:?} frame", other.kind()),
            Err(e) => break format!("protocol error from broker: {e}"),
        }
    };
    debug!("client reader exiting: {reason}");
    inner.status.close(reason);
    inner.routes.lock().unwrap().clear();
    inner.waiters.lock().unwrap().clear();
}
