//! TCP queue backend.
//!
//! Each LP process binds one listener. A sending process opens one
//! long-lived connection per receiving endpoint and writes frames back to
//! back; the receiving side runs a reader thread per connection, decodes
//! frames, and routes them into the local in-memory queues by message
//! kind (data to `pq-<lp>`, null and end to `sq-<lp>`). Because a sender
//! uses a single ordered byte stream per destination, per-sender FIFO
//! carries over from the in-process backend unchanged.

use std::io::{BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use super::frame;
use super::inproc::{Broker, Notifier, Receiver};
use super::{data_queue_name, sync_queue_name, MessageKind, MessageSender, TimestampedMessage,
            TransportError};

/// Receiving side: a listener plus the two queues it feeds.
pub struct TcpEndpoint {
    local_addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept_handle: Option<JoinHandle<()>>,
    conns: Arc<Mutex<Vec<TcpStream>>>,
    reader_handles: Arc<Mutex<Vec<JoinHandle<()>>>>,
    first_error: Arc<Mutex<Option<TransportError>>>,
}

impl TcpEndpoint {
    /// Binds a listener (use port 0 to let the OS pick), creates the LP's
    /// data and sync queues on a fresh in-memory broker, and starts
    /// accepting. Returns the endpoint and the two consumer handles.
    pub fn bind(
        lp: &str,
        bind_addr: &str,
        notifier: Arc<Notifier>,
    ) -> Result<(TcpEndpoint, Receiver, Receiver), TransportError> {
        let broker = Broker::new();
        let data_rx = broker.create_queue(&data_queue_name(lp), notifier.clone())?;
        let sync_rx = broker.create_queue(&sync_queue_name(lp), notifier)?;

        let listener = TcpListener::bind(bind_addr)?;
        let local_addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let conns: Arc<Mutex<Vec<TcpStream>>> = Arc::new(Mutex::new(Vec::new()));
        let reader_handles: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::new(Mutex::new(Vec::new()));
        let first_error: Arc<Mutex<Option<TransportError>>> = Arc::new(Mutex::new(None));

        let accept_handle = {
            let shutdown = shutdown.clone();
            let conns = conns.clone();
            let reader_handles = reader_handles.clone();
            let first_error = first_error.clone();
            let broker = broker.clone();
            let data_queue = data_queue_name(lp);
            let sync_queue = sync_queue_name(lp);
            std::thread::Builder::new()
                .name(format!("accept-{lp}"))
                .spawn(move || loop {
                    let (stream, _) = match listener.accept() {
                        Ok(pair) => pair,
                        Err(_) => {
                            if shutdown.load(Ordering::SeqCst) {
                                return;
                            }
                            continue;
                        }
                    };
                    if shutdown.load(Ordering::SeqCst) {
                        return;
                    }
                    let _ = stream.set_nodelay(true);
                    if let Ok(clone) = stream.try_clone() {
                        conns.lock().unwrap().push(clone);
                    }
                    let reader = ConnReader {
                        broker: broker.clone(),
                        data_queue: data_queue.clone(),
                        sync_queue: sync_queue.clone(),
                        shutdown: shutdown.clone(),
                        first_error: first_error.clone(),
                    };
                    let handle = std::thread::Builder::new()
                        .name("conn-reader".to_string())
                        .spawn(move || reader.run(stream))
                        .expect("spawn reader thread");
                    reader_handles.lock().unwrap().push(handle);
                })
                .expect("spawn accept thread")
        };

        Ok((
            TcpEndpoint {
                local_addr,
                shutdown,
                accept_handle: Some(accept_handle),
                conns,
                reader_handles,
                first_error,
            },
            data_rx,
            sync_rx,
        ))
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// First transport fault seen by any reader thread, if any. A fault
    /// here means a peer sent bytes that do not parse as frames.
    pub fn take_error(&self) -> Option<TransportError> {
        self.first_error.lock().unwrap().take()
    }
}

impl Drop for TcpEndpoint {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Unblock accept() with a throwaway connection to ourselves.
        let _ = TcpStream::connect_timeout(&self.local_addr, Duration::from_secs(1));
        for conn in self.conns.lock().unwrap().drain(..) {
            let _ = conn.shutdown(Shutdown::Both);
        }
        if let Some(h) = self.accept_handle.take() {
            let _ = h.join();
        }
        for h in self.reader_handles.lock().unwrap().drain(..) {
            let _ = h.join();
        }
    }
}

struct ConnReader {
    broker: Broker,
    data_queue: String,
    sync_queue: String,
    shutdown: Arc<AtomicBool>,
    first_error: Arc<Mutex<Option<TransportError>>>,
}

impl ConnReader {
    fn run(self, stream: TcpStream) {
        let mut reader = BufReader::new(stream);
        loop {
            if self.shutdown.load(Ordering::SeqCst) {
                return;
            }
            let mut first = [0u8; 1];
            let n = match reader.read(&mut first) {
                Ok(n) => n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(_) => return, // peer reset or local shutdown
            };
            if n == 0 {
                return; // clean disconnect on a frame boundary
            }
            match frame::read_frame_after_first(first[0], &mut reader) {
                Ok(msg) => {
                    let queue = match msg.kind {
                        MessageKind::Data => &self.data_queue,
                        MessageKind::Null | MessageKind::End => &self.sync_queue,
                    };
                    if let Err(e) = self.broker.raw_push(queue, msg) {
                        self.record(e);
                        return;
                    }
                }
                Err(e) => {
                    if !self.shutdown.load(Ordering::SeqCst) {
                        self.record(TransportError::Malformed(e));
                    }
                    return;
                }
            }
        }
    }

    fn record(&self, err: TransportError) {
        let mut slot = self.first_error.lock().unwrap();
        if slot.is_none() {
            *slot = Some(err);
        }
    }
}

/// Sending side: one shared connection to a receiving endpoint. Clones
/// share the underlying stream, so all links from this process to that
/// endpoint ride one FIFO byte stream.
#[derive(Clone)]
pub struct TcpConnection {
    peer: String,
    stream: Arc<Mutex<TcpStream>>,
}

impl std::fmt::Debug for TcpConnection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TcpConnection").field("peer", &self.peer).finish()
    }
}

impl TcpConnection {
    /// Connects with bounded retry. Receivers bind their listeners before
    /// announcing themselves, so only a few attempts are ever needed; the
    /// retries cover process start-up races.
    pub fn connect(addr: &str, attempts: u32, backoff: Duration) -> Result<TcpConnection, TransportError> {
        assert!(attempts > 0);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(backoff);
            }
            let resolved = match addr.to_socket_addrs() {
                Ok(mut it) => it.next(),
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let Some(sockaddr) = resolved else {
                last = "no addresses resolved".to_string();
                continue;
            };
            match TcpStream::connect_timeout(&sockaddr, Duration::from_secs(2)) {
                Ok(stream) => {
                    let _ = stream.set_nodelay(true);
                    return Ok(TcpConnection {
                        peer: addr.to_string(),
                        stream: Arc::new(Mutex::new(stream)),
                    });
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(TransportError::Unreachable {
            addr: addr.to_string(),
            attempts,
            last,
        })
    }

    pub fn peer(&self) -> &str {
        &self.peer
    }
}

impl MessageSender for TcpConnection {
    fn send(&self, msg: &TimestampedMessage) -> Result<(), TransportError> {
        let bytes = frame::encode(msg);
        let mut stream = self.stream.lock().unwrap();
        stream.write_all(&bytes)?;
        stream.flush()?;
        Ok(())
    }
}
