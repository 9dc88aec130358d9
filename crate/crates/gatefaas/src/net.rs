//! Threaded TCP servers and the three messaging patterns built on frames:
//! request-reply, push-pull and publish-subscribe.

use std::collections::HashMap;
use std::io;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use gatefaas_core::codec::{self, CodecError, DEFAULT_MAX_FRAME};
use gatefaas_core::protocol::err_reply;
use gatefaas_core::ValueMap;
use log::{debug, warn};

use crate::wire::{read_payload, write_frame, WireError};

type ConnMap = Arc<Mutex<HashMap<u64, TcpStream>>>;

/// A listening socket with one thread per accepted connection.
/// Dropping the server closes the listener and every open connection.
pub struct TcpServer {
    name: String,
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    conns: ConnMap,
    accept: Option<JoinHandle<()>>,
}

impl TcpServer {
    pub fn spawn<F>(name: impl Into<String>, listener: TcpListener, on_conn: F) -> io::Result<Self>
    where
        F: Fn(TcpStream) + Send + Sync + 'static,
    {
        let name = name.into();
        let local_addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let conns: ConnMap = Arc::default();
        let on_conn = Arc::new(on_conn);
        let accept = {
            let (stop, conns, name) = (stop.clone(), conns.clone(), name.clone());
            thread::Builder::new()
                .name(format!("{name}-accept"))
                .spawn(move || accept_loop(&name, listener, &stop, &conns, on_conn))?
        };
        Ok(TcpServer {
            name,
            local_addr,
            stop,
            conns,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shutdown(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        // wake the blocking accept
        let mut wake = self.local_addr;
        if wake.ip().is_unspecified() {
            wake.set_ip([127, 0, 0, 1].into());
        }
        let _ = TcpStream::connect_timeout(&wake, Duration::from_millis(500));
        if let Some(t) = self.accept.take() {
            let _ = t.join();
        }
        for (_, s) in self.conns.lock().expect("conn registry").drain() {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for TcpServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn accept_loop<F>(name: &str, listener: TcpListener, stop: &AtomicBool, conns: &ConnMap, on_conn: Arc<F>)
where
    F: Fn(TcpStream) + Send + Sync + 'static,
{
    static NEXT_ID: AtomicU64 = AtomicU64::new(0);
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                warn!("{name}: accept failed: {e}");
                thread::sleep(Duration::from_millis(10));
                continue;
            }
        };
        let _ = stream.set_nodelay(true);
        let id = NEXT_ID.fetch_add(1, Ordering::Relaxed);
        if let Ok(clone) = stream.try_clone() {
            conns.lock().expect("conn registry").insert(id, clone);
        }
        let conns = conns.clone();
        let on_conn = on_conn.clone();
        let spawned = thread::Builder::new()
            .name(format!("{name}-conn"))
            .spawn(move || {
                on_conn(stream);
                conns.lock().expect("conn registry").remove(&id);
            });
        if let Err(e) = spawned {
            warn!("{name}: cannot spawn connection thread: {e}");
        }
    }
}

/// Request-reply serving loop: exactly one reply frame per request frame.
/// Undecodable payloads get an error reply and the loop continues, since
/// the length prefix keeps the stream in sync. Oversize prefixes lose
/// sync, so they get an error reply and the connection is closed.
pub fn serve_requests<F>(mut stream: TcpStream, max_frame: usize, mut handler: F)
where
    F: FnMut(ValueMap) -> ValueMap,
{
    loop {
        let reply = match read_payload(&mut stream, max_frame) {
            Ok(None) => return,
            Ok(Some(payload)) => match codec::decode_payload(&payload) {
                Ok(request) => handler(request),
                Err(e) => err_reply(format!("bad frame: {e}")),
            },
            Err(WireError::Codec(e @ CodecError::Oversize { .. })) => {
                let _ = write_frame(&mut stream, &err_reply(format!("bad frame: {e}")));
                return;
            }
            Err(e) => {
                debug!("request connection ended: {e}");
                return;
            }
        };
        if let Err(e) = write_frame(&mut stream, &reply) {
            debug!("cannot write reply: {e}");
            return;
        }
    }
}

/// Pull side of push-pull: frames come in, nothing goes out. Undecodable
/// frames are dropped with a diagnostic.
pub fn serve_pull<F>(mut stream: TcpStream, max_frame: usize, mut ingest: F)
where
    F: FnMut(ValueMap),
{
    loop {
        match read_payload(&mut stream, max_frame) {
            Ok(None) => return,
            Ok(Some(payload)) => match codec::decode_payload(&payload) {
                Ok(m) => ingest(m),
                Err(e) => warn!("pull: dropping undecodable frame: {e}"),
            },
            Err(e) => {
                debug!("pull connection ended: {e}");
                return;
            }
        }
    }
}

pub fn serve_requests_default<F>(stream: TcpStream, handler: F)
where
    F: FnMut(ValueMap) -> ValueMap,
{
    serve_requests(stream, DEFAULT_MAX_FRAME, handler)
}

#[derive(Default)]
struct PublisherState {
    subscribers: Vec<TcpStream>,
    last: Option<Vec<u8>>,
}

/// Publish side of publish-subscribe. New subscribers immediately receive
/// the most recent event, so a node that connects late still learns about
/// the current round.
#[derive(Default)]
pub struct Publisher {
    state: Mutex<PublisherState>,
}

impl Publisher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&self, stream: TcpStream) {
        let _ = stream.set_write_timeout(Some(Duration::from_secs(1)));
        let mut state = self.state.lock().expect("publisher");
        let mut stream = stream;
        if let Some(last) = &state.last {
            if io::Write::write_all(&mut stream, last).is_err() {
                return;
            }
        }
        state.subscribers.push(stream);
    }

    /// Writes `event` to every subscriber, dropping the ones that fail.
    /// Returns how many received it.
    pub fn publish(&self, event: &ValueMap) -> Result<usize, CodecError> {
        let frame = codec::encode_frame(event)?;
        let mut state = self.state.lock().expect("publisher");
        state
            .subscribers
            .retain_mut(|s| io::Write::write_all(s, &frame).is_ok());
        state.last = Some(frame);
        Ok(state.subscribers.len())
    }

    pub fn subscriber_count(&self) -> usize {
        self.state.lock().expect("publisher").subscribers.len()
    }

    pub fn close_all(&self) {
        for s in self.state.lock().expect("publisher").subscribers.drain(..) {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}

/// A stop flag that sleeping workers can wait on.
#[derive(Debug, Default)]
pub struct StopSignal {
    stopped: Mutex<bool>,
    cv: Condvar,
}

impl StopSignal {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn stop(&self) {
        *self.stopped.lock().expect("stop signal") = true;
        self.cv.notify_all();
    }

    pub fn is_stopped(&self) -> bool {
        *self.stopped.lock().expect("stop signal")
    }

    /// Sleeps up to `d`; returns true if stopped meanwhile.
    pub fn sleep(&self, d: Duration) -> bool {
        let guard = self.stopped.lock().expect("stop signal");
        let (guard, _) = self
            .cv
            .wait_timeout_while(guard, d, |stopped| !*stopped)
            .expect("stop signal");
        *guard
    }
}

/// Asks the OS for `n` distinct free TCP ports on loopback. The ports are
/// released before returning, so another process may grab one first.
pub fn free_ports(n: usize) -> io::Result<Vec<u16>> {
    let listeners = (0..n)
        .map(|_| TcpListener::bind("127.0.0.1:0"))
        .collect::<io::Result<Vec<_>>>()?;
    listeners
        .iter()
        .map(|l| l.local_addr().map(|a| a.port()))
        .collect()
}
