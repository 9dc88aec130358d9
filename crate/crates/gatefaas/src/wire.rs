//! Blocking frame IO over byte streams, plus the two client roles used on
//! top of it: request-reply and fire-and-forget push.

use std::io::{self, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::Duration;

use gatefaas_core::codec::{self, CodecError, DEFAULT_MAX_FRAME, PREFIX_LEN};
use gatefaas_core::ValueMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("connection closed by peer")]
    Closed,
    #[error("cannot resolve `{0}`")]
    Resolve(String),
}

impl WireError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, WireError::Io(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
    }
}

/// Reads one raw payload. `Ok(None)` means the peer closed cleanly
/// between frames; EOF inside a frame is `Incomplete`.
pub fn read_payload<R: Read>(r: &mut R, max: usize) -> Result<Option<Vec<u8>>, WireError> {
    let mut prefix = [0u8; PREFIX_LEN];
    let mut got = 0;
    while got < PREFIX_LEN {
        match r.read(&mut prefix[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(CodecError::Incomplete {
                    needed: PREFIX_LEN,
                    available: got,
                }
                .into())
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = codec::payload_len(prefix, max)?;
    let mut payload = vec![0u8; len];
    let mut filled = 0;
    while filled < len {
        match r.read(&mut payload[filled..]) {
            Ok(0) => {
                return Err(CodecError::Incomplete {
                    needed: PREFIX_LEN + len,
                    available: PREFIX_LEN + filled,
                }
                .into())
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Some(payload))
}

pub fn read_frame<R: Read>(r: &mut R, max: usize) -> Result<Option<ValueMap>, WireError> {
    match read_payload(r, max)? {
        Some(payload) => Ok(Some(codec::decode_payload(&payload)?)),
        None => Ok(None),
    }
}

/// Writes the whole frame with a single `write_all`.
pub fn write_frame<W: Write>(w: &mut W, message: &ValueMap) -> Result<(), WireError> {
    let frame = codec::encode_frame(message)?;
    w.write_all(&frame)?;
    w.flush()?;
    Ok(())
}

pub fn resolve(addr: &str) -> Result<SocketAddr, WireError> {
    addr.to_socket_addrs()
        .map_err(|_| WireError::Resolve(addr.to_owned()))?
        .next()
        .ok_or_else(|| WireError::Resolve(addr.to_owned()))
}

pub fn connect(addr: &str, timeout: Duration) -> Result<TcpStream, WireError> {
    let sock = resolve(addr)?;
    let stream = TcpStream::connect_timeout(&sock, timeout)?;
    stream.set_nodelay(true)?;
    Ok(stream)
}

const CONNECT_TIMEOUT: Duration = Duration::from_secs(2);

/// Request-reply client over one persistent connection. A failed exchange
/// drops the connection; the next call reconnects.
#[derive(Debug)]
pub struct ReqClient {
    addr: String,
    stream: Option<TcpStream>,
    io_timeout: Option<Duration>,
    max_frame: usize,
}

impl ReqClient {
    pub fn new(addr: impl Into<String>) -> Self {
        ReqClient {
            addr: addr.into(),
            stream: None,
            io_timeout: Some(Duration::from_secs(30)),
            max_frame: DEFAULT_MAX_FRAME,
        }
    }

    pub fn with_io_timeout(mut self, timeout: Option<Duration>) -> Self {
        self.io_timeout = timeout;
        self
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    pub fn is_connected(&self) -> bool {
        self.stream.is_some()
    }

    pub fn disconnect(&mut self) {
        self.stream = None;
    }

    fn stream(&mut self) -> Result<&mut TcpStream, WireError> {
        if self.stream.is_none() {
            let s = connect(&self.addr, CONNECT_TIMEOUT)?;
            s.set_read_timeout(self.io_timeout)?;
            s.set_write_timeout(self.io_timeout)?;
            self.stream = Some(s);
        }
        Ok(self.stream.as_mut().expect("connected above"))
    }

    pub fn request(&mut self, request: &ValueMap) -> Result<ValueMap, WireError> {
        let max = self.max_frame;
        let result = (|| {
            let s = self.stream()?;
            write_frame(s, request)?;
            read_frame(s, max)?.ok_or(WireError::Closed)
        })();
        if result.is_err() {
            self.stream = None;
        }
        result
    }
}

/// Push side of a push-pull pair: frames go out, nothing comes back.
#[derive(Debug)]
pub struct PushClient {
    addr: String,
    stream: Option<TcpStream>,
}

impl PushClient {
    pub fn new(addr: impl Into<String>) -> Self {
        PushClient {
            addr: addr.into(),
            stream: None,
        }
    }

    fn try_send(&mut self, frame: &[u8]) -> Result<(), WireError> {
        if self.stream.is_none() {
            let s = connect(&self.addr, CONNECT_TIMEOUT)?;
            s.set_write_timeout(Some(Duration::from_secs(30)))?;
            self.stream = Some(s);
        }
        let s = self.stream.as_mut().expect("connected above");
        let r = s.write_all(frame).and_then(|_| s.flush());
        if r.is_err() {
            self.stream = None;
        }
        Ok(r?)
    }

    /// Sends one frame, reconnecting once if the cached connection is gone.
    pub fn send(&mut self, message: &ValueMap) -> Result<(), WireError> {
        let frame = codec::encode_frame(message)?;
        match self.try_send(&frame) {
            Ok(()) => Ok(()),
            Err(WireError::Codec(e)) => Err(e.into()),
            Err(_) => self.try_send(&frame),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gatefaas_core::value_map;
    use std::io::Cursor;

    #[test]
    fn stream_round_trip_and_clean_eof() {
        let mut buf = Vec::new();
        write_frame(&mut buf, &value_map! { "a" => 1 }).unwrap();
        write_frame(&mut buf, &value_map! { "b" => 2 }).unwrap();
        let mut cur = Cursor::new(buf);
        assert_eq!(read_frame(&mut cur, DEFAULT_MAX_FRAME).unwrap(), Some(value_map! { "a" => 1 }));
        assert_eq!(read_frame(&mut cur, DEFAULT_MAX_FRAME).unwrap(), Some(value_map! { "b" => 2 }));
        assert_eq!(read_frame(&mut cur, DEFAULT_MAX_FRAME).unwrap(), None);
    }

    #[test]
    fn truncated_stream_is_incomplete() {
        let mut cur = Cursor::new(vec![0, 0, 0, 5, b'{', b'"', b'a']);
        assert!(matches!(
            read_frame(&mut cur, DEFAULT_MAX_FRAME),
            Err(WireError::Codec(CodecError::Incomplete { .. }))
        ));
        let mut cur = Cursor::new(vec![0, 0]);
        assert!(matches!(
            read_frame(&mut cur, DEFAULT_MAX_FRAME),
            Err(WireError::Codec(CodecError::Incomplete { .. }))
        ));
    }

    #[test]
    fn oversize_prefix_rejected_before_allocation() {
        let mut cur = Cursor::new(vec![0x7f, 0xff, 0xff, 0xff]);
        assert!(matches!(
            read_frame(&mut cur, DEFAULT_MAX_FRAME),
            Err(WireError::Codec(CodecError::Oversize { .. }))
        ));
    }
}
