//! Reference function execution unit (FEU).
//!
//! An FEU reads its Boot file (`HOST:PORT`), binds its inner server there
//! and answers two primitives, one connection and one request at a time:
//!
//! * `{"c":"EXE","fer":{"x":..,"m":..}}` runs the function and replies
//!   `{"stat":"OK","val":..}` or `{"stat":"ERROR","val":{"error":..}}`
//! * `{"c":"FIN"}` replies `{"stat":"OK"}` and ends the serving loop

pub mod functions;

use std::fs;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use gatefaas_core::codec::{self, CodecError, DEFAULT_MAX_FRAME};
use gatefaas_core::protocol::{FeuReply, FeuRequest, ProtocolError};
use gatefaas_core::ValueMap;
use log::debug;
use thiserror::Error;

pub use functions::{builtin, FunctionImpl, BUILTIN_LABELS};

use crate::wire::{read_payload, write_frame, WireError};

#[derive(Debug, Error)]
pub enum FeuError {
    #[error("cannot read boot file {path}: {source}")]
    BootMissing { path: PathBuf, source: io::Error },
    #[error("boot file {path} does not hold HOST:PORT (found `{found}`)")]
    BootInvalid { path: PathBuf, found: String },
    #[error("cannot bind inner server on {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error("no function implementation registered for `{0}`")]
    UnknownFunction(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn parse_boot(text: &str) -> Option<SocketAddr> {
    let line = text.lines().next()?.trim();
    line.parse().ok()
}

pub fn read_boot_file(path: &Path) -> Result<SocketAddr, FeuError> {
    let text = fs::read_to_string(path).map_err(|source| FeuError::BootMissing {
        path: path.to_owned(),
        source,
    })?;
    parse_boot(&text).ok_or_else(|| FeuError::BootInvalid {
        path: path.to_owned(),
        found: text.trim().chars().take(64).collect(),
    })
}

pub fn write_boot_file(path: &Path, addr: SocketAddr) -> io::Result<()> {
    fs::write(path, format!("{addr}\n"))
}

/// Reads the Boot file and binds the inner server.
pub fn boot(boot_file: &Path) -> Result<TcpListener, FeuError> {
    let addr = read_boot_file(boot_file)?;
    TcpListener::bind(addr).map_err(|source| FeuError::Bind { addr, source })
}

/// What to do after answering a request.
#[derive(Debug, Clone, PartialEq)]
pub struct Served {
    pub reply: ValueMap,
    pub finished: bool,
}

fn panic_text(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_owned()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "function panicked".to_owned()
    }
}

/// Answers one decoded request.
pub fn serve_request(function: &FunctionImpl, request: &ValueMap) -> Served {
    let (reply, finished) = match FeuRequest::parse(request) {
        Ok(FeuRequest::Exe(inner)) => {
            let outcome = panic::catch_unwind(AssertUnwindSafe(|| (function.body)(&inner)));
            let reply = match outcome {
                Ok(Ok(val)) => FeuReply::ok(val),
                Ok(Err(text)) => FeuReply::error(text),
                Err(payload) => FeuReply::error(panic_text(payload.as_ref())),
            };
            (reply, false)
        }
        Ok(FeuRequest::Fin) => (FeuReply::fin_ack(), true),
        Err(ProtocolError::UnknownCommand(_) | ProtocolError::MissingCommand) => {
            (FeuReply::error("bad_primitive"), false)
        }
        Err(e) => (FeuReply::error(format!("bad_request: {e}")), false),
    };
    let mut reply = reply.to_map();
    if codec::encode_payload(&reply).is_err() {
        // e.g. the function returned NaN
        reply = FeuReply::error("function returned a non-encodable value").to_map();
    }
    Served { reply, finished }
}

/// Serves one connection; returns true once FIN was answered.
fn serve_connection(function: &FunctionImpl, mut stream: TcpStream) -> bool {
    let _ = stream.set_nodelay(true);
    loop {
        let reply = match read_payload(&mut stream, DEFAULT_MAX_FRAME) {
            Ok(None) => return false,
            Ok(Some(payload)) => match codec::decode_payload(&payload) {
                Ok(request) => serve_request(function, &request),
                Err(e) => Served {
                    reply: FeuReply::error(format!("bad_frame: {e}")).to_map(),
                    finished: false,
                },
            },
            Err(WireError::Codec(e @ CodecError::Oversize { .. })) => {
                let _ = write_frame(&mut stream, &FeuReply::error(format!("bad_frame: {e}")).to_map());
                return false;
            }
            Err(e) => {
                debug!("feu connection ended: {e}");
                return false;
            }
        };
        if write_frame(&mut stream, &reply.reply).is_err() {
            return false;
        }
        if reply.finished {
            return true;
        }
    }
}

/// Accepts connections one at a time until a FIN arrives.
pub fn serve(listener: TcpListener, function: &FunctionImpl) -> io::Result<()> {
    loop {
        let (stream, _) = listener.accept()?;
        if serve_connection(function, stream) {
            return Ok(());
        }
    }
}
