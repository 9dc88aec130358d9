//! Running FEUs and the registry agents draw them from.

use std::net::{SocketAddr, TcpStream};
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use gatefaas_core::codec::DEFAULT_MAX_FRAME;
use gatefaas_core::protocol::{FeuReply, FeuRequest};
use gatefaas_core::{value_map, FunctionLabel, InnerFer, Status, ValueMap};
use log::{debug, warn};

use super::backend::{unit_dir, BackendError, ExecutionBackend, FeuProcess, Image};
use crate::wire::{read_frame, write_frame, WireError};

pub const FEU_UNREACHABLE: &str = "feu_unreachable";
pub const FEU_TIMEOUT: &str = "feu_timeout";

/// Why a unit can no longer be trusted after an exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Broken {
    Unreachable,
    Timeout,
}

/// Connection to one unit's inner server.
#[derive(Debug)]
pub struct FeuService {
    endpoint: SocketAddr,
    stream: TcpStream,
}

impl FeuService {
    /// Connects, retrying while the unit starts up.
    pub fn connect(endpoint: SocketAddr, process: &mut dyn FeuProcess, deadline: Instant) -> Result<Self, String> {
        let mut wait = Duration::from_millis(2);
        loop {
            match TcpStream::connect_timeout(&endpoint, Duration::from_millis(500)) {
                Ok(stream) => {
                    let _ = stream.set_nodelay(true);
                    return Ok(FeuService { endpoint, stream });
                }
                Err(e) => {
                    if process.has_exited() {
                        return Err(format!("unit exited before serving on {endpoint}"));
                    }
                    if Instant::now() >= deadline {
                        return Err(format!("unit not ready on {endpoint}: {e}"));
                    }
                }
            }
            thread::sleep(wait);
            wait = (wait * 2).min(Duration::from_millis(100));
        }
    }

    pub fn endpoint(&self) -> SocketAddr {
        self.endpoint
    }

    fn exchange(&mut self, request: &ValueMap, timeout: Option<Duration>) -> Result<ValueMap, WireError> {
        self.stream.set_read_timeout(timeout)?;
        write_frame(&mut self.stream, request)?;
        read_frame(&mut self.stream, DEFAULT_MAX_FRAME)?.ok_or(WireError::Closed)
    }

    /// Runs one request. Transport failures come back as ERROR results
    /// together with the reason the unit should be recycled.
    pub fn exec(&mut self, inner: InnerFer, timeout: Option<Duration>) -> (Status, ValueMap, Option<Broken>) {
        let request = FeuRequest::Exe(inner).to_map();
        let err = |text: &str| value_map! { "error" => text };
        match self.exchange(&request, timeout) {
            Ok(reply) => match FeuReply::parse(&reply) {
                Ok(FeuReply { stat, val: Some(val) }) => (stat, val, None),
                Ok(FeuReply { val: None, .. }) | Err(_) => (
                    Status::Error,
                    err("feu sent a malformed reply"),
                    Some(Broken::Unreachable),
                ),
            },
            Err(e) if e.is_timeout() => (Status::Error, err(FEU_TIMEOUT), Some(Broken::Timeout)),
            Err(e) => {
                debug!("exchange with {} failed: {e}", self.endpoint);
                (Status::Error, err(FEU_UNREACHABLE), Some(Broken::Unreachable))
            }
        }
    }

    pub fn fin(&mut self) -> bool {
        self.exchange(&FeuRequest::Fin.to_map(), Some(Duration::from_secs(2))).is_ok()
    }
}

/// Sends one request to a unit over a fresh connection.
pub fn feu_exec(endpoint: SocketAddr, inner: InnerFer, timeout: Option<Duration>) -> (Status, ValueMap) {
    match TcpStream::connect_timeout(&endpoint, Duration::from_secs(2)) {
        Ok(stream) => {
            let _ = stream.set_nodelay(true);
            let (stat, val, _) = FeuService { endpoint, stream }.exec(inner, timeout);
            (stat, val)
        }
        Err(_) => (Status::Error, value_map! { "error" => FEU_UNREACHABLE }),
    }
}

/// A running unit with its open connection.
pub struct FeuUnit {
    pub service: FeuService,
    pub process: Box<dyn FeuProcess>,
    pub image: Image,
    pub cpu_portion: f64,
}

const SPAWN_ATTEMPTS: usize = 3;

impl FeuUnit {
    pub fn start(
        backend: &dyn ExecutionBackend,
        image: &Image,
        cpu_portion: f64,
        run_root: &Path,
        ready_timeout: Duration,
    ) -> Result<FeuUnit, BackendError> {
        let mut last = String::new();
        for _ in 0..SPAWN_ATTEMPTS {
            let dir = unit_dir(run_root, &image.label)?;
            let mut process = backend.spawn(image, cpu_portion, &dir)?;
            let deadline = Instant::now() + ready_timeout;
            match FeuService::connect(process.endpoint(), process.as_mut(), deadline) {
                Ok(service) => {
                    return Ok(FeuUnit {
                        service,
                        process,
                        image: image.clone(),
                        cpu_portion,
                    })
                }
                Err(reason) => {
                    // most likely lost the port between probing and binding
                    warn!("unit for {} failed to start: {reason}", image.label);
                    process.kill();
                    last = reason;
                }
            }
        }
        Err(BackendError::Spawn {
            label: image.label.clone(),
            reason: last,
        })
    }

    pub fn stop(mut self) {
        if self.service.fin() && self.process.wait_exit(Duration::from_secs(2)) {
            return;
        }
        self.process.kill();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotInfo {
    pub id: usize,
    pub label: FunctionLabel,
    pub cpu_portion: f64,
    pub endpoint: SocketAddr,
    pub busy: bool,
    pub pid: Option<u32>,
}

struct Slot {
    id: usize,
    label: FunctionLabel,
    cpu_portion: f64,
    endpoint: SocketAddr,
    pid: Option<u32>,
    /// `None` while an agent holds the unit.
    unit: Option<FeuUnit>,
}

/// A unit checked out of the registry.
pub struct Lease {
    pub slot: usize,
    pub unit: FeuUnit,
}

#[derive(Default)]
pub struct SlotRegistry {
    slots: Mutex<Vec<Slot>>,
    released: Condvar,
    next: Mutex<usize>,
}

impl SlotRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, unit: FeuUnit) -> usize {
        let id = {
            let mut next = self.next.lock().expect("slot ids");
            *next += 1;
            *next
        };
        let slot = Slot {
            id,
            label: unit.image.label.clone(),
            cpu_portion: unit.cpu_portion,
            endpoint: unit.service.endpoint(),
            pid: unit.process.pid(),
            unit: Some(unit),
        };
        self.slots.lock().expect("slots").push(slot);
        self.released.notify_all();
        id
    }

    /// Waits for a free unit of `label`; `None` when there is none at all.
    pub fn acquire(&self, label: &FunctionLabel) -> Option<Lease> {
        let mut slots = self.slots.lock().expect("slots");
        loop {
            if !slots.iter().any(|s| &s.label == label) {
                return None;
            }
            if let Some(s) = slots.iter_mut().find(|s| &s.label == label && s.unit.is_some()) {
                let unit = s.unit.take().expect("checked above");
                return Some(Lease { slot: s.id, unit });
            }
            slots = self.released.wait(slots).expect("slots");
        }
    }

    pub fn release(&self, lease: Lease) {
        let mut slots = self.slots.lock().expect("slots");
        match slots.iter_mut().find(|s| s.id == lease.slot) {
            Some(s) => {
                s.endpoint = lease.unit.service.endpoint();
                s.pid = lease.unit.process.pid();
                s.unit = Some(lease.unit);
            }
            None => {
                drop(slots);
                lease.unit.stop();
                return;
            }
        }
        drop(slots);
        self.released.notify_all();
    }

    /// Drops a slot whose unit could not be replaced.
    pub fn remove(&self, slot: usize) {
        self.slots.lock().expect("slots").retain(|s| s.id != slot);
        self.released.notify_all();
    }

    /// Removes every slot, returning the idle units. Units still leased
    /// are stopped by their agents on release.
    pub fn drain(&self) -> Vec<FeuUnit> {
        let drained = std::mem::take(&mut *self.slots.lock().expect("slots"));
        self.released.notify_all();
        drained.into_iter().filter_map(|s| s.unit).collect()
    }

    pub fn len(&self) -> usize {
        self.slots.lock().expect("slots").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<SlotInfo> {
        self.slots
            .lock()
            .expect("slots")
            .iter()
            .map(|s| SlotInfo {
                id: s.id,
                label: s.label.clone(),
                cpu_portion: s.cpu_portion,
                endpoint: s.endpoint,
                busy: s.unit.is_none(),
                pid: s.pid,
            })
            .collect()
    }
}
