//! The control plane.
//!
//! A [`Controller`] owns the gates (one FER queue and one RET queue per
//! function), the autoscaler rounds and the functions database, and
//! exposes the Methods space to brokers. [`start`] binds the servers nodes
//! talk to:
//!
//! * clerk (request-reply): liveness, ports tables, function sources
//! * events (publish-subscribe): one frame per scaling round
//! * one scaling server per cluster (request-reply): hands out tables
//! * per function a push server (request-reply, dispatches FERs) and a
//!   pull server (push-pull, collects RETs)
//! * optionally a broker facade carrying Methods-space calls over TCP

pub mod config;
pub mod functions;

use std::collections::BTreeMap;
use std::io;
use std::net::{SocketAddr, TcpListener};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use gatefaas_core::codec::DEFAULT_MAX_FRAME;
use gatefaas_core::protocol::{
    self, err_reply, ok_reply, BrokerRequest, ClerkRequest, ScaleEvent,
    ScalingRequest,
};
use gatefaas_core::{
    value_map, AutoScaleDirective, Autoscaler, Fer, FunctionLabel, Gate, PortsTable, Ret,
    ScalingError, ValueMap,
};
use log::{info, warn};
use thiserror::Error;

pub use config::InitConfig;
pub use functions::{FunctionsDb, PackageError};

use crate::net::{serve_pull, serve_requests, Publisher, TcpServer};

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot bind {server} server on port {port}: {source}")]
    Bind {
        server: String,
        port: u16,
        source: io::Error,
    },
    #[error("function package `{label}` is unusable: {reason}")]
    Package { label: String, reason: String },
    #[error("no functions to serve")]
    NoFunctions,
    #[error("unknown function `{0}`")]
    UnknownLabel(String),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error("cannot publish scaling event: {0}")]
    Publish(String),
}

/// Counters for tests and diagnostics.
#[derive(Debug, Default)]
pub struct ControllerStats {
    pub source_requests: AtomicU64,
    pub digest_requests: AtomicU64,
    pub scaling_requests: AtomicU64,
    pub fers_dispatched: AtomicU64,
    pub rets_ingested: AtomicU64,
    pub rets_dropped: AtomicU64,
}

pub struct Controller {
    gates: BTreeMap<FunctionLabel, Mutex<Gate>>,
    autoscaler: Mutex<Autoscaler>,
    events: Publisher,
    db: FunctionsDb,
    ports: PortsTable,
    stats: ControllerStats,
}

impl Controller {
    /// Builds the in-memory state, checking every gate's package.
    pub fn new(config: &InitConfig) -> Result<Self, ControllerError> {
        config.validate()?;
        if config.ports.gates.is_empty() {
            return Err(ControllerError::NoFunctions);
        }
        let db = FunctionsDb::new(&config.functions_root);
        for label in config.ports.gates.keys() {
            db.load(label).map_err(|e| ControllerError::Package {
                label: label.to_string(),
                reason: e.to_string(),
            })?;
        }
        let gates = config
            .ports
            .gates
            .keys()
            .map(|l| (l.clone(), Mutex::new(Gate::new(l.clone()))))
            .collect();
        Ok(Controller {
            gates,
            autoscaler: Mutex::new(Autoscaler::new(
                config.clusters.iter().map(|(k, n)| (k.clone(), *n)),
            )),
            events: Publisher::new(),
            db,
            ports: config.ports.clone(),
            stats: ControllerStats::default(),
        })
    }

    pub fn stats(&self) -> &ControllerStats {
        &self.stats
    }

    pub fn ports(&self) -> &PortsTable {
        &self.ports
    }

    pub fn labels(&self) -> impl Iterator<Item = &FunctionLabel> {
        self.gates.keys()
    }

    fn gate(&self, label: &FunctionLabel) -> Result<&Mutex<Gate>, ControllerError> {
        self.gates
            .get(label)
            .ok_or_else(|| ControllerError::UnknownLabel(label.to_string()))
    }

    /// Starts a scaling round and tells every subscribed node about it.
    pub fn autoscale(&self, directive: &AutoScaleDirective) -> Result<u64, ControllerError> {
        let round = self.autoscaler.lock().expect("autoscaler").apply(directive)?;
        let reached = self
            .events
            .publish(&ScaleEvent { round }.to_map())
            .map_err(|e| ControllerError::Publish(e.to_string()))?;
        info!("scaling round {round} published to {reached} node(s)");
        Ok(round)
    }

    pub fn current_round(&self) -> u64 {
        self.autoscaler.lock().expect("autoscaler").round()
    }

    pub fn push_fer(&self, label: &FunctionLabel, fer: Fer) -> Result<(), ControllerError> {
        self.gate(label)?.lock().expect("gate").push_fer(fer);
        Ok(())
    }

    /// Oldest RET for `label`, or `None` when there is none yet.
    pub fn pop_ret(&self, label: &FunctionLabel) -> Result<Option<Ret>, ControllerError> {
        Ok(self.gate(label)?.lock().expect("gate").pop_ret())
    }

    pub fn check_available(&self, label: &FunctionLabel) -> Result<bool, ControllerError> {
        Ok(self.gate(label)?.lock().expect("gate").has_ret())
    }

    pub fn queued_fers(&self, label: &FunctionLabel) -> Result<usize, ControllerError> {
        Ok(self.gate(label)?.lock().expect("gate").fer_len())
    }

    pub fn clerk_serve(&self, request: &ValueMap) -> ValueMap {
        let request = match ClerkRequest::parse(request) {
            Ok(r) => r,
            Err(e) => return err_reply(e.to_string()),
        };
        match request {
            ClerkRequest::Check => ok_reply(ValueMap::new()),
            ClerkRequest::GatePorts => ok_reply(value_map! { "gates" => self.ports.gates_to_map() }),
            ClerkRequest::ScalingPorts => ok_reply(self.ports.scaling_to_map()),
            ClerkRequest::Source(label) => {
                self.stats.source_requests.fetch_add(1, Ordering::Relaxed);
                match self.db.load(&label) {
                    Ok(pkg) => ok_reply(value_map! { "package" => pkg.to_map() }),
                    Err(e) => err_reply(e.to_string()),
                }
            }
            ClerkRequest::Digest(label) => {
                self.stats.digest_requests.fetch_add(1, Ordering::Relaxed);
                match self.db.load(&label) {
                    Ok(pkg) => ok_reply(value_map! { "digest" => pkg.digest() }),
                    Err(e) => err_reply(e.to_string()),
                }
            }
        }
    }

    /// Serves a table request arriving on `cluster`'s scaling server.
    pub fn scaling_serve(&self, cluster: &str, request: &ValueMap) -> ValueMap {
        self.stats.scaling_requests.fetch_add(1, Ordering::Relaxed);
        let request = match ScalingRequest::parse(request) {
            Ok(r) => r,
            Err(e) => return err_reply(e.to_string()),
        };
        if request.cluster != cluster {
            return err_reply(format!(
                "this scaling server serves `{cluster}`, not `{}`",
                request.cluster
            ));
        }
        match self
            .autoscaler
            .lock()
            .expect("autoscaler")
            .grant(cluster, request.round)
        {
            Ok(grant) => protocol::grant_reply(&grant),
            Err(e) => err_reply(e.to_string()),
        }
    }

    pub fn gate_push_serve(&self, label: &FunctionLabel, request: &ValueMap) -> ValueMap {
        if let Err(e) = protocol::is_fer_request(request) {
            return err_reply(e.to_string());
        }
        let gate = match self.gate(label) {
            Ok(g) => g,
            Err(e) => return err_reply(e.to_string()),
        };
        let fer = gate.lock().expect("gate").next_fer();
        if fer.is_some() {
            self.stats.fers_dispatched.fetch_add(1, Ordering::Relaxed);
        }
        protocol::fer_reply(fer.as_ref())
    }

    /// Pull-server ingest. There is no reply channel, so bad frames are
    /// counted and logged.
    pub fn gate_pull_ingest(&self, label: &FunctionLabel, message: ValueMap) {
        let ret = match Ret::from_map(message) {
            Ok(r) => r,
            Err(e) => {
                self.stats.rets_dropped.fetch_add(1, Ordering::Relaxed);
                warn!("gate {label}: dropping malformed RET: {e}");
                return;
            }
        };
        match self.gate(label) {
            Ok(g) => {
                g.lock().expect("gate").ingest_ret(ret);
                self.stats.rets_ingested.fetch_add(1, Ordering::Relaxed);
            }
            Err(e) => warn!("{e}"),
        }
    }

    /// Remote Methods-space facade.
    pub fn broker_serve(&self, request: &ValueMap) -> ValueMap {
        let request = match BrokerRequest::parse(request) {
            Ok(r) => r,
            Err(e) => return err_reply(e.to_string()),
        };
        let outcome = match request {
            BrokerRequest::PushFer { label, fer } => {
                self.push_fer(&label, fer).map(|_| ok_reply(ValueMap::new()))
            }
            BrokerRequest::PopRet { label } => {
                self.pop_ret(&label).map(|r| protocol::ret_reply(r.as_ref()))
            }
            BrokerRequest::CheckAvailable { label } => self
                .check_available(&label)
                .map(|a| ok_reply(value_map! { "available" => a })),
            BrokerRequest::Autoscale(d) => self
                .autoscale(&d)
                .map(|round| ok_reply(value_map! { "round" => round })),
        };
        outcome.unwrap_or_else(|e| err_reply(e.to_string()))
    }
}

/// A started controller. Dropping it stops every server.
pub struct ControllerHandle {
    controller: Arc<Controller>,
    servers: Vec<TcpServer>,
    clerk_addr: SocketAddr,
    broker_addr: Option<SocketAddr>,
}

impl ControllerHandle {
    pub fn controller(&self) -> &Arc<Controller> {
        &self.controller
    }

    pub fn clerk_addr(&self) -> SocketAddr {
        self.clerk_addr
    }

    pub fn broker_addr(&self) -> Option<SocketAddr> {
        self.broker_addr
    }

    pub fn server_names(&self) -> Vec<&str> {
        self.servers.iter().map(TcpServer::name).collect()
    }

    pub fn shutdown(&mut self) {
        self.controller.events.close_all();
        for s in &mut self.servers {
            s.shutdown();
        }
    }
}

impl Drop for ControllerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl std::ops::Deref for ControllerHandle {
    type Target = Controller;

    fn deref(&self) -> &Controller {
        &self.controller
    }
}

fn bind(host: &str, server: &str, port: u16) -> Result<TcpListener, ControllerError> {
    TcpListener::bind((host, port)).map_err(|source| ControllerError::Bind {
        server: server.to_owned(),
        port,
        source,
    })
}

fn spawn_err(server: &str, port: u16) -> impl FnOnce(io::Error) -> ControllerError + '_ {
    move |source| ControllerError::Bind {
        server: server.to_owned(),
        port,
        source,
    }
}

/// Binds every listening socket first, then starts serving, so a port
/// conflict leaves nothing running.
pub fn start(config: InitConfig) -> Result<ControllerHandle, ControllerError> {
    let controller = Arc::new(Controller::new(&config)?);
    let host = config.host.as_str();

    let clerk = bind(host, "clerk", config.clerk_port)?;
    let events = bind(host, "events", config.ports.events_port)?;
    let scaling = config
        .ports
        .scaling
        .iter()
        .map(|(cluster, port)| Ok((cluster.clone(), *port, bind(host, &format!("scaling/{cluster}"), *port)?)))
        .collect::<Result<Vec<_>, ControllerError>>()?;
    let gates = config
        .ports
        .gates
        .iter()
        .map(|(label, g)| {
            Ok((
                label.clone(),
                *g,
                bind(host, &format!("push/{label}"), g.push)?,
                bind(host, &format!("pull/{label}"), g.pull)?,
            ))
        })
        .collect::<Result<Vec<_>, ControllerError>>()?;
    let broker = config
        .broker_port
        .map(|p| bind(host, "broker", p).map(|l| (p, l)))
        .transpose()?;

    let mut servers = Vec::new();
    let clerk_addr = clerk.local_addr().map_err(spawn_err("clerk", config.clerk_port))?;
    let c = controller.clone();
    servers.push(
        TcpServer::spawn("clerk", clerk, move |s| {
            serve_requests(s, DEFAULT_MAX_FRAME, |req| c.clerk_serve(&req))
        })
        .map_err(spawn_err("clerk", config.clerk_port))?,
    );
    let c = controller.clone();
    servers.push(
        TcpServer::spawn("events", events, move |s| c.events.subscribe(s))
            .map_err(spawn_err("events", config.ports.events_port))?,
    );
    for (cluster, port, listener) in scaling {
        let c = controller.clone();
        let name = format!("scaling/{cluster}");
        servers.push(
            TcpServer::spawn(name.clone(), listener, move |s| {
                serve_requests(s, DEFAULT_MAX_FRAME, |req| c.scaling_serve(&cluster, &req))
            })
            .map_err(spawn_err(&name, port))?,
        );
    }
    for (label, ports, push, pull) in gates {
        let (c, l) = (controller.clone(), label.clone());
        let name = format!("push/{label}");
        servers.push(
            TcpServer::spawn(name.clone(), push, move |s| {
                serve_requests(s, DEFAULT_MAX_FRAME, |req| c.gate_push_serve(&l, &req))
            })
            .map_err(spawn_err(&name, ports.push))?,
        );
        let c = controller.clone();
        let name = format!("pull/{label}");
        servers.push(
            TcpServer::spawn(name.clone(), pull, move |s| {
                serve_pull(s, DEFAULT_MAX_FRAME, |m| c.gate_pull_ingest(&label, m))
            })
            .map_err(spawn_err(&name, ports.pull))?,
        );
    }
    let mut broker_addr = None;
    if let Some((port, listener)) = broker {
        broker_addr = listener.local_addr().ok();
        let c = controller.clone();
        servers.push(
            TcpServer::spawn("broker", listener, move |s| {
                serve_requests(s, DEFAULT_MAX_FRAME, |req| c.broker_serve(&req))
            })
            .map_err(spawn_err("broker", port))?,
        );
    }
    info!(
        "controller up: clerk {clerk_addr}, {} gate(s), {} cluster(s)",
        controller.gates.len(),
        config.clusters.len()
    );
    Ok(ControllerHandle {
        controller,
        servers,
        clerk_addr,
        broker_addr,
    })
}
