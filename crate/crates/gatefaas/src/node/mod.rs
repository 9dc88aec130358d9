//! Worker node: pairs with a controller, follows scaling rounds for its
//! cluster and runs agents that feed gates' FERs to local FEUs.

pub mod agent;
pub mod backend;
pub mod clerk;
pub mod deploy;
pub mod slots;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use gatefaas_core::codec::DEFAULT_MAX_FRAME;
use gatefaas_core::protocol::{parse_grant, ScaleEvent, ScalingRequest};
use gatefaas_core::{FunctionLabel, GatePorts, Grant, ScalingTable};
use log::{debug, info, warn};
use thiserror::Error;

use crate::net::StopSignal;
use crate::wire::{connect, read_frame, ReqClient, WireError};
use agent::{agent_loop, AgentContext, NodeStats};
use backend::{BackendError, ContainerBackend, ExecutionBackend, Image, ProcessBackend};
use clerk::{ClerkClient, ClerkError};
use deploy::{DeployError, ImageCache};
use slots::{FeuUnit, SlotInfo, SlotRegistry};

pub use agent::FEU_UNAVAILABLE;
pub use slots::{feu_exec, FEU_TIMEOUT, FEU_UNREACHABLE};

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("bad node configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Clerk(#[from] ClerkError),
    #[error("controller has no scaling port for cluster `{0}`")]
    UnknownCluster(String),
    #[error(transparent)]
    Deploy(#[from] DeployError),
    #[error(transparent)]
    Spawn(#[from] BackendError),
    #[error("scaling table names `{0}`, which has no gate")]
    UnknownGate(FunctionLabel),
    #[error("gave up pairing with {0}")]
    PairTimeout(String),
    #[error("node is shutting down")]
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Process,
    Container,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "process" => Ok(BackendKind::Process),
            "container" => Ok(BackendKind::Container),
            other => Err(format!("unknown backend `{other}` (expected process or container)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    /// Clerk address, `HOST:PORT`.
    pub clerk: String,
    pub cluster: String,
    pub backend: BackendKind,
    pub poll_interval: Duration,
    pub poll_backoff_max: Duration,
    pub exec_timeout: Option<Duration>,
    pub ready_timeout: Duration,
    pub connect_backoff_max: Duration,
    /// `None` retries forever.
    pub pair_timeout: Option<Duration>,
    pub work_dir: PathBuf,
    pub feu_program: PathBuf,
    pub apply_priority: bool,
}

impl NodeConfig {
    pub fn new(clerk: impl Into<String>, cluster: impl Into<String>, work_dir: impl Into<PathBuf>) -> Self {
        NodeConfig {
            clerk: clerk.into(),
            cluster: cluster.into(),
            backend: BackendKind::Process,
            poll_interval: Duration::from_millis(10),
            poll_backoff_max: Duration::from_millis(200),
            exec_timeout: Some(Duration::from_secs(300)),
            ready_timeout: Duration::from_secs(10),
            connect_backoff_max: Duration::from_secs(1),
            pair_timeout: None,
            work_dir: work_dir.into(),
            feu_program: default_feu_program(),
            apply_priority: true,
        }
    }
}

/// `feu` next to the running executable (or next to its parent when
/// running from cargo's `deps` directory).
pub fn default_feu_program() -> PathBuf {
    let exe = std::env::current_exe().unwrap_or_default();
    let dir = exe.parent().map(PathBuf::from).unwrap_or_default();
    let sibling = dir.join("feu");
    if !sibling.exists() && dir.ends_with("deps") {
        if let Some(up) = dir.parent() {
            return up.join("feu");
        }
    }
    sibling
}

/// What the node currently runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Inventory {
    pub slots: Vec<SlotInfo>,
    pub agents: BTreeMap<FunctionLabel, usize>,
}

impl Inventory {
    pub fn feu_count(&self) -> usize {
        self.slots.len()
    }

    pub fn agent_count(&self) -> usize {
        self.agents.values().sum()
    }

    pub fn endpoints(&self) -> Vec<SocketAddr> {
        self.slots.iter().map(|s| s.endpoint).collect()
    }

    pub fn pids(&self) -> Vec<u32> {
        self.slots.iter().filter_map(|s| s.pid).collect()
    }
}

#[derive(Debug, Default)]
struct Rounds {
    seen: u64,
    applied: u64,
    last_error: Option<String>,
}

struct Agents {
    stop: Arc<StopSignal>,
    threads: Vec<(FunctionLabel, JoinHandle<()>)>,
}

struct Shared {
    config: NodeConfig,
    host: String,
    gates: BTreeMap<FunctionLabel, GatePorts>,
    scaling_addr: String,
    events_addr: String,
    backend: Arc<dyn ExecutionBackend>,
    cache: ImageCache,
    clerk: Mutex<ClerkClient>,
    slots: Arc<SlotRegistry>,
    agents: Mutex<Option<Agents>>,
    apply_lock: Mutex<()>,
    rounds: Mutex<Rounds>,
    round_cv: Condvar,
    stop: Arc<StopSignal>,
    stats: Arc<NodeStats>,
}

pub struct Node {
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

fn host_of(addr: &str) -> &str {
    addr.rsplit_once(':').map_or(addr, |(h, _)| h)
}

fn pair_clerk(config: &NodeConfig, stop: &StopSignal) -> Result<ClerkClient, NodeError> {
    let mut clerk = ClerkClient::new(config.clerk.clone());
    let started = Instant::now();
    let mut wait = Duration::from_millis(10);
    loop {
        match clerk.check() {
            Ok(()) => return Ok(clerk),
            Err(e) => debug!("clerk at {} not ready: {e}", config.clerk),
        }
        if config.pair_timeout.is_some_and(|t| started.elapsed() >= t) {
            return Err(NodeError::PairTimeout(config.clerk.clone()));
        }
        if stop.sleep(wait) {
            return Err(NodeError::Stopped);
        }
        wait = (wait * 2).min(config.connect_backoff_max);
    }
}

impl Node {
    /// Pairs with the controller and starts following scaling rounds.
    pub fn pair(config: NodeConfig) -> Result<Node, NodeError> {
        if config.cluster.is_empty() {
            return Err(NodeError::Config("empty cluster label".into()));
        }
        let stop = StopSignal::new();
        let mut clerk = pair_clerk(&config, &stop)?;
        let gates = clerk.gate_ports()?;
        let (clusters, events_port) = clerk.scaling_ports()?;
        let scaling_port = *clusters
            .get(&config.cluster)
            .ok_or_else(|| NodeError::UnknownCluster(config.cluster.clone()))?;
        let host = host_of(&config.clerk).to_owned();

        let backend: Arc<dyn ExecutionBackend> = match config.backend {
            BackendKind::Process => {
                let mut b = ProcessBackend::new(config.feu_program.clone());
                b.apply_priority = config.apply_priority;
                Arc::new(b)
            }
            BackendKind::Container => Arc::new(ContainerBackend::new(config.feu_program.clone())),
        };
        std::fs::create_dir_all(config.work_dir.join("run"))
            .map_err(|e| NodeError::Config(format!("work dir {}: {e}", config.work_dir.display())))?;

        let shared = Arc::new(Shared {
            scaling_addr: format!("{host}:{scaling_port}"),
            events_addr: format!("{host}:{events_port}"),
            cache: ImageCache::new(config.work_dir.join("cache")),
            host,
            gates,
            backend,
            clerk: Mutex::new(clerk),
            slots: Arc::new(SlotRegistry::new()),
            agents: Mutex::new(None),
            apply_lock: Mutex::new(()),
            rounds: Mutex::new(Rounds::default()),
            round_cv: Condvar::new(),
            stop,
            stats: Arc::new(NodeStats::default()),
            config,
        });
        info!(
            "paired with {} as a member of `{}` ({} gates)",
            shared.config.clerk,
            shared.config.cluster,
            shared.gates.len()
        );
        let mut threads = Vec::new();
        let s = Arc::clone(&shared);
        threads.push(thread::Builder::new().name("node-events".into()).spawn(move || s.follow_events()).expect("spawn"));
        let s = Arc::clone(&shared);
        threads.push(thread::Builder::new().name("node-scaling".into()).spawn(move || s.scaling_worker()).expect("spawn"));
        Ok(Node { shared, threads })
    }

    pub fn cluster(&self) -> &str {
        &self.shared.config.cluster
    }

    pub fn gates(&self) -> &BTreeMap<FunctionLabel, GatePorts> {
        &self.shared.gates
    }

    pub fn stats(&self) -> &NodeStats {
        &self.shared.stats
    }

    pub fn cache(&self) -> &ImageCache {
        &self.shared.cache
    }

    pub fn inventory(&self) -> Inventory {
        self.shared.inventory()
    }

    /// Deploys `label` without starting units.
    pub fn deploy(&self, label: &FunctionLabel) -> Result<Image, NodeError> {
        self.shared.deploy(label)
    }

    /// Replaces everything the node runs with `table`.
    pub fn apply_scaling(&self, table: &ScalingTable) -> Result<Inventory, NodeError> {
        self.shared.apply_scaling(table)
    }

    pub fn applied_round(&self) -> u64 {
        self.shared.rounds.lock().expect("rounds").applied
    }

    pub fn last_error(&self) -> Option<String> {
        self.shared.rounds.lock().expect("rounds").last_error.clone()
    }

    /// Waits until `round` (or a later one) has been applied.
    pub fn wait_for_round(&self, round: u64, timeout: Duration) -> bool {
        let guard = self.shared.rounds.lock().expect("rounds");
        let (guard, _) = self
            .shared
            .round_cv
            .wait_timeout_while(guard, timeout, |r| r.applied < round)
            .expect("rounds");
        guard.applied >= round
    }

    /// Stops agents and units, then the round-following threads.
    pub fn shutdown(&mut self) {
        self.shared.stop.stop();
        {
            let _r = self.shared.rounds.lock().expect("rounds");
            self.shared.round_cv.notify_all();
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        let _g = self.shared.apply_lock.lock().expect("apply lock");
        self.shared.flush();
    }
}

impl Drop for Node {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl Shared {
    fn inventory(&self) -> Inventory {
        let mut agents = BTreeMap::new();
        if let Some(a) = self.agents.lock().expect("agents").as_ref() {
            for (label, _) in &a.threads {
                *agents.entry(label.clone()).or_insert(0) += 1;
            }
        }
        Inventory {
            slots: self.slots.snapshot(),
            agents,
        }
    }

    fn deploy(&self, label: &FunctionLabel) -> Result<Image, NodeError> {
        let mut clerk = self.clerk.lock().expect("clerk");
        Ok(self.cache.deploy(label, &mut clerk, self.backend.as_ref())?)
    }

    /// Stops agents (letting in-flight FERs finish) and all units.
    fn flush(&self) {
        if let Some(agents) = self.agents.lock().expect("agents").take() {
            agents.stop.stop();
            for (_, t) in agents.threads {
                let _ = t.join();
            }
        }
        for unit in self.slots.drain() {
            unit.stop();
        }
    }

    fn apply_scaling(&self, table: &ScalingTable) -> Result<Inventory, NodeError> {
        let _g = self.apply_lock.lock().expect("apply lock");
        self.flush();
        if self.stop.is_stopped() {
            return Err(NodeError::Stopped);
        }
        let labels = table.labels();
        if let Some(l) = labels.iter().find(|l| !self.gates.contains_key(*l)) {
            return Err(NodeError::UnknownGate(l.clone()));
        }
        let demand = table.cpu_demand();
        if demand > 1.0 + 1e-9 {
            warn!("table oversubscribes the cpu: total portion {demand:.3}");
        }
        let mut images = BTreeMap::new();
        for label in labels {
            let image = self.deploy(&label)?;
            images.insert(label, image);
        }
        let run_root = self.config.work_dir.join("run");
        for entry in &table.entries {
            for _ in 0..entry.count {
                match FeuUnit::start(
                    self.backend.as_ref(),
                    &images[&entry.label],
                    entry.cpu_portion,
                    &run_root,
                    self.config.ready_timeout,
                ) {
                    Ok(unit) => {
                        self.slots.insert(unit);
                    }
                    Err(e) => {
                        self.flush();
                        return Err(e.into());
                    }
                }
            }
        }

        let stop = StopSignal::new();
        let mut threads = Vec::new();
        for entry in &table.entries {
            let gate = self.gates[&entry.label];
            for i in 0..entry.count {
                let ctx = AgentContext {
                    label: entry.label.clone(),
                    push_addr: format!("{}:{}", self.host, gate.push),
                    pull_addr: format!("{}:{}", self.host, gate.pull),
                    slots: Arc::clone(&self.slots),
                    backend: Arc::clone(&self.backend),
                    run_root: run_root.clone(),
                    stop: Arc::clone(&stop),
                    stats: Arc::clone(&self.stats),
                    poll_interval: self.config.poll_interval,
                    poll_backoff_max: self.config.poll_backoff_max,
                    exec_timeout: self.config.exec_timeout,
                    ready_timeout: self.config.ready_timeout,
                };
                let t = thread::Builder::new()
                    .name(format!("agent-{}-{i}", entry.label))
                    .spawn(move || agent_loop(ctx))
                    .expect("spawn agent");
                threads.push((entry.label.clone(), t));
            }
        }
        *self.agents.lock().expect("agents") = Some(Agents { stop, threads });
        let inv = self.inventory();
        info!("running {} units and {} agents", inv.feu_count(), inv.agent_count());
        Ok(inv)
    }

    fn note_round(&self, round: u64) {
        let mut r = self.rounds.lock().expect("rounds");
        if round > r.seen {
            r.seen = round;
            self.round_cv.notify_all();
        }
    }

    fn follow_events(&self) {
        let mut wait = Duration::from_millis(10);
        while !self.stop.is_stopped() {
            let mut stream = match connect(&self.events_addr, Duration::from_secs(2)) {
                Ok(s) => s,
                Err(e) => {
                    debug!("events channel unavailable: {e}");
                    if self.stop.sleep(wait) {
                        return;
                    }
                    wait = (wait * 2).min(self.config.connect_backoff_max);
                    continue;
                }
            };
            wait = Duration::from_millis(10);
            let _ = stream.set_read_timeout(Some(Duration::from_millis(200)));
            loop {
                if self.stop.is_stopped() {
                    return;
                }
                match read_frame(&mut stream, DEFAULT_MAX_FRAME) {
                    Ok(Some(event)) => match ScaleEvent::parse(&event) {
                        Ok(ev) => self.note_round(ev.round),
                        Err(e) => debug!("ignoring event: {e}"),
                    },
                    Ok(None) => break,
                    Err(e) if e.is_timeout() => continue,
                    Err(e) => {
                        debug!("events channel lost: {e}");
                        break;
                    }
                }
            }
        }
    }

    fn request_grant(&self, client: &mut ReqClient, round: u64) -> Result<Grant, String> {
        let request = ScalingRequest {
            cluster: self.config.cluster.clone(),
            round: Some(round),
        };
        let reply = client.request(&request.to_map()).map_err(|e: WireError| e.to_string())?;
        parse_grant(reply).map_err(|e| e.to_string())
    }

    fn scaling_worker(&self) {
        let mut client = ReqClient::new(self.scaling_addr.clone());
        loop {
            let target = {
                let guard = self.rounds.lock().expect("rounds");
                let guard = self
                    .round_cv
                    .wait_while(guard, |r| r.seen <= r.applied && !self.stop.is_stopped())
                    .expect("rounds");
                if self.stop.is_stopped() {
                    return;
                }
                guard.seen
            };
            match self.request_grant(&mut client, target) {
                Ok(Grant::Table { round, table }) => {
                    let outcome = self.apply_scaling(&table);
                    let mut r = self.rounds.lock().expect("rounds");
                    r.last_error = outcome.err().map(|e| {
                        warn!("round {round} failed: {e}");
                        e.to_string()
                    });
                    r.applied = r.applied.max(round);
                    r.seen = r.seen.max(round);
                    self.round_cv.notify_all();
                }
                Ok(Grant::Stale { current }) => {
                    let mut r = self.rounds.lock().expect("rounds");
                    if current > target {
                        r.seen = r.seen.max(current);
                    } else {
                        // controller is behind what we saw; skip that round
                        r.applied = r.applied.max(target);
                        self.round_cv.notify_all();
                    }
                }
                Err(e) => {
                    debug!("scaling request failed: {e}");
                    if self.stop.sleep(self.config.poll_backoff_max) {
                        return;
                    }
                }
            }
        }
    }
}
