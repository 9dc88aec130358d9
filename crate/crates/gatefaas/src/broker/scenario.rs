//! Desk cluster (controller and node in one process) and the reference
//! scenarios run against it.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use gatefaas_core::{
    value_map, AutoScaleDirective, FunctionLabel, GatePorts, InnerFer, PortsTable, ScalingEntry, ScalingTable, Value,
    ValueMap,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tempfile::TempDir;
use thiserror::Error;

use super::bench::{collect_until, mean_stddev, submit_batch, RunReport};
use super::dft::{dft, max_relative_error};
use super::{BrokerError, Methods};
use crate::controller::{self, ControllerError, ControllerHandle, InitConfig};
use crate::feu::builtin;
use crate::net::free_ports;
use crate::node::{Inventory, Node, NodeConfig, NodeError};

pub const DESK_CLUSTER: &str = "desk";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error("scaling round {round} not applied within {waited:?}: {detail}")]
    ScalingTimeout { round: u64, waited: Duration, detail: String },
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// The function packages shipped with this crate.
pub fn bundled_functions() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("functions")
}

#[derive(Debug, Clone)]
pub struct DeskOptions {
    pub functions_root: PathBuf,
    pub labels: Vec<FunctionLabel>,
    pub nodes: usize,
    pub poll_interval: Duration,
    pub poll_backoff_max: Duration,
    pub feu_program: Option<PathBuf>,
    pub apply_priority: bool,
    pub exec_timeout: Option<Duration>,
    pub work_dir: Option<PathBuf>,
}

impl DeskOptions {
    pub fn new(labels: &[&str]) -> Self {
        DeskOptions {
            functions_root: bundled_functions(),
            labels: labels
                .iter()
                .map(|l| FunctionLabel::new(*l).expect("valid label"))
                .collect(),
            nodes: 1,
            poll_interval: Duration::from_millis(1),
            poll_backoff_max: Duration::from_millis(10),
            feu_program: None,
            apply_priority: true,
            exec_timeout: Some(Duration::from_secs(300)),
            work_dir: None,
        }
    }
}

/// A controller on free loopback ports with `nodes` paired nodes in one
/// cluster.
pub struct DeskCluster {
    pub nodes: Vec<Node>,
    pub controller: ControllerHandle,
    _work: Option<TempDir>,
}

impl DeskCluster {
    pub fn start(opts: &DeskOptions) -> Result<DeskCluster, ScenarioError> {
        let n = opts.labels.len();
        let mut config = None;
        for _ in 0..3 {
            let ports = free_ports(2 * n + 4)?;
            let table = PortsTable {
                gates: opts
                    .labels
                    .iter()
                    .enumerate()
                    .map(|(i, l)| {
                        (
                            l.clone(),
                            GatePorts {
                                push: ports[2 * i],
                                pull: ports[2 * i + 1],
                            },
                        )
                    })
                    .collect(),
                scaling: BTreeMap::from([(DESK_CLUSTER.to_owned(), ports[2 * n])]),
                events_port: ports[2 * n + 1],
            };
            let mut init = InitConfig::new(
                table,
                BTreeMap::from([(DESK_CLUSTER.to_owned(), opts.nodes)]),
                &opts.functions_root,
                ports[2 * n + 2],
            );
            init.broker_port = Some(ports[2 * n + 3]);
            match controller::start(init) {
                Ok(h) => {
                    config = Some(h);
                    break;
                }
                // lost a probed port to another process; probe again
                Err(ControllerError::Bind { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        let controller = config.ok_or_else(|| ScenarioError::Failed("no free ports for the desk controller".into()))?;

        let (work, root) = match &opts.work_dir {
            Some(p) => (None, p.clone()),
            None => {
                let t = tempfile::Builder::new().prefix("gatefaas-desk").tempdir()?;
                let p = t.path().to_owned();
                (Some(t), p)
            }
        };
        let mut nodes = Vec::new();
        for i in 0..opts.nodes {
            let mut nc = NodeConfig::new(controller.clerk_addr().to_string(), DESK_CLUSTER, root.join(format!("node{i}")));
            nc.poll_interval = opts.poll_interval;
            nc.poll_backoff_max = opts.poll_backoff_max;
            nc.pair_timeout = Some(Duration::from_secs(10));
            nc.apply_priority = opts.apply_priority;
            nc.exec_timeout = opts.exec_timeout;
            if let Some(p) = &opts.feu_program {
                nc.feu_program = p.clone();
            }
            nodes.push(Node::pair(nc)?);
        }
        Ok(DeskCluster {
            nodes,
            controller,
            _work: work,
        })
    }

    pub fn methods(&self) -> &dyn Methods {
        &**self.controller.controller()
    }

    /// Starts a round with one table per node and waits until every node
    /// applied it.
    pub fn scale(&self, tables: Vec<ScalingTable>, timeout: Duration) -> Result<u64, ScenarioError> {
        let directive = AutoScaleDirective {
            clusters: BTreeMap::from([(DESK_CLUSTER.to_owned(), tables)]),
        };
        let round = self.methods().autoscale(&directive)?;
        for node in &self.nodes {
            if !node.wait_for_round(round, timeout) {
                return Err(ScenarioError::ScalingTimeout {
                    round,
                    waited: timeout,
                    detail: node.last_error().unwrap_or_else(|| "no grant yet".into()),
                });
            }
            if let Some(e) = node.last_error() {
                return Err(ScenarioError::Failed(format!("round {round}: {e}")));
            }
        }
        Ok(round)
    }

    /// A table of `count` units of `label`, each with `cpu_portion`.
    pub fn table(label: &str, count: u32, cpu_portion: f64) -> ScalingTable {
        let label = FunctionLabel::new(label).expect("valid label");
        ScalingTable::new(vec![ScalingEntry::new(label, count, cpu_portion).expect("valid entry")])
    }

    pub fn inventory(&self) -> Vec<Inventory> {
        self.nodes.iter().map(Node::inventory).collect()
    }
}

#[derive(Debug, Clone)]
pub struct IterationResult {
    pub iter: usize,
    pub report: RunReport,
}

#[derive(Debug, Clone)]
pub struct ScenarioAReport {
    pub iterations: Vec<IterationResult>,
    /// Mean time of one direct in-process hellocot call.
    pub standalone_ms: f64,
}

impl ScenarioAReport {
    pub fn mean_of_means_ms(&self) -> f64 {
        let means: Vec<f64> = self.iterations.iter().map(|i| i.report.mean_ms).collect();
        mean_stddev(&means).0
    }

    /// Latency above bare function execution.
    pub fn overhead_ms(&self) -> f64 {
        self.mean_of_means_ms() - self.standalone_ms
    }

    pub fn write_csv(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "iter,mean_ms,stddev_ms,wall_s")?;
        for it in &self.iterations {
            writeln!(
                out,
                "{},{:.4},{:.4},{:.4}",
                it.iter,
                it.report.mean_ms,
                it.report.stddev_ms,
                it.report.wall.as_secs_f64()
            )?;
        }
        Ok(())
    }
}

pub fn standalone_hellocot_ms(calls: usize) -> f64 {
    let f = builtin("hellocot").expect("builtin");
    let inner = InnerFer::default();
    let t = Instant::now();
    for _ in 0..calls {
        std::hint::black_box((f.body)(std::hint::black_box(&inner)).ok());
    }
    t.elapsed().as_secs_f64() * 1e3 / calls.max(1) as f64
}

pub const COLLECT_DEADLINE: Duration = Duration::from_secs(120);

/// Repeated batches of hellocot FERs against an already scaled cluster.
pub fn scenario_a(methods: &dyn Methods, iters: usize, batch: usize) -> Result<ScenarioAReport, ScenarioError> {
    let label = FunctionLabel::new("hellocot").expect("valid label");
    let mut iterations = Vec::new();
    for iter in 0..iters {
        let sub = submit_batch(methods, &label, batch, &format!("a{iter}"), |_| ValueMap::new())?;
        let report = collect_until(methods, &sub, COLLECT_DEADLINE)?;
        iterations.push(IterationResult { iter, report });
    }
    Ok(ScenarioAReport {
        iterations,
        standalone_ms: standalone_hellocot_ms(10_000),
    })
}

#[derive(Debug, Clone)]
pub struct ScenarioBReport {
    pub blocks: usize,
    pub max_error: f64,
    pub failures: Vec<String>,
    pub run: RunReport,
}

pub const SCENARIO_B_BLOCKS: usize = 100;
pub const SCENARIO_B_BLOCK_LEN: usize = 256;
pub const SCENARIO_B_SEED: u64 = 0x5eed_f00d;

pub fn scenario_b_blocks(seed: u64, blocks: usize, len: usize) -> Vec<Vec<f64>> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..blocks)
        .map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn floats(v: Option<&Value>) -> Option<Vec<f64>> {
    v?.as_list()?.iter().map(Value::as_f64).collect()
}

/// Seeded random blocks through the fft function, each checked against
/// the direct DFT.
pub fn scenario_b(methods: &dyn Methods, seed: u64) -> Result<ScenarioBReport, ScenarioError> {
    let label = FunctionLabel::new("fft").expect("valid label");
    let blocks = scenario_b_blocks(seed, SCENARIO_B_BLOCKS, SCENARIO_B_BLOCK_LEN);
    let sub = submit_batch(methods, &label, blocks.len(), "b", |i| {
        value_map! { "block" => blocks[i].clone() }
    })?;
    let run = collect_until(methods, &sub, COLLECT_DEADLINE)?;
    let mut max_error: f64 = 0.0;
    let mut failures = Vec::new();
    for rec in &run.records {
        let i: usize = rec.id.trim_start_matches("b-").parse().expect("own id");
        if !rec.ret.is_ok() {
            failures.push(format!("{}: {}", rec.id, rec.ret.error_text().unwrap_or("?")));
            continue;
        }
        let (re, im) = match (floats(rec.ret.val.get("re")), floats(rec.ret.val.get("im"))) {
            (Some(re), Some(im)) => (re, im),
            _ => {
                failures.push(format!("{}: malformed spectrum", rec.id));
                continue;
            }
        };
        let (wr, wi) = dft(&blocks[i]);
        max_error = max_error.max(max_relative_error((&re, &im), (&wr, &wi)));
    }
    for id in &run.missing {
        failures.push(format!("{id}: no RET"));
    }
    Ok(ScenarioBReport {
        blocks: blocks.len(),
        max_error,
        failures,
        run,
    })
}
