//! Batch submission and RET collection with per-request latency.

use std::collections::{BTreeMap, BTreeSet};
use std::thread;
use std::time::{Duration, Instant};

use gatefaas_core::{Fer, FunctionLabel, Ret, ValueMap};

use super::{BrokerError, Methods};

/// How long the collector sleeps when the gate has nothing ready.
pub const COLLECT_IDLE: Duration = Duration::from_micros(500);

#[derive(Debug, Clone)]
pub struct Submission {
    pub label: FunctionLabel,
    pub started: Instant,
    pub submitted: BTreeMap<String, Instant>,
}

/// Pushes `count` FERs built by `input` (given the index), ids
/// `<prefix>-<i>`.
pub fn submit_batch<F>(
    methods: &dyn Methods,
    label: &FunctionLabel,
    count: usize,
    id_prefix: &str,
    mut input: F,
) -> Result<Submission, BrokerError>
where
    F: FnMut(usize) -> ValueMap,
{
    let started = Instant::now();
    let mut submitted = BTreeMap::new();
    for i in 0..count {
        let id = format!("{id_prefix}-{i}");
        let fer = Fer::new(id.clone(), input(i), ValueMap::new()).expect("generated ids are non-empty");
        let at = Instant::now();
        methods.push_fer(label, fer)?;
        submitted.insert(id, at);
    }
    Ok(Submission {
        label: label.clone(),
        started,
        submitted,
    })
}

#[derive(Debug, Clone)]
pub struct Record {
    pub id: String,
    pub latency: Duration,
    pub ret: Ret,
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub submitted: usize,
    /// RETs with status OK.
    pub completed: usize,
    pub errored: usize,
    /// Mean and population standard deviation of latency over every
    /// collected RET, in milliseconds.
    pub mean_ms: f64,
    pub stddev_ms: f64,
    pub wall: Duration,
    pub records: Vec<Record>,
    /// Submitted ids with no RET by the deadline.
    pub missing: Vec<String>,
    /// RETs whose id was never submitted.
    pub unexpected: Vec<String>,
    pub duplicates: Vec<String>,
    pub incomplete: bool,
}

impl RunReport {
    pub fn collected(&self) -> usize {
        self.records.len()
    }

    /// Every submitted id came back exactly once and nothing else did.
    pub fn ids_match(&self) -> bool {
        self.missing.is_empty() && self.unexpected.is_empty() && self.duplicates.is_empty()
    }
}

pub fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Pops RETs until every submitted id is back or `deadline` elapses.
pub fn collect_until(methods: &dyn Methods, sub: &Submission, deadline: Duration) -> Result<RunReport, BrokerError> {
    let stop_at = Instant::now() + deadline;
    let mut seen = BTreeSet::new();
    let mut report = RunReport {
        submitted: sub.submitted.len(),
        ..RunReport::default()
    };
    while seen.len() < sub.submitted.len() {
        match methods.pop_ret(&sub.label)? {
            Some(ret) => {
                let now = Instant::now();
                let Some(at) = sub.submitted.get(&ret.id) else {
                    report.unexpected.push(ret.id);
                    continue;
                };
                if !seen.insert(ret.id.clone()) {
                    report.duplicates.push(ret.id);
                    continue;
                }
                if ret.is_ok() {
                    report.completed += 1;
                } else {
                    report.errored += 1;
                }
                report.records.push(Record {
                    id: ret.id.clone(),
                    latency: now - *at,
                    ret,
                });
            }
            None => {
                if Instant::now() >= stop_at {
                    report.incomplete = true;
                    break;
                }
                thread::sleep(COLLECT_IDLE);
            }
        }
    }
    report.wall = sub.started.elapsed();
    report.missing = sub
        .submitted
        .keys()
        .filter(|id| !seen.contains(*id))
        .cloned()
        .collect();
    let ms: Vec<f64> = report.records.iter().map(|r| r.latency.as_secs_f64() * 1e3).collect();
    (report.mean_ms, report.stddev_ms) = mean_stddev(&ms);
    Ok(report)
}
