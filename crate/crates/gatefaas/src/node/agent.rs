//! Agent threads: pull FERs from a gate, run them on a unit, return RETs.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use gatefaas_core::protocol::{fer_request, parse_fer_reply};
use gatefaas_core::{attach_id, strip_id, value_map, FunctionLabel, Ret, Status};
use log::{debug, error, warn};

use super::backend::ExecutionBackend;
use super::slots::{FeuUnit, Lease, SlotRegistry};
use crate::net::StopSignal;
use crate::wire::{PushClient, ReqClient};

pub const FEU_UNAVAILABLE: &str = "feu_unavailable";

#[derive(Debug, Default)]
pub struct NodeStats {
    pub executed: AtomicU64,
    pub errors: AtomicU64,
    pub recycled: AtomicU64,
    pub rets_lost: AtomicU64,
}

impl NodeStats {
    pub fn executed(&self) -> u64 {
        self.executed.load(Ordering::Relaxed)
    }

    pub fn errors(&self) -> u64 {
        self.errors.load(Ordering::Relaxed)
    }

    pub fn recycled(&self) -> u64 {
        self.recycled.load(Ordering::Relaxed)
    }
}

#[derive(Clone)]
pub struct AgentContext {
    pub label: FunctionLabel,
    pub push_addr: String,
    pub pull_addr: String,
    pub slots: Arc<SlotRegistry>,
    pub backend: Arc<dyn ExecutionBackend>,
    pub run_root: PathBuf,
    pub stop: Arc<StopSignal>,
    pub stats: Arc<NodeStats>,
    pub poll_interval: Duration,
    pub poll_backoff_max: Duration,
    pub exec_timeout: Option<Duration>,
    pub ready_timeout: Duration,
}

const RET_ATTEMPTS: u32 = 5;

fn send_ret(ctx: &AgentContext, pull: &mut PushClient, ret: &Ret) {
    let frame = ret.to_map();
    let mut wait = ctx.poll_interval.max(Duration::from_millis(1));
    for attempt in 1..=RET_ATTEMPTS {
        match pull.send(&frame) {
            Ok(()) => return,
            Err(e) if attempt == RET_ATTEMPTS => {
                error!("dropping RET {} for {}: {e}", ret.id, ctx.label);
            }
            Err(e) => debug!("RET push failed ({e}), retrying"),
        }
        if ctx.stop.sleep(wait) {
            break;
        }
        wait = (wait * 2).min(ctx.poll_backoff_max);
    }
    ctx.stats.rets_lost.fetch_add(1, Ordering::Relaxed);
}

/// Replaces a unit that stopped answering. Returns false when no
/// replacement could be started.
fn recycle(ctx: &AgentContext, lease: &mut Lease) -> bool {
    ctx.stats.recycled.fetch_add(1, Ordering::Relaxed);
    lease.unit.process.kill();
    let image = lease.unit.image.clone();
    match FeuUnit::start(
        ctx.backend.as_ref(),
        &image,
        lease.unit.cpu_portion,
        &ctx.run_root,
        ctx.ready_timeout,
    ) {
        Ok(unit) => {
            lease.unit = unit;
            true
        }
        Err(e) => {
            warn!("cannot replace unit for {}: {e}", ctx.label);
            false
        }
    }
}

pub fn agent_loop(ctx: AgentContext) {
    let mut push = ReqClient::new(ctx.push_addr.clone());
    let mut pull = PushClient::new(ctx.pull_addr.clone());
    let request = fer_request();
    let mut idle = ctx.poll_interval;
    while !ctx.stop.is_stopped() {
        let fer = match push.request(&request).map_err(|e| e.to_string()).and_then(|r| {
            parse_fer_reply(r).map_err(|e| e.to_string())
        }) {
            Ok(Some(fer)) => fer,
            Ok(None) => {
                if ctx.stop.sleep(idle) {
                    break;
                }
                idle = (idle * 2).min(ctx.poll_backoff_max);
                continue;
            }
            Err(e) => {
                debug!("gate {} poll failed: {e}", ctx.label);
                if ctx.stop.sleep(ctx.poll_backoff_max) {
                    break;
                }
                continue;
            }
        };
        idle = ctx.poll_interval;

        let (id, inner) = match strip_id(fer.to_map()) {
            Ok(parts) => parts,
            Err(e) => {
                warn!("gate {} sent an unusable FER: {e}", ctx.label);
                continue;
            }
        };
        let (stat, val) = match ctx.slots.acquire(&ctx.label) {
            None => (Status::Error, value_map! { "error" => FEU_UNAVAILABLE }),
            Some(mut lease) => {
                let (stat, val, broken) = lease.unit.service.exec(inner, ctx.exec_timeout);
                if let Some(why) = broken {
                    warn!("unit {} for {} broken ({why:?}), recycling", lease.unit.service.endpoint(), ctx.label);
                    if !recycle(&ctx, &mut lease) {
                        ctx.slots.remove(lease.slot);
                    } else {
                        ctx.slots.release(lease);
                    }
                } else {
                    ctx.slots.release(lease);
                }
                (stat, val)
            }
        };
        ctx.stats.executed.fetch_add(1, Ordering::Relaxed);
        if stat == Status::Error {
            ctx.stats.errors.fetch_add(1, Ordering::Relaxed);
        }
        match attach_id(id.clone(), stat, val) {
            Ok(ret) => send_ret(&ctx, &mut pull, &ret),
            Err(e) => {
                // an ERROR without error text from a misbehaving unit
                if let Ok(ret) = Ret::error(id, format!("invalid result: {e}")) {
                    send_ret(&ctx, &mut pull, &ret);
                }
            }
        }
    }
}
