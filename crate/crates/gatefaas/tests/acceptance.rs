//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, VecDeque};
use std::io::{Read, Write};
use std::net::TcpStream;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::atomic::Ordering;
use std::time::{Duration, Instant};

use gatefaas::broker::bench::{collect_until, submit_batch};
use gatefaas::broker::scenario::{scenario_a, scenario_b, DeskCluster, DeskOptions, SCENARIO_B_SEED};
use gatefaas::core::codec::{decode_frame, encode_frame, encode_payload, CodecError};
use gatefaas::core::protocol::{fer_request, parse_fer_reply, parse_grant, ClerkRequest, ScalingRequest};
use gatefaas::core::{
    value_map, AutoScaleDirective, Fer, FunctionLabel, Grant, Ret, ScalingEntry, ScalingTable, Status, Value,
    ValueMap,
};
use gatefaas::feu::functions::HELLO;
use gatefaas::wire::{read_frame, ReqClient};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use common::{copy_functions, desk, desk_with, eventually, process_alive};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const WAIT: Duration = Duration::from_secs(30);

fn label(s: &str) -> FunctionLabel {
    FunctionLabel::new(s).unwrap()
}

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn e2e_hellocot() -> Outcome {
    let d = desk(&["hellocot"], 1);
    d.scale(vec![DeskCluster::table("hellocot", 10, 0.1)], WAIT).map_err(|e| e.to_string())?;
    let inv = d.nodes[0].inventory();
    check(inv.feu_count() == 10, || format!("{} FEUs running, wanted 10", inv.feu_count()))?;
    let l = label("hellocot");
    let sub = submit_batch(d.methods(), &l, 1000, "e2e", |_| ValueMap::new()).map_err(|e| e.to_string())?;
    let r = collect_until(d.methods(), &sub, Duration::from_secs(60)).map_err(|e| e.to_string())?;
    check(r.ids_match(), || {
        format!(
            "ids differ: {} missing, {} unexpected, {} duplicates",
            r.missing.len(),
            r.unexpected.len(),
            r.duplicates.len()
        )
    })?;
    let want = value_map! { "ret" => HELLO };
    let bad = r.records.iter().filter(|x| !x.ret.is_ok() || x.ret.val != want).count();
    check(bad == 0, || format!("{bad} RETs differ from {{\"ret\":\"{HELLO}\"}}"))?;
    check(r.wall < Duration::from_secs(60), || format!("wall {:?}", r.wall))?;
    Ok(format!("1000/1000 RETs, wall {:.3} s", r.wall.as_secs_f64()))
}

fn overhead_sanity() -> Outcome {
    let d = desk(&["hellocot"], 1);
    d.scale(vec![DeskCluster::table("hellocot", 10, 0.1)], WAIT).map_err(|e| e.to_string())?;
    let report = scenario_a(d.methods(), 3, 1000).map_err(|e| e.to_string())?;
    for it in &report.iterations {
        check(it.report.ids_match() && it.report.completed == 1000, || {
            format!("iteration {} incomplete", it.iter)
        })?;
    }
    let mean = report.mean_of_means_ms();
    let per_iter: Vec<String> = report.iterations.iter().map(|i| format!("{:.2}", i.report.mean_ms)).collect();
    let detail = format!(
        "mean latency {mean:.3} ms (iterations {}), overhead over standalone call {:.3} ms",
        per_iter.join(", "),
        report.overhead_ms()
    );
    check(mean < 50.0, || detail.clone())?;
    Ok(detail)
}

#[derive(Debug, Clone)]
enum Op {
    Push,
    Pop,
}

fn fifo_property() -> Outcome {
    let d = desk(&["echo"], 1);
    let h = &d.controller;
    let l = label("echo");
    let mut runner = TestRunner::new(Config {
        cases: 200,
        failure_persistence: None,
        ..Config::default()
    });
    let ops = prop::collection::vec(prop_oneof![Just(Op::Push), Just(Op::Pop)], 0..120);
    let case = Cell::new(0u32);
    runner
        .run(&ops, |ops| {
            case.set(case.get() + 1);
            let case = case.get();
            let mut model = VecDeque::new();
            let mut next = 0;
            for op in ops {
                match op {
                    Op::Push => {
                        let id = format!("c{case}-{next}");
                        next += 1;
                        h.push_fer(&l, Fer::new(id.clone(), ValueMap::new(), ValueMap::new()).unwrap())
                            .unwrap();
                        model.push_back(id);
                    }
                    Op::Pop => {
                        let got = parse_fer_reply(h.gate_push_serve(&l, &fer_request())).unwrap();
                        prop_assert_eq!(got.map(|f| f.id), model.pop_front());
                    }
                }
            }
            while let Some(f) = parse_fer_reply(h.gate_push_serve(&l, &fer_request())).unwrap() {
                prop_assert_eq!(Some(f.id), model.pop_front());
            }
            prop_assert!(model.is_empty());
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    // the RET side of the gate, through the pull server
    let mut runner = TestRunner::new(Config {
        cases: 200,
        failure_persistence: None,
        ..Config::default()
    });
    let pull = h.ports().gates[&l].pull;
    let pusher = RefCell::new(gatefaas::wire::PushClient::new(format!("127.0.0.1:{pull}")));
    runner
        .run(&prop::collection::vec(any::<bool>(), 0..40), |pushes| {
            let mut sent = Vec::new();
            for (i, _) in pushes.iter().enumerate().filter(|(_, p)| **p) {
                let ret = Ret {
                    id: format!("r{i}"),
                    stat: Status::Ok,
                    val: ValueMap::new(),
                };
                pusher.borrow_mut().send(&ret.to_map()).unwrap();
                sent.push(ret.id);
            }
            let mut got = Vec::new();
            let deadline = Instant::now() + Duration::from_secs(5);
            while got.len() < sent.len() && Instant::now() < deadline {
                match h.pop_ret(&l).unwrap() {
                    Some(r) => got.push(r.id),
                    None => std::thread::yield_now(),
                }
            }
            prop_assert_eq!(got, sent);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("200 FER interleavings and 200 RET sequences kept push order".into())
}

fn scaling_lifecycle() -> Outcome {
    let d = desk(&["hellocot", "echo"], 1);
    let table = ScalingTable::new(vec![
        ScalingEntry::new(label("hellocot"), 1, 0.1).unwrap(),
        ScalingEntry::new(label("echo"), 2, 0.1).unwrap(),
        ScalingEntry::new(label("echo"), 3, 0.2).unwrap(),
    ]);
    d.scale(vec![table], WAIT).map_err(|e| e.to_string())?;
    let inv = d.nodes[0].inventory();
    let mut eps = inv.endpoints();
    eps.sort();
    eps.dedup();
    check(eps.len() == 6 && inv.agent_count() == 6, || {
        format!("{} endpoints, {} agents", eps.len(), inv.agent_count())
    })?;
    let live = eps.iter().filter(|ep| TcpStream::connect_timeout(ep, Duration::from_secs(1)).is_ok()).count();
    check(live == 6, || format!("only {live} of 6 endpoints accept connections"))?;
    let pids = inv.pids();

    let started = Instant::now();
    d.scale(vec![ScalingTable::null()], Duration::from_secs(5)).map_err(|e| e.to_string())?;
    let inv = d.nodes[0].inventory();
    check(inv.feu_count() == 0 && inv.agent_count() == 0, || {
        format!("{} units, {} agents after null table", inv.feu_count(), inv.agent_count())
    })?;
    let gone = eventually(Duration::from_secs(5).saturating_sub(started.elapsed()), || {
        pids.iter().all(|p| !process_alive(*p))
    });
    let took = started.elapsed();
    check(gone, || "FEU processes still alive after null table".into())?;
    let dead = eps.iter().filter(|ep| TcpStream::connect_timeout(ep, Duration::from_millis(200)).is_err()).count();
    check(dead == 6, || format!("{} endpoints still accept connections", 6 - dead))?;
    Ok(format!("6 endpoints and 6 agents, all gone {:.0} ms after the null table", took.as_secs_f64() * 1e3))
}

fn bare_controller(nodes: usize) -> gatefaas::controller::ControllerHandle {
    use gatefaas::controller::InitConfig;
    use gatefaas::core::{GatePorts, PortsTable};
    let p = gatefaas::net::free_ports(5).unwrap();
    let ports = PortsTable {
        gates: BTreeMap::from([(label("hellocot"), GatePorts { push: p[0], pull: p[1] })]),
        scaling: BTreeMap::from([("desk".to_owned(), p[2])]),
        events_port: p[3],
    };
    let init = InitConfig::new(
        ports,
        BTreeMap::from([("desk".to_owned(), nodes)]),
        gatefaas::broker::scenario::bundled_functions(),
        p[4],
    );
    gatefaas::controller::start(init).unwrap()
}

fn round_fairness() -> Outcome {
    let table = DeskCluster::table("hellocot", 1, 0.2);
    let bare = bare_controller(3);
    let port = bare.ports().scaling["desk"];
    let mut clients: Vec<ReqClient> = (0..3).map(|_| ReqClient::new(format!("127.0.0.1:{port}"))).collect();
    let mut rng = StdRng::seed_from_u64(20);
    for trial in 0..20 {
        let round = bare
            .autoscale(&AutoScaleDirective {
                clusters: BTreeMap::from([("desk".to_owned(), vec![table.clone(), table.clone()])]),
            })
            .map_err(|e| e.to_string())?;
        let mut order = vec![0usize, 1, 2];
        order.shuffle(&mut rng);
        let mut active = Vec::new();
        for &i in &order {
            let req = ScalingRequest {
                cluster: "desk".into(),
                round: Some(round),
            };
            let grant = parse_grant(clients[i].request(&req.to_map()).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            match grant {
                Grant::Table { table, .. } if !table.is_null() => active.push(i),
                Grant::Table { .. } => {}
                Grant::Stale { current } => return Err(format!("trial {trial}: stale, current {current}")),
            }
        }
        check(active == order[..2], || {
            format!("trial {trial}: order {order:?} activated {active:?}")
        })?;
    }
    // live nodes follow the same rule
    let d = desk(&["hellocot"], 3);
    let round = d
        .scale(vec![table.clone(), table], WAIT)
        .map_err(|e| e.to_string())?;
    let counts: Vec<usize> = d.inventory().iter().map(|i| i.feu_count()).collect();
    let busy = counts.iter().filter(|c| **c > 0).count();
    check(busy == 2, || format!("round {round}: units per node {counts:?}"))?;
    Ok(format!("20 shuffled orderings: first two requesters active; live nodes {counts:?}"))
}

fn deploy_cache() -> Outcome {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut opts = DeskOptions::new(&["hellocot"]);
    opts.functions_root = copy_functions(&["hellocot"], work.path());
    let d = desk_with(opts.clone());
    let sources = || d.controller.stats().source_requests.load(Ordering::Relaxed);
    d.scale(vec![DeskCluster::table("hellocot", 1, 0.5)], WAIT).map_err(|e| e.to_string())?;
    d.scale(vec![DeskCluster::table("hellocot", 1, 0.5)], WAIT).map_err(|e| e.to_string())?;
    check(sources() == 1, || format!("{} source requests for two scalings", sources()))?;
    let builds = d.nodes[0].cache().builds();
    check(builds == 1, || format!("{builds} builds for two scalings"))?;

    let src = opts.functions_root.join("hellocot/func.py");
    let mut text = std::fs::read_to_string(&src).map_err(|e| e.to_string())?;
    text.push_str("\n# edited\n");
    std::fs::write(&src, text).map_err(|e| e.to_string())?;
    d.scale(vec![DeskCluster::table("hellocot", 1, 0.5)], WAIT).map_err(|e| e.to_string())?;
    d.scale(vec![DeskCluster::table("hellocot", 1, 0.5)], WAIT).map_err(|e| e.to_string())?;
    let rebuilt = d.nodes[0].cache().builds() - builds;
    check(rebuilt == 1, || format!("{rebuilt} rebuilds after the source change"))?;
    Ok("1 source request across two scalings, 1 rebuild after the source change".into())
}

fn fault_isolation() -> Outcome {
    let d = desk(&["oddfail"], 1);
    d.scale(vec![DeskCluster::table("oddfail", 4, 0.25)], WAIT).map_err(|e| e.to_string())?;
    let l = label("oddfail");
    let sub = submit_batch(d.methods(), &l, 100, "odd", |i| value_map! { "i" => i as i64 })
        .map_err(|e| e.to_string())?;
    let r = collect_until(d.methods(), &sub, WAIT).map_err(|e| e.to_string())?;
    check(r.ids_match(), || format!("{} missing", r.missing.len()))?;
    check(r.completed == 50 && r.errored == 50, || format!("{} OK, {} ERROR", r.completed, r.errored))?;
    for rec in &r.records {
        let i: i64 = rec.id.trim_start_matches("odd-").parse().map_err(|_| rec.id.clone())?;
        check(rec.ret.is_ok() == (i % 2 == 0), || format!("{} has the wrong status", rec.id))?;
    }
    // still serving afterwards
    let sub = submit_batch(d.methods(), &l, 4, "after", |i| value_map! { "i" => 2 * i as i64 })
        .map_err(|e| e.to_string())?;
    let after = collect_until(d.methods(), &sub, WAIT).map_err(|e| e.to_string())?;
    check(after.completed == 4, || "node stopped serving after failures".into())?;
    Ok(format!("50 OK + 50 ERROR with matching ids, {} units recycled", d.nodes[0].stats().recycled()))
}

fn scenario_b_numerics() -> Outcome {
    let started = Instant::now();
    let d = desk(&["fft"], 1);
    d.scale(vec![DeskCluster::table("fft", 4, 0.25)], WAIT).map_err(|e| e.to_string())?;
    let r = scenario_b(d.methods(), SCENARIO_B_SEED).map_err(|e| e.to_string())?;
    let took = started.elapsed();
    check(r.failures.is_empty(), || format!("{} failures, first {:?}", r.failures.len(), r.failures.first()))?;
    check(r.max_error <= 1e-9, || format!("max relative error {:e}", r.max_error))?;
    check(took < Duration::from_secs(120), || format!("took {took:?}"))?;
    Ok(format!(
        "100 blocks, max relative error {:.2e}, {:.2} s",
        r.max_error,
        took.as_secs_f64()
    ))
}

fn leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::Int),
        prop::num::f64::NORMAL
            .prop_union(prop::num::f64::SUBNORMAL)
            .or(prop::num::f64::ZERO)
            .prop_map(Value::Float),
        "\\PC{0,12}".prop_map(Value::Str),
    ]
}

fn value_map_strategy() -> impl Strategy<Value = ValueMap> {
    let v = leaf().prop_recursive(4, 48, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(Value::List),
            prop::collection::btree_map("\\PC{0,8}", inner, 0..6).prop_map(Value::Map),
        ]
    });
    prop::collection::btree_map("[a-z]{0,6}", v, 0..6)
}

fn codec_fuzz() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&value_map_strategy(), |m| {
            let frame = encode_frame(&m).unwrap();
            let (back, used) = decode_frame(&frame).unwrap();
            prop_assert_eq!(used, frame.len());
            prop_assert_eq!(encode_frame(&back).unwrap(), frame.clone());
            prop_assert_eq!(back, m);
            let cut = frame.len() / 2;
            let truncated = matches!(decode_frame(&frame[..cut]), Err(CodecError::Incomplete { .. }));
            prop_assert!(truncated, "half a frame was not reported incomplete");
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    let d = desk(&["echo"], 1);
    let clerk = d.controller.clerk_addr();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let feu = std::net::SocketAddr::from(([127, 0, 0, 1], gatefaas::net::free_ports(1).unwrap()[0]));
    gatefaas::feu::write_boot_file(&dir.path().join("Boot"), feu).map_err(|e| e.to_string())?;
    let mut unit = std::process::Command::new(common::feu_program())
        .arg("--boot")
        .arg(dir.path().join("Boot"))
        .args(["--label", "echo"])
        .spawn()
        .map_err(|e| e.to_string())?;
    let up = eventually(Duration::from_secs(10), || TcpStream::connect(feu).is_ok());
    check(up, || "standalone FEU did not start".into())?;
    // one connection at a time: the probe above must be closed first
    std::thread::sleep(Duration::from_millis(50));
    let alive = |addr: std::net::SocketAddr| {
        ReqClient::new(addr.to_string())
            .request(&ClerkRequest::Check.to_map())
            .is_ok()
    };
    for target in [clerk, feu] {
        let payload = encode_payload(&value_map! { "c" => "chk" }).unwrap();
        let mut s = TcpStream::connect(target).map_err(|e| e.to_string())?;
        s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
        // truncated frame, then hang up
        s.write_all(&(payload.len() as u32 + 10).to_be_bytes()).unwrap();
        s.write_all(&payload).unwrap();
        drop(s);
        // oversize length prefix: one error reply, then the connection closes
        let mut s = TcpStream::connect(target).map_err(|e| e.to_string())?;
        s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
        s.write_all(&0x7fff_ffffu32.to_be_bytes()).unwrap();
        let reply = read_frame(&mut s, 1 << 20).map_err(|e| e.to_string())?;
        check(reply.is_some(), || format!("{target}: no reply to an oversize prefix"))?;
        let mut rest = Vec::new();
        let _ = s.read_to_end(&mut rest);
        check(rest.is_empty(), || format!("{target}: connection kept open after oversize frame"))?;
        check(alive(target), || format!("{target} stopped answering"))?;
    }
    let exited = unit.try_wait().map_err(|e| e.to_string())?;
    let _ = unit.kill();
    let _ = unit.wait();
    check(exited.is_none(), || format!("FEU exited: {exited:?}"))?;
    Ok("10000 maps round-tripped; clerk and FEU survived truncated and oversize frames".into())
}

fn main() -> ExitCode {
    panic::set_hook(Box::new(|_| {}));
    let criteria: &[Criterion] = &[
        ("end-to-end hellocot", e2e_hellocot),
        ("overhead sanity", overhead_sanity),
        ("FIFO property", fifo_property),
        ("scaling lifecycle", scaling_lifecycle),
        ("scaling round fairness", round_fairness),
        ("deployment cache", deploy_cache),
        ("fault isolation", fault_isolation),
        ("scenario-B numerics", scenario_b_numerics),
        ("codec fuzz", codec_fuzz),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1} s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{secs:.1} s]");
            }
        }
        std::io::stdout().flush().ok();
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
