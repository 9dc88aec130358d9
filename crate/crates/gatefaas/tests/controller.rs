use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::atomic::Ordering;
use std::time::Duration;

use gatefaas::controller::{self, ControllerError, InitConfig};
use gatefaas::core::protocol::{fer_request, parse_fer_reply, parse_grant, ClerkRequest, ScalingRequest};
use gatefaas::core::{
    value_map, AutoScaleDirective, Fer, FunctionLabel, GatePorts, Grant, PortsTable, Ret, ScalingEntry, ScalingTable,
    ValueMap,
};
use gatefaas::net::free_ports;
use gatefaas::wire::{read_frame, PushClient, ReqClient};

fn label(s: &str) -> FunctionLabel {
    FunctionLabel::new(s).unwrap()
}

fn init(labels: &[&str], nodes: usize) -> InitConfig {
    let n = labels.len();
    let ports = free_ports(2 * n + 4).unwrap();
    let table = PortsTable {
        gates: labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                (
                    label(l),
                    GatePorts {
                        push: ports[2 * i],
                        pull: ports[2 * i + 1],
                    },
                )
            })
            .collect(),
        scaling: BTreeMap::from([("c1".to_owned(), ports[2 * n])]),
        events_port: ports[2 * n + 1],
    };
    let mut config = InitConfig::new(
        table,
        BTreeMap::from([("c1".to_owned(), nodes)]),
        gatefaas::broker::scenario::bundled_functions(),
        ports[2 * n + 2],
    );
    config.broker_port = Some(ports[2 * n + 3]);
    config
}

fn addr(port: u16) -> String {
    format!("127.0.0.1:{port}")
}

#[test]
fn clerk_answers_pairing_queries() {
    let h = controller::start(init(&["hellocot", "echo"], 1)).unwrap();
    let mut clerk = ReqClient::new(h.clerk_addr().to_string());
    assert_eq!(clerk.request(&ClerkRequest::Check.to_map()).unwrap(), value_map! { "r" => "OK" });

    let gates = clerk.request(&ClerkRequest::GatePorts.to_map()).unwrap();
    let gates = PortsTable::gates_from_map(gates["gates"].as_map().unwrap()).unwrap();
    assert_eq!(&gates, &h.ports().gates);

    let scaling = clerk.request(&ClerkRequest::ScalingPorts.to_map()).unwrap();
    let (clusters, events) = PortsTable::scaling_from_map(&scaling).unwrap();
    assert_eq!(clusters, h.ports().scaling);
    assert_eq!(events, h.ports().events_port);

    let src = clerk.request(&ClerkRequest::Source(label("hellocot")).to_map()).unwrap();
    let pkg = src["package"].as_map().unwrap();
    assert!(pkg["source"].as_str().unwrap().contains("Hello Cloud of Things!"));
    let dig = clerk.request(&ClerkRequest::Digest(label("hellocot")).to_map()).unwrap();
    assert_eq!(dig["digest"].as_str().unwrap().len(), 64);
    assert_eq!(h.stats().source_requests.load(Ordering::Relaxed), 1);

    let unknown = clerk.request(&ClerkRequest::Source(label("nosuch")).to_map()).unwrap();
    assert_eq!(unknown["r"].as_str(), Some("ERR"));
    let bogus = clerk.request(&value_map! { "c" => "launch" }).unwrap();
    assert_eq!(bogus["r"].as_str(), Some("ERR"));
}

#[test]
fn gates_move_fers_and_rets_in_order() {
    let h = controller::start(init(&["echo"], 1)).unwrap();
    let gate = h.ports().gates[&label("echo")];
    let mut push = ReqClient::new(addr(gate.push));
    assert_eq!(parse_fer_reply(push.request(&fer_request()).unwrap()).unwrap(), None);

    for i in 0..5 {
        h.push_fer(&label("echo"), Fer::new(format!("f{i}"), value_map! { "i" => i }, ValueMap::new()).unwrap())
            .unwrap();
    }
    let mut pull = PushClient::new(addr(gate.pull));
    for i in 0..5 {
        let fer = parse_fer_reply(push.request(&fer_request()).unwrap()).unwrap().unwrap();
        assert_eq!(fer.id, format!("f{i}"));
        let ret = Ret {
            id: fer.id.clone(),
            stat: gatefaas::core::Status::Ok,
            val: fer.x.clone(),
        };
        pull.send(&ret.to_map()).unwrap();
    }
    pull.send(&value_map! { "junk" => 1 }).unwrap();
    let mut got = Vec::new();
    for _ in 0..500 {
        if let Some(r) = h.pop_ret(&label("echo")).unwrap() {
            got.push(r.id);
        }
        if got.len() == 5 {
            break;
        }
        std::thread::sleep(Duration::from_millis(2));
    }
    assert_eq!(got, ["f0", "f1", "f2", "f3", "f4"]);
    assert!(!h.check_available(&label("echo")).unwrap());
    std::thread::sleep(Duration::from_millis(50));
    assert_eq!(h.stats().rets_dropped.load(Ordering::Relaxed), 1);
    assert!(h.push_fer(&label("nosuch"), Fer::new("x", ValueMap::new(), ValueMap::new()).unwrap()).is_err());
}

#[test]
fn scaling_server_grants_first_come_first_served() {
    let h = controller::start(init(&["hellocot"], 3)).unwrap();
    let table = ScalingTable::new(vec![ScalingEntry::new(label("hellocot"), 1, 0.5).unwrap()]);
    let round = h
        .autoscale(&AutoScaleDirective {
            clusters: BTreeMap::from([("c1".to_owned(), vec![table.clone(), table.clone()])]),
        })
        .unwrap();
    let port = h.ports().scaling["c1"];
    let req = |r: Option<u64>| {
        ScalingRequest {
            cluster: "c1".into(),
            round: r,
        }
        .to_map()
    };
    let mut nodes: Vec<ReqClient> = (0..3).map(|_| ReqClient::new(addr(port))).collect();
    let grants: Vec<Grant> = nodes
        .iter_mut()
        .map(|c| parse_grant(c.request(&req(Some(round))).unwrap()).unwrap())
        .collect();
    assert_eq!(grants[0], Grant::Table { round, table: table.clone() });
    assert_eq!(grants[1], Grant::Table { round, table });
    assert_eq!(
        grants[2],
        Grant::Table {
            round,
            table: ScalingTable::null()
        }
    );
    let stale = parse_grant(nodes[0].request(&req(Some(round - 1))).unwrap()).unwrap();
    assert_eq!(stale, Grant::Stale { current: round });
    let wrong = nodes[0]
        .request(&ScalingRequest {
            cluster: "c9".into(),
            round: None,
        }
        .to_map())
        .unwrap();
    assert_eq!(wrong["r"].as_str(), Some("ERR"));
}

#[test]
fn late_subscribers_get_the_last_event() {
    let h = controller::start(init(&["hellocot"], 1)).unwrap();
    let round = h
        .autoscale(&AutoScaleDirective {
            clusters: BTreeMap::from([("c1".to_owned(), vec![])]),
        })
        .unwrap();
    let mut sub = TcpStream::connect(addr(h.ports().events_port)).unwrap();
    sub.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    let ev = read_frame(&mut sub, 1 << 20).unwrap().unwrap();
    assert_eq!(ev, value_map! { "e" => "scale", "round" => round });
    let next = h
        .autoscale(&AutoScaleDirective {
            clusters: BTreeMap::new(),
        })
        .unwrap();
    let ev = read_frame(&mut sub, 1 << 20).unwrap().unwrap();
    assert_eq!(ev["round"].as_i64(), Some(next as i64));
}

#[test]
fn bad_frames_do_not_take_servers_down() {
    let h = controller::start(init(&["hellocot"], 1)).unwrap();
    // malformed JSON gets an error reply on the same connection
    let mut raw = TcpStream::connect(h.clerk_addr()).unwrap();
    raw.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    raw.write_all(&[0, 0, 0, 3, b'{', b'x', b'}']).unwrap();
    let reply = read_frame(&mut raw, 1 << 20).unwrap().unwrap();
    assert_eq!(reply["r"].as_str(), Some("ERR"));
    // an oversize prefix is refused and the connection closed
    raw.write_all(&[0x7f, 0xff, 0xff, 0xff]).unwrap();
    let reply = read_frame(&mut raw, 1 << 20).unwrap().unwrap();
    assert_eq!(reply["r"].as_str(), Some("ERR"));
    let mut rest = Vec::new();
    let _ = raw.read_to_end(&mut rest);
    assert!(rest.is_empty());
    // truncated frame then hang-up
    let mut raw = TcpStream::connect(h.clerk_addr()).unwrap();
    raw.write_all(&[0, 0, 0, 50, b'{']).unwrap();
    drop(raw);
    let mut clerk = ReqClient::new(h.clerk_addr().to_string());
    assert_eq!(clerk.request(&ClerkRequest::Check.to_map()).unwrap()["r"].as_str(), Some("OK"));
}

#[test]
fn port_conflicts_fail_cleanly() {
    let config = init(&["hellocot"], 1);
    let _taken = std::net::TcpListener::bind(("127.0.0.1", config.ports.events_port)).unwrap();
    match controller::start(config.clone()) {
        Err(ControllerError::Bind { server, .. }) => assert_eq!(server, "events"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("started despite a taken port"),
    }
    // nothing from the failed attempt is left listening
    assert!(TcpStream::connect(("127.0.0.1", config.clerk_port)).is_err());
}

#[test]
fn init_without_packages_is_rejected() {
    let mut config = init(&["hellocot"], 1);
    let dir = tempfile::tempdir().unwrap();
    config.functions_root = dir.path().to_owned();
    assert!(matches!(controller::start(config), Err(ControllerError::Package { .. })));
}

#[test]
fn broker_facade_round_trip() {
    use gatefaas::broker::{Methods, RemoteBroker};
    let h = controller::start(init(&["echo"], 1)).unwrap();
    let remote = RemoteBroker::new(h.broker_addr().unwrap().to_string());
    remote
        .push_fer(&label("echo"), Fer::new("r1", value_map! { "k" => "v" }, ValueMap::new()).unwrap())
        .unwrap();
    assert_eq!(h.queued_fers(&label("echo")).unwrap(), 1);
    assert!(!remote.check_available(&label("echo")).unwrap());
    assert_eq!(remote.pop_ret(&label("echo")).unwrap(), None);
    let round = remote
        .autoscale(&AutoScaleDirective {
            clusters: BTreeMap::new(),
        })
        .unwrap();
    assert_eq!(round, h.current_round());
    assert!(remote.check_available(&label("nosuch")).is_err());
}
