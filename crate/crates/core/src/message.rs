//! Wire-visible message types: function labels, execution requests and
//! results, scaling tables, the ports table and function packages.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::value::{Value, ValueMap};
use crate::value_map;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MessageError {
    #[error("missing required field(s): {}", .0.join(", "))]
    MissingFields(Vec<&'static str>),
    #[error("field `{field}` has the wrong type: expected {expected}")]
    WrongType {
        field: &'static str,
        expected: &'static str,
    },
    #[error("invalid function label `{0}`")]
    InvalidLabel(String),
    #[error("id must be non-empty")]
    EmptyId,
    #[error("unknown status `{0}`")]
    UnknownStatus(String),
    #[error("an ERROR result must carry an `error` message in its value map")]
    MissingErrorText,
    #[error("invalid scaling entry for `{label}`: {reason}")]
    InvalidScalingEntry { label: String, reason: &'static str },
    #[error("port {port} is assigned more than once")]
    DuplicatePort { port: u16 },
    #[error("port {port} is outside the allowed range {min}..={max}")]
    PortOutOfRange { port: u16, min: u16, max: u16 },
    #[error("function source must be non-empty")]
    EmptySource,
}

/// Name of a function: `[a-z][a-z0-9_]{0,63}`. Doubles as the package
/// directory name and the image cache key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FunctionLabel(String);

impl FunctionLabel {
    pub fn new(label: impl Into<String>) -> Result<Self, MessageError> {
        let label = label.into();
        let mut bytes = label.bytes();
        let valid = matches!(bytes.next(), Some(b'a'..=b'z'))
            && label.len() <= 64
            && bytes.all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'_'));
        if valid {
            Ok(FunctionLabel(label))
        } else {
            Err(MessageError::InvalidLabel(label))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FunctionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl core::str::FromStr for FunctionLabel {
    type Err = MessageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FunctionLabel::new(s)
    }
}

impl From<FunctionLabel> for Value {
    fn from(l: FunctionLabel) -> Self {
        Value::Str(l.0)
    }
}

fn take_map(map: &mut ValueMap, field: &'static str) -> Result<ValueMap, MessageError> {
    match map.remove(field) {
        Some(Value::Map(m)) => Ok(m),
        _ => Err(MessageError::WrongType {
            field,
            expected: "map",
        }),
    }
}

fn missing(map: &ValueMap, fields: &[&'static str]) -> Result<(), MessageError> {
    let absent: Vec<_> = fields
        .iter()
        .copied()
        .filter(|f| !map.contains_key(*f))
        .collect();
    if absent.is_empty() {
        Ok(())
    } else {
        Err(MessageError::MissingFields(absent))
    }
}

/// Function execution request as submitted by the broker.
#[derive(Debug, Clone, PartialEq)]
pub struct Fer {
    pub id: String,
    pub x: ValueMap,
    pub m: ValueMap,
}

impl Fer {
    pub fn new(id: impl Into<String>, x: ValueMap, m: ValueMap) -> Result<Self, MessageError> {
        let id = id.into();
        if id.is_empty() {
            return Err(MessageError::EmptyId);
        }
        Ok(Fer { id, x, m })
    }

    pub fn from_map(mut map: ValueMap) -> Result<Self, MessageError> {
        missing(&map, &["id", "x", "m"])?;
        let id = match map.remove("id") {
            Some(Value::Str(s)) => s,
            _ => {
                return Err(MessageError::WrongType {
                    field: "id",
                    expected: "string",
                })
            }
        };
        let x = take_map(&mut map, "x")?;
        let m = take_map(&mut map, "m")?;
        Fer::new(id, x, m)
    }

    pub fn to_map(&self) -> ValueMap {
        value_map! {
            "id" => self.id.clone(),
            "x" => self.x.clone(),
            "m" => self.m.clone(),
        }
    }

    pub fn into_parts(self) -> (String, InnerFer) {
        (self.id, InnerFer { x: self.x, m: self.m })
    }
}

/// What a function sees: the request minus its id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InnerFer {
    pub x: ValueMap,
    pub m: ValueMap,
}

impl InnerFer {
    pub fn from_map(mut map: ValueMap) -> Result<Self, MessageError> {
        missing(&map, &["x", "m"])?;
        Ok(InnerFer {
            x: take_map(&mut map, "x")?,
            m: take_map(&mut map, "m")?,
        })
    }

    pub fn to_map(&self) -> ValueMap {
        value_map! { "x" => self.x.clone(), "m" => self.m.clone() }
    }
}

/// Splits a raw request into its id and the part handed to the function.
pub fn strip_id(raw: ValueMap) -> Result<(String, InnerFer), MessageError> {
    Fer::from_map(raw).map(Fer::into_parts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Error,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "OK",
            Status::Error => "ERROR",
        }
    }

    pub fn parse(s: &str) -> Result<Self, MessageError> {
        match s {
            "OK" => Ok(Status::Ok),
            "ERROR" => Ok(Status::Error),
            other => Err(MessageError::UnknownStatus(other.to_owned())),
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Execution result. On the wire: `{"id":..,"ret":{"stat":..,"val":{..}}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ret {
    pub id: String,
    pub stat: Status,
    pub val: ValueMap,
}

impl Ret {
    /// Convenience constructor for an ERROR result carrying `message`.
    pub fn error(id: impl Into<String>, message: impl Into<String>) -> Result<Self, MessageError> {
        attach_id(
            id,
            Status::Error,
            value_map! { "error" => message.into() },
        )
    }

    pub fn is_ok(&self) -> bool {
        self.stat == Status::Ok
    }

    pub fn error_text(&self) -> Option<&str> {
        self.val.get("error").and_then(Value::as_str)
    }

    pub fn from_map(mut map: ValueMap) -> Result<Self, MessageError> {
        missing(&map, &["id", "ret"])?;
        let id = match map.remove("id") {
            Some(Value::Str(s)) => s,
            _ => {
                return Err(MessageError::WrongType {
                    field: "id",
                    expected: "string",
                })
            }
        };
        let mut ret = take_map(&mut map, "ret")?;
        missing(&ret, &["stat", "val"])?;
        let stat = match ret.remove("stat") {
            Some(Value::Str(s)) => Status::parse(&s)?,
            _ => {
                return Err(MessageError::WrongType {
                    field: "stat",
                    expected: "string",
                })
            }
        };
        let val = take_map(&mut ret, "val")?;
        attach_id(id, stat, val)
    }

    pub fn to_map(&self) -> ValueMap {
        value_map! {
            "id" => self.id.clone(),
            "ret" => value_map! {
                "stat" => self.stat.as_str(),
                "val" => self.val.clone(),
            },
        }
    }
}

/// Re-attaches the request id to a function's outcome.
pub fn attach_id(id: impl Into<String>, stat: Status, val: ValueMap) -> Result<Ret, MessageError> {
    let id = id.into();
    if id.is_empty() {
        return Err(MessageError::EmptyId);
    }
    if stat == Status::Error && !val.contains_key("error") {
        return Err(MessageError::MissingErrorText);
    }
    Ok(Ret { id, stat, val })
}

/// One allocation: `count` units of `label`, each with `cpu_portion` of a CPU.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingEntry {
    pub label: FunctionLabel,
    pub count: u32,
    pub cpu_portion: f64,
}

impl ScalingEntry {
    pub fn new(label: FunctionLabel, count: u32, cpu_portion: f64) -> Result<Self, MessageError> {
        let reason = if count == 0 {
            Some("instance count must be at least 1")
        } else if !(cpu_portion > 0.0 && cpu_portion <= 1.0) {
            Some("cpu portion must lie in (0, 1]")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(MessageError::InvalidScalingEntry {
                label: label.0,
                reason,
            }),
            None => Ok(ScalingEntry {
                label,
                count,
                cpu_portion,
            }),
        }
    }

    fn from_value(v: &Value) -> Result<Self, MessageError> {
        let map = v.as_map().ok_or(MessageError::WrongType {
            field: "table entry",
            expected: "map",
        })?;
        missing(map, &["label", "n", "p"])?;
        let label = map["label"].as_str().ok_or(MessageError::WrongType {
            field: "label",
            expected: "string",
        })?;
        let label = FunctionLabel::new(label)?;
        let count = map["n"]
            .as_i64()
            .and_then(|n| u32::try_from(n).ok())
            .ok_or(MessageError::WrongType {
                field: "n",
                expected: "non-negative integer",
            })?;
        let p = map["p"].as_f64().ok_or(MessageError::WrongType {
            field: "p",
            expected: "number",
        })?;
        ScalingEntry::new(label, count, p)
    }

    fn to_value(&self) -> Value {
        Value::Map(value_map! {
            "label" => self.label.clone(),
            "n" => self.count,
            "p" => self.cpu_portion,
        })
    }
}

/// Ordered list of allocations for one node. Labels may repeat with
/// different CPU portions. The empty table orders a scale-out.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScalingTable {
    pub entries: Vec<ScalingEntry>,
}

impl ScalingTable {
    pub fn null() -> Self {
        ScalingTable::default()
    }

    pub fn new(entries: Vec<ScalingEntry>) -> Self {
        ScalingTable { entries }
    }

    pub fn is_null(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of units the table asks for.
    pub fn unit_count(&self) -> usize {
        self.entries.iter().map(|e| e.count as usize).sum()
    }

    /// Units per label, summed over repeated entries.
    pub fn units_by_label(&self) -> BTreeMap<FunctionLabel, usize> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.label.clone()).or_insert(0) += e.count as usize;
        }
        out
    }

    /// Sum of count * portion; may exceed 1.
    pub fn cpu_demand(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| f64::from(e.count) * e.cpu_portion)
            .sum()
    }

    pub fn labels(&self) -> BTreeSet<FunctionLabel> {
        self.entries.iter().map(|e| e.label.clone()).collect()
    }

    pub fn from_value(v: &Value) -> Result<Self, MessageError> {
        match v {
            Value::Null => Ok(ScalingTable::null()),
            Value::List(items) => items
                .iter()
                .map(ScalingEntry::from_value)
                .collect::<Result<Vec<_>, _>>()
                .map(ScalingTable::new),
            _ => Err(MessageError::WrongType {
                field: "table",
                expected: "list",
            }),
        }
    }

    pub fn to_value(&self) -> Value {
        Value::List(self.entries.iter().map(ScalingEntry::to_value).collect())
    }
}

/// Cluster-level scaling order: the tables each cluster hands out.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AutoScaleDirective {
    pub clusters: BTreeMap<String, Vec<ScalingTable>>,
}

impl AutoScaleDirective {
    pub fn from_map(map: &ValueMap) -> Result<Self, MessageError> {
        let mut clusters = BTreeMap::new();
        for (cluster, tables) in map {
            let tables = tables.as_list().ok_or(MessageError::WrongType {
                field: "cluster tables",
                expected: "list",
            })?;
            let tables = tables
                .iter()
                .map(ScalingTable::from_value)
                .collect::<Result<Vec<_>, _>>()?;
            clusters.insert(cluster.clone(), tables);
        }
        Ok(AutoScaleDirective { clusters })
    }

    pub fn to_map(&self) -> ValueMap {
        self.clusters
            .iter()
            .map(|(k, tables)| {
                (
                    k.clone(),
                    Value::List(tables.iter().map(ScalingTable::to_value).collect()),
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatePorts {
    pub push: u16,
    pub pull: u16,
}

/// Where every controller server listens. Nodes cache this after pairing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PortsTable {
    pub gates: BTreeMap<FunctionLabel, GatePorts>,
    pub scaling: BTreeMap<String, u16>,
    pub events_port: u16,
}

pub const DEFAULT_PORT_RANGE: (u16, u16) = (1024, 65535);

impl PortsTable {
    /// The ports in the table in a fixed order (gates, scaling, events).
    pub fn all_ports(&self) -> Vec<u16> {
        let mut ports: Vec<u16> = self
            .gates
            .values()
            .flat_map(|g| [g.push, g.pull])
            .collect();
        ports.extend(self.scaling.values().copied());
        ports.push(self.events_port);
        ports
    }

    /// Checks that every port, plus any `extra` ones, is distinct and in range.
    pub fn validate(&self, range: (u16, u16), extra: &[u16]) -> Result<(), MessageError> {
        let mut seen = BTreeSet::new();
        for port in self.all_ports().into_iter().chain(extra.iter().copied()) {
            if port < range.0 || port > range.1 {
                return Err(MessageError::PortOutOfRange {
                    port,
                    min: range.0,
                    max: range.1,
                });
            }
            if !seen.insert(port) {
                return Err(MessageError::DuplicatePort { port });
            }
        }
        Ok(())
    }

    /// `{"hellocot":{"pull":..,"push":..}, ..}`
    pub fn gates_to_map(&self) -> ValueMap {
        self.gates
            .iter()
            .map(|(label, g)| {
                (
                    label.as_str().to_string(),
                    Value::Map(value_map! { "push" => g.push, "pull" => g.pull }),
                )
            })
            .collect()
    }

    /// `{"clusters":{"c1":port,..},"events":port}`
    pub fn scaling_to_map(&self) -> ValueMap {
        let clusters: ValueMap = self
            .scaling
            .iter()
            .map(|(k, p)| (k.clone(), Value::from(*p)))
            .collect();
        value_map! { "clusters" => clusters, "events" => self.events_port }
    }

    pub fn gates_from_map(map: &ValueMap) -> Result<BTreeMap<FunctionLabel, GatePorts>, MessageError> {
        let mut gates = BTreeMap::new();
        for (label, v) in map {
            let g = v.as_map().ok_or(MessageError::WrongType {
                field: "gate",
                expected: "map",
            })?;
            missing(g, &["push", "pull"])?;
            gates.insert(
                FunctionLabel::new(label.as_str())?,
                GatePorts {
                    push: port_of(&g["push"], "push")?,
                    pull: port_of(&g["pull"], "pull")?,
                },
            );
        }
        Ok(gates)
    }

    pub fn scaling_from_map(map: &ValueMap) -> Result<(BTreeMap<String, u16>, u16), MessageError> {
        missing(map, &["clusters", "events"])?;
        let clusters = map["clusters"].as_map().ok_or(MessageError::WrongType {
            field: "clusters",
            expected: "map",
        })?;
        let scaling = clusters
            .iter()
            .map(|(k, v)| Ok((k.clone(), port_of(v, "scaling port")?)))
            .collect::<Result<BTreeMap<_, _>, MessageError>>()?;
        Ok((scaling, port_of(&map["events"], "events")?))
    }

    pub fn to_map(&self) -> ValueMap {
        let mut m = self.scaling_to_map();
        m.insert("gates".into(), Value::Map(self.gates_to_map()));
        m
    }

    pub fn from_map(map: &ValueMap) -> Result<Self, MessageError> {
        missing(map, &["gates"])?;
        let gates = map["gates"].as_map().ok_or(MessageError::WrongType {
            field: "gates",
            expected: "map",
        })?;
        let (scaling, events_port) = PortsTable::scaling_from_map(map)?;
        Ok(PortsTable {
            gates: PortsTable::gates_from_map(gates)?,
            scaling,
            events_port,
        })
    }
}

fn port_of(v: &Value, field: &'static str) -> Result<u16, MessageError> {
    v.as_i64()
        .and_then(|p| u16::try_from(p).ok())
        .ok_or(MessageError::WrongType {
            field,
            expected: "TCP port",
        })
}

/// A function as stored in the functions database.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionPackage {
    pub label: FunctionLabel,
    pub source: Vec<u8>,
    pub requirements: Vec<u8>,
}

impl FunctionPackage {
    pub fn new(
        label: FunctionLabel,
        source: Vec<u8>,
        requirements: Vec<u8>,
    ) -> Result<Self, MessageError> {
        if source.is_empty() {
            return Err(MessageError::EmptySource);
        }
        Ok(FunctionPackage {
            label,
            source,
            requirements,
        })
    }

    pub fn digest(&self) -> String {
        crate::digest::package_digest(&self.source, &self.requirements)
    }

    /// Text form used by the clerk. Non-UTF-8 bytes are replaced.
    pub fn to_map(&self) -> ValueMap {
        value_map! {
            "label" => self.label.clone(),
            "source" => String::from_utf8_lossy(&self.source).into_owned(),
            "requirements" => String::from_utf8_lossy(&self.requirements).into_owned(),
        }
    }

    pub fn from_map(map: &ValueMap) -> Result<Self, MessageError> {
        missing(map, &["label", "source", "requirements"])?;
        let text = |field: &'static str| {
            map[field].as_str().ok_or(MessageError::WrongType {
                field,
                expected: "string",
            })
        };
        FunctionPackage::new(
            FunctionLabel::new(text("label")?)?,
            text("source")?.as_bytes().to_vec(),
            text("requirements")?.as_bytes().to_vec(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn label(s: &str) -> FunctionLabel {
        FunctionLabel::new(s).unwrap()
    }

    #[test]
    fn label_grammar() {
        for ok in ["a", "hellocot", "fft_256", "x9"] {
            assert!(FunctionLabel::new(ok).is_ok(), "{ok}");
        }
        let long = "a".repeat(65);
        for bad in ["", "9a", "Hello", "a-b", "_a", long.as_str()] {
            assert!(FunctionLabel::new(bad).is_err(), "{bad}");
        }
        assert!(FunctionLabel::new("a".repeat(64)).is_ok());
    }

    #[test]
    fn strip_id_partitions_fields() {
        let raw = value_map! { "id" => "7", "x" => ValueMap::new(), "m" => ValueMap::new() };
        let (id, inner) = strip_id(raw).unwrap();
        assert_eq!(id, "7");
        assert_eq!(inner, InnerFer::default());

        let raw = value_map! {
            "id" => "a",
            "x" => value_map! { "k" => 1 },
            "m" => value_map! { "u" => "alice" },
        };
        let (id, inner) = strip_id(raw).unwrap();
        assert_eq!(id, "a");
        assert_eq!(
            inner.to_map(),
            value_map! { "x" => value_map! { "k" => 1 }, "m" => value_map! { "u" => "alice" } }
        );
    }

    #[test]
    fn strip_id_lists_missing_keys() {
        let err = strip_id(value_map! { "x" => ValueMap::new() }).unwrap_err();
        assert_eq!(err, MessageError::MissingFields(vec!["id", "m"]));
        assert!(err.to_string().contains("id, m"));
    }

    #[test]
    fn strip_id_rejects_empty_id_and_non_map_inputs() {
        let raw = value_map! { "id" => "", "x" => ValueMap::new(), "m" => ValueMap::new() };
        assert_eq!(strip_id(raw), Err(MessageError::EmptyId));
        let raw = value_map! { "id" => "1", "x" => 3, "m" => ValueMap::new() };
        assert!(matches!(strip_id(raw), Err(MessageError::WrongType { field: "x", .. })));
    }

    #[test]
    fn attach_id_builds_hellocot_ret() {
        let ret = attach_id(
            "1",
            Status::Ok,
            value_map! { "ret" => "Hello Cloud of Things!" },
        )
        .unwrap();
        let text = crate::codec::to_text(&ret.to_map()).unwrap();
        assert_eq!(
            text,
            r#"{"id":"1","ret":{"stat":"OK","val":{"ret":"Hello Cloud of Things!"}}}"#
        );
        assert_eq!(Ret::from_map(ret.to_map()).unwrap(), ret);
    }

    #[test]
    fn attach_id_error_shape_and_negative_cases() {
        let ret = attach_id("9", Status::Error, value_map! { "error" => "boom" }).unwrap();
        assert_eq!(ret.stat, Status::Error);
        assert_eq!(ret.error_text(), Some("boom"));
        assert_eq!(attach_id("", Status::Ok, ValueMap::new()), Err(MessageError::EmptyId));
        assert_eq!(
            attach_id("9", Status::Error, ValueMap::new()),
            Err(MessageError::MissingErrorText)
        );
    }

    #[test]
    fn scaling_entry_validation() {
        assert!(ScalingEntry::new(label("echo"), 0, 0.1).is_err());
        assert!(ScalingEntry::new(label("echo"), 1, 0.0).is_err());
        assert!(ScalingEntry::new(label("echo"), 1, 1.5).is_err());
        assert!(ScalingEntry::new(label("echo"), 1, f64::NAN).is_err());
        assert!(ScalingEntry::new(label("echo"), 1, 1.0).is_ok());
        let bad = Value::List(vec![Value::Map(value_map! { "label" => "", "n" => 1, "p" => 0.5 })]);
        assert!(ScalingTable::from_value(&bad).is_err());
    }

    #[test]
    fn repeated_labels_survive_the_wire() {
        let table = ScalingTable::new(vec![
            ScalingEntry::new(label("hellocot"), 1, 0.1).unwrap(),
            ScalingEntry::new(label("echo"), 2, 0.1).unwrap(),
            ScalingEntry::new(label("echo"), 3, 0.2).unwrap(),
        ]);
        let back = ScalingTable::from_value(&table.to_value()).unwrap();
        assert_eq!(back, table);
        assert_eq!(table.unit_count(), 6);
        let by_label = table.units_by_label();
        assert_eq!(by_label[&label("echo")], 5);
        assert_eq!(by_label[&label("hellocot")], 1);
        assert!((table.cpu_demand() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn null_table_forms() {
        assert!(ScalingTable::from_value(&Value::Null).unwrap().is_null());
        assert!(ScalingTable::from_value(&Value::List(vec![])).unwrap().is_null());
    }

    #[test]
    fn ports_table_checks_distinct_ports() {
        let mut ports = PortsTable::default();
        ports
            .gates
            .insert(label("a"), GatePorts { push: 5000, pull: 5001 });
        ports
            .gates
            .insert(label("b"), GatePorts { push: 5000, pull: 5003 });
        ports.scaling.insert("c1".into(), 5004);
        ports.events_port = 5005;
        assert_eq!(
            ports.validate(DEFAULT_PORT_RANGE, &[]),
            Err(MessageError::DuplicatePort { port: 5000 })
        );
        ports.gates.get_mut(&label("b")).unwrap().push = 5002;
        assert!(ports.validate(DEFAULT_PORT_RANGE, &[]).is_ok());
        assert!(ports.validate(DEFAULT_PORT_RANGE, &[5005]).is_err());
        assert!(ports.validate((6000, 7000), &[]).is_err());
        assert_eq!(PortsTable::from_map(&ports.to_map()).unwrap(), ports);
    }

    #[test]
    fn scaling_ports_require_events_port() {
        let m = value_map! { "clusters" => value_map! { "c1" => 5000 } };
        assert_eq!(
            PortsTable::scaling_from_map(&m),
            Err(MessageError::MissingFields(vec!["events"]))
        );
    }

    #[test]
    fn package_requires_source() {
        assert_eq!(
            FunctionPackage::new(label("a"), vec![], vec![]),
            Err(MessageError::EmptySource)
        );
        let p = FunctionPackage::new(label("a"), b"def f(FER): pass".to_vec(), vec![]).unwrap();
        assert_eq!(FunctionPackage::from_map(&p.to_map()).unwrap(), p);
    }

    #[test]
    fn directive_round_trip() {
        let mut d = AutoScaleDirective::default();
        d.clusters.insert(
            "c1".into(),
            vec![ScalingTable::new(vec![ScalingEntry::new(label("hellocot"), 1, 0.1).unwrap()])],
        );
        d.clusters.insert("c2".into(), vec![]);
        assert_eq!(AutoScaleDirective::from_map(&d.to_map()).unwrap(), d);
    }
}
