//! Request and reply shapes for every conversation in the system.
//!
//! Requests carry their command under `"c"`. Controller replies carry a
//! result tag under `"r"` (`OK`, `ERR`, `NULL`, `STALE`); FEU replies use
//! the `stat`/`val` pair instead because they are passed straight into a
//! result.

use alloc::borrow::ToOwned;
use alloc::string::{String, ToString};

use thiserror::Error;

use crate::message::{
    AutoScaleDirective, Fer, FunctionLabel, InnerFer, MessageError, Ret, ScalingTable, Status,
};
use crate::scaling::Grant;
use crate::value::{Value, ValueMap};
use crate::value_map;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("request has no `c` command")]
    MissingCommand,
    #[error("unknown command `{0}`")]
    UnknownCommand(String),
    #[error(transparent)]
    Message(#[from] MessageError),
    #[error("peer replied with an error: {0}")]
    ErrorReply(String),
    #[error("unexpected reply: {0}")]
    Unexpected(String),
}

pub fn ok_reply(mut body: ValueMap) -> ValueMap {
    body.insert("r".into(), "OK".into());
    body
}

pub fn err_reply(message: impl Into<String>) -> ValueMap {
    value_map! { "r" => "ERR", "error" => message.into() }
}

fn tag(reply: &ValueMap) -> Option<&str> {
    reply.get("r").and_then(Value::as_str)
}

/// Turns an `ERR` (or untagged) reply into an error.
pub fn expect_ok(reply: ValueMap) -> Result<ValueMap, ProtocolError> {
    match tag(&reply) {
        Some("OK") => Ok(reply),
        Some("ERR") => Err(ProtocolError::ErrorReply(
            reply
                .get("error")
                .and_then(Value::as_str)
                .unwrap_or("unspecified")
                .to_owned(),
        )),
        _ => Err(ProtocolError::Unexpected(describe(&reply))),
    }
}

fn describe(map: &ValueMap) -> String {
    crate::codec::to_text(map).unwrap_or_else(|e| e.to_string())
}

fn command(request: &ValueMap) -> Result<&str, ProtocolError> {
    request
        .get("c")
        .and_then(Value::as_str)
        .ok_or(ProtocolError::MissingCommand)
}

fn label_field(request: &ValueMap) -> Result<FunctionLabel, ProtocolError> {
    let label = request
        .get("label")
        .and_then(Value::as_str)
        .ok_or(MessageError::MissingFields(alloc::vec!["label"]))?;
    Ok(FunctionLabel::new(label)?)
}

fn map_field(map: &ValueMap, field: &'static str) -> Result<ValueMap, ProtocolError> {
    match map.get(field) {
        Some(Value::Map(m)) => Ok(m.clone()),
        Some(_) => Err(MessageError::WrongType {
            field,
            expected: "map",
        }
        .into()),
        None => Err(MessageError::MissingFields(alloc::vec![field]).into()),
    }
}

fn round_field(map: &ValueMap) -> Option<u64> {
    map.get("round")
        .and_then(Value::as_i64)
        .and_then(|r| u64::try_from(r).ok())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClerkRequest {
    Check,
    GatePorts,
    ScalingPorts,
    Source(FunctionLabel),
    /// Content hash of a package, so nodes can validate their cache
    /// without downloading the source.
    Digest(FunctionLabel),
}

impl ClerkRequest {
    pub fn parse(request: &ValueMap) -> Result<Self, ProtocolError> {
        match command(request)? {
            "chk" => Ok(ClerkRequest::Check),
            "gate_ports" => Ok(ClerkRequest::GatePorts),
            "scaling_ports" => Ok(ClerkRequest::ScalingPorts),
            "source" => Ok(ClerkRequest::Source(label_field(request)?)),
            "digest" => Ok(ClerkRequest::Digest(label_field(request)?)),
            other => Err(ProtocolError::UnknownCommand(other.to_owned())),
        }
    }

    pub fn to_map(&self) -> ValueMap {
        match self {
            ClerkRequest::Check => value_map! { "c" => "chk" },
            ClerkRequest::GatePorts => value_map! { "c" => "gate_ports" },
            ClerkRequest::ScalingPorts => value_map! { "c" => "scaling_ports" },
            ClerkRequest::Source(l) => value_map! { "c" => "source", "label" => l.clone() },
            ClerkRequest::Digest(l) => value_map! { "c" => "digest", "label" => l.clone() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScalingRequest {
    pub cluster: String,
    pub round: Option<u64>,
}

impl ScalingRequest {
    pub fn parse(request: &ValueMap) -> Result<Self, ProtocolError> {
        match command(request)? {
            "scale_req" => {
                let cluster = request
                    .get("cluster")
                    .and_then(Value::as_str)
                    .ok_or(MessageError::MissingFields(alloc::vec!["cluster"]))?;
                Ok(ScalingRequest {
                    cluster: cluster.to_owned(),
                    round: round_field(request),
                })
            }
            other => Err(ProtocolError::UnknownCommand(other.to_owned())),
        }
    }

    pub fn to_map(&self) -> ValueMap {
        let mut m = value_map! { "c" => "scale_req", "cluster" => self.cluster.clone() };
        if let Some(r) = self.round {
            m.insert("round".into(), Value::from(r));
        }
        m
    }
}

pub fn grant_reply(grant: &Grant) -> ValueMap {
    match grant {
        Grant::Table { round, table } => ok_reply(value_map! {
            "round" => *round,
            "table" => table.to_value(),
        }),
        Grant::Stale { current } => value_map! { "r" => "STALE", "round" => *current },
    }
}

pub fn parse_grant(reply: ValueMap) -> Result<Grant, ProtocolError> {
    if tag(&reply) == Some("STALE") {
        return Ok(Grant::Stale {
            current: round_field(&reply).unwrap_or(0),
        });
    }
    let reply = expect_ok(reply)?;
    let table = ScalingTable::from_value(reply.get("table").unwrap_or(&Value::Null))?;
    Ok(Grant::Table {
        round: round_field(&reply).unwrap_or(0),
        table,
    })
}

/// Published on the events channel when a new round starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaleEvent {
    pub round: u64,
}

impl ScaleEvent {
    pub fn to_map(&self) -> ValueMap {
        value_map! { "e" => "scale", "round" => self.round }
    }

    pub fn parse(event: &ValueMap) -> Result<Self, ProtocolError> {
        match event.get("e").and_then(Value::as_str) {
            Some("scale") => Ok(ScaleEvent {
                round: round_field(event).ok_or(MessageError::MissingFields(alloc::vec!["round"]))?,
            }),
            Some(other) => Err(ProtocolError::UnknownCommand(other.to_owned())),
            None => Err(ProtocolError::MissingCommand),
        }
    }
}

/// The agent's "give me work" request to a push server.
pub fn fer_request() -> ValueMap {
    value_map! { "c" => "fer_req" }
}

pub fn is_fer_request(request: &ValueMap) -> Result<(), ProtocolError> {
    match command(request)? {
        "fer_req" => Ok(()),
        other => Err(ProtocolError::UnknownCommand(other.to_owned())),
    }
}

pub fn fer_reply(fer: Option<&Fer>) -> ValueMap {
    match fer {
        Some(f) => ok_reply(value_map! { "fer" => f.to_map() }),
        None => value_map! { "r" => "NULL" },
    }
}

pub fn parse_fer_reply(reply: ValueMap) -> Result<Option<Fer>, ProtocolError> {
    if tag(&reply) == Some("NULL") {
        return Ok(None);
    }
    let reply = expect_ok(reply)?;
    Ok(Some(Fer::from_map(map_field(&reply, "fer")?)?))
}

/// Primitives understood by an FEU's inner server.
#[derive(Debug, Clone, PartialEq)]
pub enum FeuRequest {
    Exe(InnerFer),
    Fin,
}

impl FeuRequest {
    pub fn parse(request: &ValueMap) -> Result<Self, ProtocolError> {
        match command(request)? {
            "EXE" => Ok(FeuRequest::Exe(InnerFer::from_map(map_field(request, "fer")?)?)),
            "FIN" => Ok(FeuRequest::Fin),
            other => Err(ProtocolError::UnknownCommand(other.to_owned())),
        }
    }

    pub fn to_map(&self) -> ValueMap {
        match self {
            FeuRequest::Exe(inner) => value_map! { "c" => "EXE", "fer" => inner.to_map() },
            FeuRequest::Fin => value_map! { "c" => "FIN" },
        }
    }
}

/// `{"stat":..,"val":{..}}`; the FIN acknowledgement has no `val`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeuReply {
    pub stat: Status,
    pub val: Option<ValueMap>,
}

impl FeuReply {
    pub fn ok(val: ValueMap) -> Self {
        FeuReply {
            stat: Status::Ok,
            val: Some(val),
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        FeuReply {
            stat: Status::Error,
            val: Some(value_map! { "error" => message.into() }),
        }
    }

    pub fn fin_ack() -> Self {
        FeuReply {
            stat: Status::Ok,
            val: None,
        }
    }

    pub fn to_map(&self) -> ValueMap {
        let mut m = value_map! { "stat" => self.stat.as_str() };
        if let Some(val) = &self.val {
            m.insert("val".into(), Value::Map(val.clone()));
        }
        m
    }

    pub fn parse(reply: &ValueMap) -> Result<Self, ProtocolError> {
        let stat = reply
            .get("stat")
            .and_then(Value::as_str)
            .ok_or(MessageError::MissingFields(alloc::vec!["stat"]))?;
        let stat = Status::parse(stat)?;
        let val = match reply.get("val") {
            None => None,
            Some(_) => Some(map_field(reply, "val")?),
        };
        Ok(FeuReply { stat, val })
    }
}

/// Methods-space calls carried over the remote broker facade.
#[derive(Debug, Clone, PartialEq)]
pub enum BrokerRequest {
    PushFer { label: FunctionLabel, fer: Fer },
    PopRet { label: FunctionLabel },
    CheckAvailable { label: FunctionLabel },
    Autoscale(AutoScaleDirective),
}

impl BrokerRequest {
    pub fn parse(request: &ValueMap) -> Result<Self, ProtocolError> {
        match command(request)? {
            "push_fer" => Ok(BrokerRequest::PushFer {
                label: label_field(request)?,
                fer: Fer::from_map(map_field(request, "fer")?)?,
            }),
            "pop_ret" => Ok(BrokerRequest::PopRet {
                label: label_field(request)?,
            }),
            "check" => Ok(BrokerRequest::CheckAvailable {
                label: label_field(request)?,
            }),
            "autoscale" => Ok(BrokerRequest::Autoscale(AutoScaleDirective::from_map(
                &map_field(request, "directive")?,
            )?)),
            other => Err(ProtocolError::UnknownCommand(other.to_owned())),
        }
    }

    pub fn to_map(&self) -> ValueMap {
        match self {
            BrokerRequest::PushFer { label, fer } => {
                value_map! { "c" => "push_fer", "label" => label.clone(), "fer" => fer.to_map() }
            }
            BrokerRequest::PopRet { label } => value_map! { "c" => "pop_ret", "label" => label.clone() },
            BrokerRequest::CheckAvailable { label } => {
                value_map! { "c" => "check", "label" => label.clone() }
            }
            BrokerRequest::Autoscale(d) => value_map! { "c" => "autoscale", "directive" => d.to_map() },
        }
    }
}

pub fn ret_reply(ret: Option<&Ret>) -> ValueMap {
    ok_reply(value_map! { "ret" => ret.map(Ret::to_map) })
}

pub fn parse_ret_reply(reply: ValueMap) -> Result<Option<Ret>, ProtocolError> {
    let mut reply = expect_ok(reply)?;
    match reply.remove("ret") {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Map(m)) => Ok(Some(Ret::from_map(m)?)),
        Some(_) => Err(ProtocolError::Unexpected("`ret` is not a map".into())),
    }
}
