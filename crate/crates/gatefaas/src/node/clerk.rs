use std::collections::BTreeMap;

use gatefaas_core::protocol::{expect_ok, ClerkRequest, ProtocolError};
use gatefaas_core::{FunctionLabel, FunctionPackage, GatePorts, PortsTable, Value, ValueMap};
use thiserror::Error;

use crate::wire::{ReqClient, WireError};

#[derive(Debug, Error)]
pub enum ClerkError {
    #[error("clerk unreachable: {0}")]
    Wire(#[from] WireError),
    #[error("clerk: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("clerk sent a malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },
}

/// Node-side client of the controller's clerk server.
#[derive(Debug)]
pub struct ClerkClient {
    client: ReqClient,
    source_requests: u64,
}

impl ClerkClient {
    pub fn new(addr: impl Into<String>) -> Self {
        ClerkClient {
            client: ReqClient::new(addr),
            source_requests: 0,
        }
    }

    pub fn addr(&self) -> &str {
        self.client.addr()
    }

    /// Source downloads issued by this client.
    pub fn source_requests(&self) -> u64 {
        self.source_requests
    }

    fn call(&mut self, request: ClerkRequest) -> Result<ValueMap, ClerkError> {
        let reply = self.client.request(&request.to_map())?;
        Ok(expect_ok(reply)?)
    }

    pub fn check(&mut self) -> Result<(), ClerkError> {
        self.call(ClerkRequest::Check).map(|_| ())
    }

    pub fn gate_ports(&mut self) -> Result<BTreeMap<FunctionLabel, GatePorts>, ClerkError> {
        let reply = self.call(ClerkRequest::GatePorts)?;
        let gates = reply
            .get("gates")
            .and_then(Value::as_map)
            .ok_or(ClerkError::Malformed {
                what: "gate ports table",
                detail: "missing `gates`".into(),
            })?;
        PortsTable::gates_from_map(gates).map_err(|e| ClerkError::Malformed {
            what: "gate ports table",
            detail: e.to_string(),
        })
    }

    /// Scaling ports per cluster plus the events port.
    pub fn scaling_ports(&mut self) -> Result<(BTreeMap<String, u16>, u16), ClerkError> {
        let reply = self.call(ClerkRequest::ScalingPorts)?;
        PortsTable::scaling_from_map(&reply).map_err(|e| ClerkError::Malformed {
            what: "scaling ports table",
            detail: e.to_string(),
        })
    }

    pub fn source(&mut self, label: &FunctionLabel) -> Result<FunctionPackage, ClerkError> {
        self.source_requests += 1;
        let reply = self.call(ClerkRequest::Source(label.clone()))?;
        let pkg = reply
            .get("package")
            .and_then(Value::as_map)
            .ok_or(ClerkError::Malformed {
                what: "function package",
                detail: "missing `package`".into(),
            })?;
        FunctionPackage::from_map(pkg).map_err(|e| ClerkError::Malformed {
            what: "function package",
            detail: e.to_string(),
        })
    }

    pub fn digest(&mut self, label: &FunctionLabel) -> Result<String, ClerkError> {
        let reply = self.call(ClerkRequest::Digest(label.clone()))?;
        reply
            .get("digest")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or(ClerkError::Malformed {
                what: "digest reply",
                detail: "missing `digest`".into(),
            })
    }
}
