//! Broker-side harness: the Methods space (in-process or over the
//! controller's broker facade), batch submission and collection, the
//! desk cluster and the two reference scenarios.

pub mod bench;
pub mod dft;
pub mod scenario;

use std::sync::Mutex;

use gatefaas_core::protocol::{expect_ok, parse_ret_reply, BrokerRequest};
use gatefaas_core::{AutoScaleDirective, Fer, FunctionLabel, Ret, Value};
use thiserror::Error;

use crate::controller::{Controller, ControllerError};
use crate::wire::{ReqClient, WireError};

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("broker facade unreachable: {0}")]
    Wire(#[from] WireError),
    #[error("broker facade: {0}")]
    Remote(String),
}

/// The controller operations a broker uses.
pub trait Methods: Send + Sync {
    fn autoscale(&self, directive: &AutoScaleDirective) -> Result<u64, BrokerError>;
    fn push_fer(&self, label: &FunctionLabel, fer: Fer) -> Result<(), BrokerError>;
    fn pop_ret(&self, label: &FunctionLabel) -> Result<Option<Ret>, BrokerError>;
    fn check_available(&self, label: &FunctionLabel) -> Result<bool, BrokerError>;
}

impl Methods for Controller {
    fn autoscale(&self, directive: &AutoScaleDirective) -> Result<u64, BrokerError> {
        Ok(Controller::autoscale(self, directive)?)
    }

    fn push_fer(&self, label: &FunctionLabel, fer: Fer) -> Result<(), BrokerError> {
        Ok(Controller::push_fer(self, label, fer)?)
    }

    fn pop_ret(&self, label: &FunctionLabel) -> Result<Option<Ret>, BrokerError> {
        Ok(Controller::pop_ret(self, label)?)
    }

    fn check_available(&self, label: &FunctionLabel) -> Result<bool, BrokerError> {
        Ok(Controller::check_available(self, label)?)
    }
}

/// Methods space reached through the controller's broker port.
#[derive(Debug)]
pub struct RemoteBroker {
    client: Mutex<ReqClient>,
}

impl RemoteBroker {
    pub fn new(addr: impl Into<String>) -> Self {
        RemoteBroker {
            client: Mutex::new(ReqClient::new(addr)),
        }
    }

    fn call(&self, request: BrokerRequest) -> Result<gatefaas_core::ValueMap, BrokerError> {
        let reply = self.client.lock().expect("broker client").request(&request.to_map())?;
        expect_ok(reply).map_err(|e| BrokerError::Remote(e.to_string()))
    }
}

impl Methods for RemoteBroker {
    fn autoscale(&self, directive: &AutoScaleDirective) -> Result<u64, BrokerError> {
        let reply = self.call(BrokerRequest::Autoscale(directive.clone()))?;
        reply
            .get("round")
            .and_then(Value::as_i64)
            .map(|r| r as u64)
            .ok_or_else(|| BrokerError::Remote("autoscale reply without `round`".into()))
    }

    fn push_fer(&self, label: &FunctionLabel, fer: Fer) -> Result<(), BrokerError> {
        self.call(BrokerRequest::PushFer {
            label: label.clone(),
            fer,
        })
        .map(|_| ())
    }

    fn pop_ret(&self, label: &FunctionLabel) -> Result<Option<Ret>, BrokerError> {
        let reply = self
            .client
            .lock()
            .expect("broker client")
            .request(&BrokerRequest::PopRet { label: label.clone() }.to_map())?;
        parse_ret_reply(reply).map_err(|e| BrokerError::Remote(e.to_string()))
    }

    fn check_available(&self, label: &FunctionLabel) -> Result<bool, BrokerError> {
        let reply = self.call(BrokerRequest::CheckAvailable { label: label.clone() })?;
        reply
            .get("available")
            .and_then(Value::as_bool)
            .ok_or_else(|| BrokerError::Remote("check reply without `available`".into()))
    }
}
