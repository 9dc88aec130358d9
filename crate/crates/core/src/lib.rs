//! Allocation-only core of the gatefaas function-as-a-service platform.
//!
//! Everything here is free of IO: the value model, the length-prefixed
//! canonical JSON frame codec, the request/result/scaling message types,
//! the per-function gate queues and the scaling-round bookkeeping used by
//! the controller. The `gatefaas` crate puts sockets and processes around
//! these pieces.

#![no_std]

extern crate alloc;

pub mod codec;
pub mod digest;
pub mod gate;
pub mod message;
pub mod protocol;
pub mod scaling;
pub mod value;

pub use codec::{decode_frame, encode_frame, CodecError, DEFAULT_MAX_FRAME, PREFIX_LEN};
pub use gate::Gate;
pub use message::{
    attach_id, strip_id, AutoScaleDirective, Fer, FunctionLabel, FunctionPackage, GatePorts,
    InnerFer, MessageError, PortsTable, Ret, ScalingEntry, ScalingTable, Status,
};
pub use scaling::{Autoscaler, ClusterState, Grant, ScalingError};
pub use value::{Value, ValueMap};

#[doc(hidden)]
pub mod __private {
    pub use alloc::string::String;
}
