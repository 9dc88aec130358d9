//! Processes and sockets around `gatefaas-core`: the controller with its
//! clerk, scaling, events and gate servers; the node runtime that deploys
//! functions and drives execution units; the reference execution-unit
//! runtime; and the broker SDK plus benchmark harness.

pub mod broker;
pub mod controller;
pub mod feu;
pub mod net;
pub mod node;
pub mod wire;

pub use gatefaas_core as core;
