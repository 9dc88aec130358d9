//! Per-function gate state: the FER queue drained by the push server and
//! the RET queue filled by the pull server.

use alloc::collections::VecDeque;

use crate::message::{Fer, FunctionLabel, Ret};

#[derive(Debug)]
pub struct Gate {
    label: FunctionLabel,
    fers: VecDeque<Fer>,
    rets: VecDeque<Ret>,
}

impl Gate {
    pub fn new(label: FunctionLabel) -> Self {
        Gate {
            label,
            fers: VecDeque::new(),
            rets: VecDeque::new(),
        }
    }

    pub fn label(&self) -> &FunctionLabel {
        &self.label
    }

    pub fn push_fer(&mut self, fer: Fer) {
        self.fers.push_back(fer);
    }

    /// Oldest queued request, for the push server.
    pub fn next_fer(&mut self) -> Option<Fer> {
        self.fers.pop_front()
    }

    pub fn ingest_ret(&mut self, ret: Ret) {
        self.rets.push_back(ret);
    }

    pub fn pop_ret(&mut self) -> Option<Ret> {
        self.rets.pop_front()
    }

    pub fn has_ret(&self) -> bool {
        !self.rets.is_empty()
    }

    pub fn fer_len(&self) -> usize {
        self.fers.len()
    }

    pub fn ret_len(&self) -> usize {
        self.rets.len()
    }
}
