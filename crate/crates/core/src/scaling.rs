//! Scaling rounds. Each autoscale call starts a new round per cluster;
//! within a round the pending tables go to requesting nodes first come,
//! first served, and everyone after that gets the null table.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::message::{AutoScaleDirective, ScalingTable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScalingError {
    #[error("unknown cluster `{0}`")]
    UnknownCluster(String),
    #[error("cluster `{cluster}` has {declared} node(s) but the directive carries {tables} table(s)")]
    TooManyTables {
        cluster: String,
        declared: usize,
        tables: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub label: String,
    pub declared_node_count: usize,
    pub pending_tables: Vec<ScalingTable>,
    /// Nodes that already asked in the current round.
    pub served_count: usize,
}

impl ClusterState {
    pub fn new(label: impl Into<String>, declared_node_count: usize) -> Self {
        ClusterState {
            label: label.into(),
            declared_node_count,
            pending_tables: Vec::new(),
            served_count: 0,
        }
    }

    fn grant(&mut self) -> ScalingTable {
        let table = self
            .pending_tables
            .get(self.served_count)
            .cloned()
            .unwrap_or_default();
        if self.served_count < self.declared_node_count {
            self.served_count += 1;
        }
        table
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grant {
    /// The table for the requesting node (possibly null).
    Table { round: u64, table: ScalingTable },
    /// The node asked about an outdated round; a newer event is on its way.
    Stale { current: u64 },
}

/// Controller-side round bookkeeping for every cluster.
#[derive(Debug, Clone, Default)]
pub struct Autoscaler {
    clusters: BTreeMap<String, ClusterState>,
    round: u64,
}

impl Autoscaler {
    pub fn new<I, S>(clusters: I) -> Self
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        let clusters = clusters
            .into_iter()
            .map(|(label, n)| {
                let label = label.into();
                (label.clone(), ClusterState::new(label, n))
            })
            .collect();
        Autoscaler {
            clusters,
            round: 0,
        }
    }

    /// Current round; 0 until the first directive arrives.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn cluster(&self, label: &str) -> Option<&ClusterState> {
        self.clusters.get(label)
    }

    pub fn validate(&self, directive: &AutoScaleDirective) -> Result<(), ScalingError> {
        for (cluster, tables) in &directive.clusters {
            let state = self
                .clusters
                .get(cluster)
                .ok_or_else(|| ScalingError::UnknownCluster(cluster.clone()))?;
            if tables.len() > state.declared_node_count {
                return Err(ScalingError::TooManyTables {
                    cluster: cluster.clone(),
                    declared: state.declared_node_count,
                    tables: tables.len(),
                });
            }
        }
        Ok(())
    }

    /// Starts a new round. Clusters named in the directive get its tables;
    /// clusters it omits keep no pending tables, so their nodes scale out.
    pub fn apply(&mut self, directive: &AutoScaleDirective) -> Result<u64, ScalingError> {
        self.validate(directive)?;
        for (label, state) in self.clusters.iter_mut() {
            state.pending_tables = directive.clusters.get(label).cloned().unwrap_or_default();
            state.served_count = 0;
        }
        self.round += 1;
        Ok(self.round)
    }

    /// Answers one node's scaling request. `round` is the round the node
    /// was told about; `None` means "whatever is current".
    pub fn grant(&mut self, cluster: &str, round: Option<u64>) -> Result<Grant, ScalingError> {
        let current = self.round;
        let state = self
            .clusters
            .get_mut(cluster)
            .ok_or_else(|| ScalingError::UnknownCluster(cluster.into()))?;
        if round.is_some_and(|r| r != current) {
            return Ok(Grant::Stale { current });
        }
        Ok(Grant::Table {
            round: current,
            table: state.grant(),
        })
    }
}
