//! Chord node: peer set, iterative routing, join, and the periodic
//! maintenance pass whose schedule the autonomic manager controls.

mod local;
mod node;
mod peer_set;
mod rpc;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ring::NodeId;

pub use local::LocalNet;
pub use node::{CallId, ChordConfig, ChordNode, JoinError, LookupError, LookupId, NodeStats, Output};
pub use peer_set::PeerSet;
pub use rpc::{Hop, Message, Request, Response};

/// Opaque transport address. In the simulator this is the host slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Address(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PeerRef {
    pub id: NodeId,
    pub addr: Address,
}

impl PeerRef {
    pub fn new(id: NodeId, addr: Address) -> Self {
        PeerRef { id, addr }
    }
}

impl fmt::Display for PeerRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.id, self.addr.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    WastedMaintenance,
    AccessError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventContext {
    Routing,
    Maintenance,
}

/// Monitoring event delivered to the node's own manager. Never leaves the node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManagerEvent {
    pub kind: EventKind,
    pub node: NodeId,
    pub time: f64,
    pub context: EventContext,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MaintenanceReport {
    /// Any peer-set mutation happened during the pass.
    pub changed: bool,
    /// Failed peer accesses during the pass.
    pub errors: u32,
    pub rpcs_sent: u32,
    pub bytes_sent: u64,
}
