//! Zero-latency driver that runs every node in one process.
//!
//! Calls are answered synchronously; a call to an offline or unjoined peer
//! fails immediately. Useful for convergence checks and scripting where
//! timing is irrelevant. The timed simulator lives in [`crate::simnet`].

use std::collections::{BTreeMap, BTreeSet};

use crate::ring::NodeId;

use super::{Address, ChordConfig, ChordNode, JoinError, LookupError, MaintenanceReport, Output, PeerRef};

#[derive(Debug, Default)]
pub struct LocalNet {
    nodes: BTreeMap<Address, ChordNode>,
    offline: BTreeSet<Address>,
    failed_calls: u64,
    sent_requests: u64,
}

impl LocalNet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&self, addr: Address) -> Option<&ChordNode> {
        self.nodes.get(&addr)
    }

    pub fn node_mut(&mut self, addr: Address) -> Option<&mut ChordNode> {
        self.nodes.get_mut(&addr)
    }

    pub fn addresses(&self) -> Vec<Address> {
        self.nodes.keys().copied().collect()
    }

    pub fn failed_calls(&self) -> u64 {
        self.failed_calls
    }

    pub fn sent_requests(&self) -> u64 {
        self.sent_requests
    }

    pub fn is_online(&self, addr: Address) -> bool {
        self.nodes.contains_key(&addr) && !self.offline.contains(&addr)
    }

    /// Adds a node that starts a new ring.
    pub fn add_founder(&mut self, me: PeerRef, cfg: ChordConfig) {
        self.nodes.insert(me.addr, ChordNode::found(me, cfg));
        self.offline.remove(&me.addr);
    }

    /// Adds a fresh node and joins it through `bootstrap`.
    pub fn join(&mut self, me: PeerRef, cfg: ChordConfig, bootstrap: PeerRef) -> Result<PeerRef, JoinError> {
        self.nodes.insert(me.addr, ChordNode::new(me, cfg));
        self.offline.remove(&me.addr);
        self.node_mut(me.addr).unwrap().start_join(bootstrap);
        for out in self.pump(me.addr) {
            if let Output::JoinDone(r) = out {
                return r;
            }
        }
        Err(JoinError::NoSuccessor)
    }

    /// Takes a node offline. Its state is kept so that tests can inspect it,
    /// but it answers nothing.
    pub fn set_offline(&mut self, addr: Address) {
        self.offline.insert(addr);
    }

    pub fn maintain(&mut self, addr: Address) -> Option<MaintenanceReport> {
        if !self.is_online(addr) || !self.nodes.get_mut(&addr)?.start_maintain() {
            return None;
        }
        self.pump(addr).into_iter().find_map(|o| match o {
            Output::MaintainDone(r) => Some(r),
            _ => None,
        })
    }

    /// One maintenance pass on every online node, in address order.
    pub fn maintain_all(&mut self) {
        for addr in self.addresses() {
            self.maintain(addr);
        }
    }

    pub fn lookup(&mut self, from: Address, key: NodeId) -> Result<PeerRef, LookupError> {
        let node = self.nodes.get_mut(&from).expect("unknown node");
        let id = node.start_lookup(key);
        self.pump(from)
            .into_iter()
            .find_map(|o| match o {
                Output::LookupDone { lookup, result } if lookup == id => Some(result),
                _ => None,
            })
            .unwrap_or(Err(LookupError::HopLimit))
    }

    /// Runs `origin`'s outstanding calls to completion and returns every
    /// non-send output it produced.
    fn pump(&mut self, origin: Address) -> Vec<Output> {
        let mut done = Vec::new();
        loop {
            let outs = self.nodes.get_mut(&origin).unwrap().take_outputs();
            if outs.is_empty() {
                return done;
            }
            for out in outs {
                match out {
                    Output::Send { call, to, request } => {
                        self.sent_requests += 1;
                        let me = self.nodes[&origin].me();
                        let reply = match self.nodes.get_mut(&to.addr) {
                            Some(peer)
                                if !self.offline.contains(&to.addr) && peer.is_joined() && peer.me() == to =>
                            {
                                Some(peer.handle_request(me, &request))
                            }
                            _ => None,
                        };
                        let node = self.nodes.get_mut(&origin).unwrap();
                        match reply {
                            Some(resp) => {
                                node.response_arrived(call);
                                node.on_response(call, resp);
                            }
                            None => {
                                self.failed_calls += 1;
                                node.on_timeout(call);
                            }
                        }
                    }
                    other => done.push(other),
                }
            }
        }
    }
}
