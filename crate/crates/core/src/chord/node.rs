//! The Chord node as a transport-agnostic state machine.
//!
//! The node never performs I/O. Operations that need a remote peer push an
//! [`Output::Send`] carrying a [`CallId`]; whoever drives the node delivers
//! the matching response with [`ChordNode::on_response`] or reports the
//! failure with [`ChordNode::on_timeout`]. Completed operations surface as
//! further outputs. Lookups are iterative: the node performing the lookup
//! contacts every hop itself.

use std::collections::BTreeMap;

use crate::ring::{IdSpace, NodeId};
use crate::simnet::message_size;

use super::peer_set::PeerSet;
use super::rpc::{Hop, Message, Request, Response};
use super::{EventContext, EventKind, MaintenanceReport, ManagerEvent, PeerRef};

pub type CallId = u64;
pub type LookupId = u64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChordConfig {
    pub space: IdSpace,
    /// Successor list length `r`.
    pub successor_list_len: usize,
    /// Hop budget for one iterative lookup.
    pub max_hops: u32,
}

impl Default for ChordConfig {
    fn default() -> Self {
        ChordConfig {
            space: IdSpace::default(),
            successor_list_len: 4,
            max_hops: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LookupError {
    /// A hop did not answer.
    Timeout(PeerRef),
    HopLimit,
    /// Routing led back to the caller before it had joined.
    RoutedToSelf,
}

impl LookupError {
    pub fn kind(&self) -> &'static str {
        match self {
            LookupError::Timeout(_) => "timeout",
            LookupError::HopLimit => "hop_limit",
            LookupError::RoutedToSelf => "routed_to_self",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinError {
    /// The bootstrap or a later hop did not answer.
    Unreachable(PeerRef),
    /// Routing could not produce a usable successor.
    NoSuccessor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Send { call: CallId, to: PeerRef, request: Request },
    LookupDone { lookup: LookupId, result: Result<PeerRef, LookupError> },
    /// Join finished with the adopted successor, or failed.
    JoinDone(Result<PeerRef, JoinError>),
    MaintainDone(MaintenanceReport),
    /// Every successor failed; the node lost its place in the ring.
    Orphaned,
}

/// Cumulative event tallies for one incarnation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeStats {
    pub access_errors: u64,
    pub wasted_maintenance: u64,
    pub maintenance_ops: u64,
    pub zero_mutation_ops: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Owner {
    Lookup(LookupId),
    Join,
    Maintain,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    owner: Owner,
    to: PeerRef,
    arrived: bool,
}

#[derive(Debug, Clone, Copy)]
struct Route {
    key: NodeId,
    hops: u32,
}

enum Step {
    Done(PeerRef),
    Ask(PeerRef),
}

enum Progress {
    Waiting(Route),
    Finished(Result<PeerRef, LookupError>),
}

#[derive(Debug, Clone, Copy)]
struct JoinState {
    route: Route,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MaintainStep {
    Stabilize,
    Notify,
    SuccessorList,
    Finger(u32),
    CheckPredecessor,
}

#[derive(Debug, Clone)]
struct MaintainState {
    step: MaintainStep,
    route: Option<Route>,
    /// `(target, resolved)` of the previous finger in this pass.
    prev_finger: Option<(NodeId, PeerRef)>,
    report: MaintenanceReport,
}

#[derive(Debug, Clone)]
pub struct ChordNode {
    cfg: ChordConfig,
    me: PeerRef,
    peers: PeerSet,
    joined: bool,
    next_call: CallId,
    next_lookup: LookupId,
    pending: BTreeMap<CallId, Pending>,
    lookups: BTreeMap<LookupId, Route>,
    join: Option<JoinState>,
    maintain: Option<MaintainState>,
    events: Vec<ManagerEvent>,
    out: Vec<Output>,
    stats: NodeStats,
    now: f64,
}

impl ChordNode {
    /// A fresh incarnation with an empty peer set.
    pub fn new(me: PeerRef, cfg: ChordConfig) -> Self {
        ChordNode {
            peers: PeerSet::new(me, cfg.space.bits() as usize, cfg.successor_list_len),
            cfg,
            me,
            joined: false,
            next_call: 0,
            next_lookup: 0,
            pending: BTreeMap::new(),
            lookups: BTreeMap::new(),
            join: None,
            maintain: None,
            events: Vec::new(),
            out: Vec::new(),
            stats: NodeStats::default(),
            now: 0.0,
        }
    }

    /// Starts a new ring with this node as its only member.
    pub fn found(me: PeerRef, cfg: ChordConfig) -> Self {
        let mut n = Self::new(me, cfg);
        n.joined = true;
        n
    }

    pub fn me(&self) -> PeerRef {
        self.me
    }

    pub fn config(&self) -> &ChordConfig {
        &self.cfg
    }

    pub fn peers(&self) -> &PeerSet {
        &self.peers
    }

    pub fn peers_mut(&mut self) -> &mut PeerSet {
        &mut self.peers
    }

    /// Whether the node answers requests. Nodes start serving once joined.
    pub fn is_joined(&self) -> bool {
        self.joined
    }

    pub fn is_joining(&self) -> bool {
        self.join.is_some()
    }

    pub fn is_maintaining(&self) -> bool {
        self.maintain.is_some()
    }

    pub fn stats(&self) -> NodeStats {
        self.stats
    }

    pub fn take_outputs(&mut self) -> Vec<Output> {
        std::mem::take(&mut self.out)
    }

    pub fn drain_events(&mut self) -> Vec<ManagerEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn pending_events(&self) -> &[ManagerEvent] {
        &self.events
    }

    pub fn set_time(&mut self, now: f64) {
        self.now = now;
    }

    pub fn closest_preceding_peer(&self, key: NodeId) -> PeerRef {
        self.peers.closest_preceding_peer(key)
    }

    fn local_step(&self, key: NodeId) -> Step {
        if let Some(p) = self.peers.local_successor_of(key) {
            return Step::Done(p);
        }
        match self.peers.closest_preceding_peer(key) {
            p if p == self.me => Step::Done(self.peers.successor()),
            p => Step::Ask(p),
        }
    }

    // ---------------------------------------------------------------------
    // Serving side
    // ---------------------------------------------------------------------

    /// Answers a request from `from`. Only `notify` mutates state.
    pub fn handle_request(&mut self, _from: PeerRef, request: &Request) -> Response {
        match request {
            Request::FindSuccessor(key) => Response::FindSuccessor(match self.local_step(*key) {
                Step::Done(p) => Hop::Found(p),
                Step::Ask(p) => Hop::Next(p),
            }),
            Request::GetPredecessor => Response::Predecessor(self.peers.predecessor()),
            Request::GetSuccessorList => Response::SuccessorList(self.peers.successor_list().to_vec()),
            Request::Notify(candidate) => {
                self.peers.offer_predecessor(*candidate);
                Response::Ack
            }
            Request::Ping => Response::Ack,
        }
    }

    // ---------------------------------------------------------------------
    // Calls and their completion
    // ---------------------------------------------------------------------

    fn send(&mut self, owner: Owner, to: PeerRef, request: Request) -> CallId {
        let call = self.next_call;
        self.next_call += 1;
        self.pending.insert(call, Pending { owner, to, arrived: false });
        if owner == Owner::Maintain {
            if let Some(st) = self.maintain.as_mut() {
                st.report.rpcs_sent += 1;
                st.report.bytes_sent += message_size(&Message::Request(request.clone()));
            }
        }
        self.out.push(Output::Send { call, to, request });
        call
    }

    /// Marks a response as received at the network level so that a timeout
    /// racing with local processing does not fire. Returns false if the call
    /// is no longer outstanding.
    pub fn response_arrived(&mut self, call: CallId) -> bool {
        match self.pending.get_mut(&call) {
            Some(p) if !p.arrived => {
                p.arrived = true;
                true
            }
            _ => false,
        }
    }

    /// True while the call has neither been answered nor timed out.
    pub fn awaiting(&self, call: CallId) -> bool {
        self.pending.get(&call).is_some_and(|p| !p.arrived)
    }

    pub fn on_response(&mut self, call: CallId, response: Response) {
        let Some(p) = self.pending.remove(&call) else {
            return;
        };
        match p.owner {
            Owner::Lookup(id) => self.lookup_response(id, p.to, response),
            Owner::Join => self.join_response(p.to, response),
            Owner::Maintain => self.maintain_response(p.to, response),
        }
    }

    /// The call to `pending.to` failed. Emits exactly one access error.
    pub fn on_timeout(&mut self, call: CallId) {
        let Some(p) = self.pending.remove(&call) else {
            return;
        };
        if p.arrived {
            // Response is already queued for processing.
            self.pending.insert(call, p);
            return;
        }
        let context = match p.owner {
            Owner::Maintain => EventContext::Maintenance,
            Owner::Lookup(_) | Owner::Join => EventContext::Routing,
        };
        self.emit(EventKind::AccessError, context);
        match p.owner {
            Owner::Lookup(id) => {
                self.lookups.remove(&id);
                self.forget(p.to);
                self.out.push(Output::LookupDone {
                    lookup: id,
                    result: Err(LookupError::Timeout(p.to)),
                });
            }
            Owner::Join => self.join_failed(JoinError::Unreachable(p.to)),
            Owner::Maintain => self.maintain_failure(p.to),
        }
    }

    fn emit(&mut self, kind: EventKind, context: EventContext) {
        match kind {
            EventKind::AccessError => self.stats.access_errors += 1,
            EventKind::WastedMaintenance => self.stats.wasted_maintenance += 1,
        }
        self.events.push(ManagerEvent {
            kind,
            node: self.me.id,
            time: self.now,
            context,
        });
    }

    /// Advances an iterative route from `step`, sending the next query if needed.
    fn advance(&mut self, owner: Owner, mut route: Route, mut step: Step) -> Progress {
        loop {
            match step {
                Step::Done(p) => return Progress::Finished(Ok(p)),
                Step::Ask(p) if p == self.me => {
                    if !self.joined {
                        return Progress::Finished(Err(LookupError::RoutedToSelf));
                    }
                    step = self.local_step(route.key);
                }
                Step::Ask(p) => {
                    if route.hops >= self.cfg.max_hops {
                        return Progress::Finished(Err(LookupError::HopLimit));
                    }
                    route.hops += 1;
                    self.send(owner, p, Request::FindSuccessor(route.key));
                    return Progress::Waiting(route);
                }
            }
        }
    }

    fn hop_of(response: Response) -> Option<Step> {
        match response {
            Response::FindSuccessor(Hop::Found(p)) => Some(Step::Done(p)),
            Response::FindSuccessor(Hop::Next(p)) => Some(Step::Ask(p)),
            _ => None,
        }
    }

    // ---------------------------------------------------------------------
    // Lookup
    // ---------------------------------------------------------------------

    /// Starts a lookup for `key`. Completion is reported as
    /// [`Output::LookupDone`], possibly before this call returns.
    pub fn start_lookup(&mut self, key: NodeId) -> LookupId {
        let id = self.next_lookup;
        self.next_lookup += 1;
        let route = Route { key, hops: 0 };
        let step = self.local_step(key);
        self.lookup_progress(id, route, step);
        id
    }

    fn lookup_progress(&mut self, id: LookupId, route: Route, step: Step) {
        match self.advance(Owner::Lookup(id), route, step) {
            Progress::Waiting(r) => {
                self.lookups.insert(id, r);
            }
            Progress::Finished(result) => {
                self.lookups.remove(&id);
                self.out.push(Output::LookupDone { lookup: id, result });
            }
        }
    }

    fn lookup_response(&mut self, id: LookupId, _from: PeerRef, response: Response) {
        let Some(route) = self.lookups.get(&id).copied() else {
            return;
        };
        if let Some(step) = Self::hop_of(response) {
            self.lookup_progress(id, route, step);
        }
    }

    pub fn lookups_in_flight(&self) -> usize {
        self.lookups.len()
    }

    // ---------------------------------------------------------------------
    // Join
    // ---------------------------------------------------------------------

    /// Asks `bootstrap` for this node's successor. Clears the predecessor on
    /// success; fingers and the successor list fill in through maintenance.
    pub fn start_join(&mut self, bootstrap: PeerRef) {
        if bootstrap.addr == self.me.addr {
            self.out.push(Output::JoinDone(Err(JoinError::NoSuccessor)));
            return;
        }
        self.join = Some(JoinState {
            route: Route { key: self.me.id, hops: 1 },
        });
        self.send(Owner::Join, bootstrap, Request::FindSuccessor(self.me.id));
    }

    /// Gives up on joining and becomes a ring of one.
    pub fn found_ring(&mut self) {
        self.join = None;
        self.peers.install_successor(self.me);
        self.peers.set_predecessor(None);
        self.joined = true;
    }

    fn join_failed(&mut self, err: JoinError) {
        self.join = None;
        self.out.push(Output::JoinDone(Err(err)));
    }

    fn join_response(&mut self, from: PeerRef, response: Response) {
        let Some(mut st) = self.join.take() else {
            return;
        };
        if let Response::SuccessorList(list) = response {
            // Answer to our request for the list of the node that still
            // points at our previous incarnation.
            return match list.into_iter().find(|p| p.addr != self.me.addr) {
                Some(p) => self.joined_with(p),
                None => self.join_failed(JoinError::NoSuccessor),
            };
        }
        let next_ask = match Self::hop_of(response) {
            // The ring still lists our previous incarnation as `from`'s
            // successor; adopt the first entry after it in `from`'s list.
            Some(Step::Done(p)) if p.addr == self.me.addr => {
                self.join = Some(st);
                self.send(Owner::Join, from, Request::GetSuccessorList);
                return;
            }
            Some(Step::Done(p)) => return self.joined_with(p),
            Some(Step::Ask(p)) if p.addr != self.me.addr => Some(p),
            _ => None,
        };
        match next_ask {
            Some(p) if st.route.hops < self.cfg.max_hops => {
                st.route.hops += 1;
                let key = st.route.key;
                self.join = Some(st);
                self.send(Owner::Join, p, Request::FindSuccessor(key));
            }
            _ => self.join_failed(JoinError::NoSuccessor),
        }
    }

    fn joined_with(&mut self, p: PeerRef) {
        self.peers.install_successor(p);
        self.peers.set_predecessor(None);
        self.joined = true;
        self.out.push(Output::JoinDone(Ok(p)));
    }

    // ---------------------------------------------------------------------
    // Maintenance
    // ---------------------------------------------------------------------

    /// Starts one maintenance pass: stabilize, refresh the successor list,
    /// fix every finger, check the predecessor. Returns false if a pass is
    /// already running.
    pub fn start_maintain(&mut self) -> bool {
        if self.maintain.is_some() {
            return false;
        }
        self.maintain = Some(MaintainState {
            step: MaintainStep::Stabilize,
            route: None,
            prev_finger: None,
            report: MaintenanceReport::default(),
        });
        self.maintain_drive();
        true
    }

    fn mark(&mut self, changed: bool) {
        if changed {
            if let Some(st) = self.maintain.as_mut() {
                st.report.changed = true;
            }
        }
    }

    fn set_step(&mut self, step: MaintainStep) {
        if let Some(st) = self.maintain.as_mut() {
            st.step = step;
            st.route = None;
        }
    }

    /// Runs local steps until a remote call is outstanding or the pass ends.
    fn maintain_drive(&mut self) {
        let bits = self.cfg.space.bits();
        loop {
            let Some(step) = self.maintain.as_ref().map(|s| s.step) else {
                return;
            };
            let succ = self.peers.successor();
            match step {
                MaintainStep::Stabilize => {
                    if succ == self.me {
                        if let Some(x) = self.peers.predecessor() {
                            let c = self.peers.install_successor(x);
                            self.mark(c);
                        }
                        self.set_step(MaintainStep::Notify);
                    } else {
                        self.send(Owner::Maintain, succ, Request::GetPredecessor);
                        return;
                    }
                }
                MaintainStep::Notify => {
                    if succ == self.me {
                        self.set_step(MaintainStep::SuccessorList);
                    } else {
                        self.send(Owner::Maintain, succ, Request::Notify(self.me));
                        return;
                    }
                }
                MaintainStep::SuccessorList => {
                    if succ == self.me {
                        self.set_step(MaintainStep::Finger(1));
                    } else {
                        self.send(Owner::Maintain, succ, Request::GetSuccessorList);
                        return;
                    }
                }
                MaintainStep::Finger(i) if i > bits => {
                    self.set_step(MaintainStep::CheckPredecessor);
                }
                MaintainStep::Finger(i) => {
                    let target = self.cfg.space.finger_target(self.me.id, i).expect("index in range");
                    let prev = self.maintain.as_ref().and_then(|s| s.prev_finger);
                    let local = self.peers.successor_list_hint(target).or_else(|| {
                        prev.filter(|(pt, pf)| *pt != pf.id && crate::ring::in_half_open(target, *pt, pf.id))
                            .map(|(_, pf)| pf)
                    });
                    let step = match local {
                        Some(p) => Step::Done(p),
                        None => self.local_step(target),
                    };
                    match self.advance(Owner::Maintain, Route { key: target, hops: 0 }, step) {
                        Progress::Waiting(route) => {
                            if let Some(st) = self.maintain.as_mut() {
                                st.route = Some(route);
                            }
                            return;
                        }
                        Progress::Finished(Ok(p)) => self.finish_finger(i, target, p),
                        Progress::Finished(Err(_)) => self.set_step(MaintainStep::Finger(i + 1)),
                    }
                }
                MaintainStep::CheckPredecessor => match self.peers.predecessor() {
                    Some(p) if p != self.me => {
                        self.send(Owner::Maintain, p, Request::Ping);
                        return;
                    }
                    _ => {
                        self.finish_maintain();
                        return;
                    }
                },
            }
        }
    }

    fn finish_finger(&mut self, i: u32, target: NodeId, p: PeerRef) {
        let c = self.peers.set_finger(i, Some(p));
        self.mark(c);
        if let Some(st) = self.maintain.as_mut() {
            st.prev_finger = Some((target, p));
        }
        self.set_step(MaintainStep::Finger(i + 1));
    }

    fn finish_maintain(&mut self) {
        let Some(st) = self.maintain.take() else {
            return;
        };
        let report = st.report;
        self.stats.maintenance_ops += 1;
        if !report.changed {
            self.stats.zero_mutation_ops += 1;
            self.emit(EventKind::WastedMaintenance, EventContext::Maintenance);
        }
        self.out.push(Output::MaintainDone(report));
    }

    fn maintain_response(&mut self, _from: PeerRef, response: Response) {
        let Some(step) = self.maintain.as_ref().map(|s| s.step) else {
            return;
        };
        match (step, response) {
            (MaintainStep::Stabilize, Response::Predecessor(x)) => {
                let succ = self.peers.successor();
                if let Some(x) = x {
                    if x != self.me && crate::ring::in_open(x.id, self.me.id, succ.id) {
                        let c = self.peers.install_successor(x);
                        self.mark(c);
                    }
                }
                self.set_step(MaintainStep::Notify);
            }
            (MaintainStep::Notify, Response::Ack) => self.set_step(MaintainStep::SuccessorList),
            (MaintainStep::SuccessorList, Response::SuccessorList(tail)) => {
                let c = self.peers.refresh_successor_list(&tail);
                self.mark(c);
                self.set_step(MaintainStep::Finger(1));
            }
            (MaintainStep::Finger(i), resp) => {
                let route = self.maintain.as_ref().and_then(|s| s.route);
                let (Some(route), Some(step)) = (route, Self::hop_of(resp)) else {
                    self.set_step(MaintainStep::Finger(i + 1));
                    return self.maintain_drive();
                };
                match self.advance(Owner::Maintain, route, step) {
                    Progress::Waiting(r) => {
                        if let Some(st) = self.maintain.as_mut() {
                            st.route = Some(r);
                        }
                        return;
                    }
                    Progress::Finished(Ok(p)) => self.finish_finger(i, route.key, p),
                    Progress::Finished(Err(_)) => self.set_step(MaintainStep::Finger(i + 1)),
                }
            }
            (MaintainStep::CheckPredecessor, Response::Ack) => {
                self.finish_maintain();
                return;
            }
            // Mismatched response; skip the step.
            (MaintainStep::Stabilize, _) => self.set_step(MaintainStep::Notify),
            (MaintainStep::Notify, _) => self.set_step(MaintainStep::SuccessorList),
            (MaintainStep::SuccessorList, _) => self.set_step(MaintainStep::Finger(1)),
            (MaintainStep::CheckPredecessor, _) => {
                self.finish_maintain();
                return;
            }
        }
        self.maintain_drive();
    }

    /// Drops a peer that failed to answer a routing call so later lookups
    /// route around it. Maintenance repairs the gap on its next pass.
    fn forget(&mut self, dead: PeerRef) {
        let had_ring = self.peers.successor() != self.me;
        self.peers.remove(dead);
        if had_ring && self.peers.successor() == self.me {
            self.out.push(Output::Orphaned);
        }
    }

    fn maintain_failure(&mut self, dead: PeerRef) {
        let Some(step) = self.maintain.as_ref().map(|s| s.step) else {
            return;
        };
        if let Some(st) = self.maintain.as_mut() {
            st.report.errors += 1;
        }
        let had_ring = self.peers.successor() != self.me;
        let c = self.peers.remove(dead);
        self.mark(c);
        if had_ring && self.peers.successor() == self.me {
            self.out.push(Output::Orphaned);
        }
        match step {
            // Retry against the replacement successor.
            MaintainStep::Stabilize | MaintainStep::SuccessorList => {}
            MaintainStep::Notify => self.set_step(MaintainStep::SuccessorList),
            MaintainStep::Finger(i) => self.set_step(MaintainStep::Finger(i + 1)),
            MaintainStep::CheckPredecessor => {
                self.finish_maintain();
                return;
            }
        }
        self.maintain_drive();
    }
}
