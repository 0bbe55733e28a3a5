//! The experiment driver: hosts, lifecycles, transport, managers and the
//! workload executor over one virtual clock.
//!
//! Everything runs on a single event queue, so a run is a pure function of
//! its [`ExperimentConfig`].

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::churn::{generate_lifecycle, ChurnKind, ChurnPattern, NodeClass};
use super::clock::{SimTime, VirtualClock};
use super::transport::{message_size, NetworkModel};
use super::workload::{Group, WorkloadKind, WorkloadSpec};
use super::substream;
use crate::autonomic::{AutonomicManager, CycleRecord, PolicyConfig};
use crate::chord::{
    Address, CallId, ChordConfig, ChordNode, EventKind, LookupId, ManagerEvent, Message, Output, PeerRef, Request,
    Response,
};
use crate::error::{Error, Result};
use crate::metrics::{LookupRecord, TrafficSample, WINDOW};
use crate::ring::NodeId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub workload: WorkloadSpec,
    pub churn: ChurnPattern,
    pub policy: PolicyConfig,
    pub node_count: usize,
    pub seed: u64,
    pub horizon: f64,
    pub retry_on_error: bool,
    /// Evaluation window; the run is extended to whole windows.
    pub window: f64,
    /// Virtual time at which the executor issues its first lookup.
    pub workload_start: f64,
    pub network: NetworkModel,
    #[serde(skip, default)]
    pub chord: ChordConfig,
    /// Keep every traffic sample in the output. When false only the
    /// per-window byte totals needed for metrics are kept.
    pub record_traffic: bool,
}

impl ExperimentConfig {
    pub fn new(workload: WorkloadKind, churn: ChurnKind, policy: PolicyConfig, seed: u64) -> Self {
        ExperimentConfig {
            workload: WorkloadSpec::new(workload),
            churn: ChurnPattern::new(churn),
            policy,
            node_count: 16,
            seed,
            horizon: 7200.0,
            retry_on_error: false,
            window: WINDOW,
            workload_start: 30.0,
            network: NetworkModel::default(),
            chord: ChordConfig::default(),
            record_traffic: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.node_count == 0 || self.node_count > u32::MAX as usize {
            return bad(format!("node_count must be positive, got {}", self.node_count));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.window > 0.0) {
            return bad(format!("window must be positive, got {}", self.window));
        }
        if !(self.workload_start >= 0.0 && self.workload_start < self.horizon) {
            return bad(format!("workload_start must lie in [0, horizon), got {}", self.workload_start));
        }
        self.policy.validate()?;
        self.workload.validate()?;
        self.network.validate()?;
        let ids = host_ids(self);
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != ids.len() {
            return bad("node identifiers collide; change node_count or id bits".into());
        }
        Ok(())
    }
}

fn host_ids(cfg: &ExperimentConfig) -> Vec<NodeId> {
    (0..cfg.node_count)
        .map(|i| cfg.chord.space.id_from_key(format!("node-{i}").as_bytes()).expect("non-empty key"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostInfo {
    pub index: usize,
    pub id: NodeId,
    pub class: NodeClass,
}

/// Transport and instrumentation counters for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    pub messages_sent: u64,
    pub bytes_sent: u64,
    /// Calls that timed out without a response.
    pub failed_calls: u64,
    pub access_error_events: u64,
    pub wasted_events: u64,
    pub maintenance_passes: u64,
    pub zero_mutation_passes: u64,
    pub lookups_ok: u64,
    pub lookups_failed: u64,
    /// Successful lookups whose answer matched the live membership.
    pub lookups_correct: u64,
    pub lookups_unfinished: u64,
    pub joins: u64,
    pub join_attempt_failures: u64,
    pub founded_rings: u64,
    pub orphaned: u64,
    pub restarts: u64,
    pub manager_cycles: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub lookups: Vec<LookupRecord>,
    /// Empty unless `record_traffic` was set.
    pub traffic: Vec<TrafficSample>,
    /// Bytes sent per evaluation window, always kept.
    pub window_bytes: Vec<u64>,
    pub manager: Vec<CycleRecord>,
    pub stats: SimStats,
    pub duration: f64,
    pub workload_done: Option<f64>,
    pub hosts: Vec<HostInfo>,
}

#[derive(Debug, Clone)]
enum Packet {
    Request {
        from: usize,
        from_inc: u64,
        from_peer: PeerRef,
        call: CallId,
        request: Request,
    },
    Response {
        to_inc: u64,
        call: CallId,
        response: Response,
    },
}

#[derive(Debug)]
enum Ev {
    Phase { host: usize, online: bool },
    Arrive { host: usize, packet: Packet },
    Serve { host: usize, inc: u64, packet: Packet },
    Timeout { host: usize, inc: u64, call: CallId },
    Maintain { host: usize, inc: u64, token: u64 },
    Cycle { host: usize, inc: u64 },
    Rejoin { host: usize, inc: u64 },
    Group,
    Issue { key: NodeId, first_start: f64 },
}

struct Host {
    me: PeerRef,
    online: bool,
    inc: u64,
    node: Option<ChordNode>,
    manager: Option<AutonomicManager>,
    busy_until: SimTime,
    maint_token: u64,
    /// When the last maintenance pass (or the join) finished.
    last_done: f64,
    /// Next bootstrap candidate while joining.
    join_next: Option<usize>,
    /// Full candidate sweeps that failed during the current join.
    join_sweeps: u32,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    key: NodeId,
    start: f64,
    first_start: f64,
}

/// Failed sweeps over every bootstrap candidate before a node gives up and
/// founds its own ring.
const JOIN_SWEEPS: u32 = 3;

/// Runs one experiment to completion.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    Ok(Simulation::new(cfg.clone()).run())
}

pub struct Simulation {
    cfg: ExperimentConfig,
    clock: VirtualClock<Ev>,
    hosts: Vec<Host>,
    infos: Vec<HostInfo>,
    jitter: ChaCha8Rng,
    plan: Vec<Group>,
    next_group: usize,
    outstanding: usize,
    cursor: usize,
    inflight: BTreeMap<(usize, u64, LookupId), Slot>,
    end: f64,
    workload_done: Option<f64>,
    lookups: Vec<LookupRecord>,
    traffic: Vec<TrafficSample>,
    window_bytes: Vec<u64>,
    manager_log: Vec<CycleRecord>,
    stats: SimStats,
}

impl Simulation {
    pub fn new(cfg: ExperimentConfig) -> Self {
        let n = cfg.node_count;
        let ids = host_ids(&cfg);
        let hosts = ids
            .iter()
            .enumerate()
            .map(|(i, id)| Host {
                me: PeerRef::new(*id, Address(i as u32)),
                online: false,
                inc: 0,
                node: None,
                manager: None,
                busy_until: SimTime::ZERO,
                maint_token: 0,
                last_done: 0.0,
                join_next: None,
                join_sweeps: 0,
            })
            .collect();
        let infos = ids
            .iter()
            .enumerate()
            .map(|(i, id)| HostInfo {
                index: i,
                id: *id,
                class: cfg.churn.node_class(i, n),
            })
            .collect();
        Simulation {
            jitter: substream(cfg.seed, "latency-jitter", 0),
            plan: cfg.workload.plan(cfg.seed),
            end: cfg.horizon,
            window_bytes: vec![0; crate::metrics::window_count(cfg.horizon, cfg.window)],
            cfg,
            clock: VirtualClock::new(),
            hosts,
            infos,
            next_group: 0,
            outstanding: 0,
            cursor: 0,
            inflight: BTreeMap::new(),
            workload_done: None,
            lookups: Vec::new(),
            traffic: Vec::new(),
            manager_log: Vec::new(),
            stats: SimStats::default(),
        }
    }

    fn now(&self) -> f64 {
        self.clock.now().secs()
    }

    pub fn run(mut self) -> RunOutput {
        let n = self.cfg.node_count;
        let mut initially_online = Vec::new();
        for i in 0..n {
            let phases = generate_lifecycle(&self.cfg.churn, i, n, self.cfg.seed, self.cfg.horizon);
            if phases[0].online {
                initially_online.push(i);
            }
            for ph in phases.iter().skip(1) {
                if ph.start < self.cfg.horizon {
                    self.clock.schedule(SimTime::from_secs(ph.start), Ev::Phase { host: i, online: ph.online });
                }
            }
        }
        // The lowest-index host that starts on-line founds the ring; the
        // others join through the usual bootstrap order.
        for (rank, &i) in initially_online.iter().enumerate() {
            self.go_online(i, rank == 0);
        }
        self.clock.schedule(SimTime::from_secs(self.cfg.workload_start), Ev::Group);

        while let Some(t) = self.clock.peek_time() {
            if t.secs() > self.end {
                break;
            }
            let (_, ev) = self.clock.pop().expect("peeked");
            self.dispatch(ev);
        }
        self.finish()
    }

    fn finish(mut self) -> RunOutput {
        for h in &mut self.hosts {
            if let Some(node) = h.node.as_mut() {
                for e in node.drain_events() {
                    count_event(&mut self.stats, &e);
                }
            }
        }
        self.stats.lookups_unfinished = self.inflight.len() as u64;
        let used = crate::metrics::window_count(self.end, self.cfg.window);
        self.window_bytes.truncate(used);
        RunOutput {
            lookups: self.lookups,
            traffic: self.traffic,
            window_bytes: self.window_bytes,
            manager: self.manager_log,
            stats: self.stats,
            duration: self.end,
            workload_done: self.workload_done,
            hosts: self.infos,
        }
    }

    fn dispatch(&mut self, ev: Ev) {
        match ev {
            Ev::Phase { host, online: true } => self.go_online(host, false),
            Ev::Phase { host, online: false } => self.go_offline(host),
            Ev::Arrive { host, packet } => self.arrive(host, packet),
            Ev::Serve { host, inc, packet } => self.serve(host, inc, packet),
            Ev::Timeout { host, inc, call } => {
                if self.live_node(host, inc).is_some_and(|n| n.awaiting(call)) {
                    self.stats.failed_calls += 1;
                    self.node(host).on_timeout(call);
                    self.pump(host);
                }
            }
            Ev::Maintain { host, inc, token } => {
                if self.live_node(host, inc).is_some() && self.hosts[host].maint_token == token {
                    self.start_maintenance(host);
                }
            }
            Ev::Cycle { host, inc } => self.cycle(host, inc),
            Ev::Rejoin { host, inc } => {
                if self.hosts[host].inc == inc {
                    self.hosts[host].join_next = Some(0);
                    self.try_next_bootstrap(host);
                }
            }
            Ev::Group => self.issue_group(),
            Ev::Issue { key, first_start } => self.issue(key, first_start),
        }
    }

    /// The node of `host` if it is on-line in incarnation `inc`, with its
    /// clock synchronized.
    fn live_node(&mut self, host: usize, inc: u64) -> Option<&mut ChordNode> {
        let now = self.clock.now().secs();
        let h = &mut self.hosts[host];
        if !h.online || h.inc != inc {
            return None;
        }
        let node = h.node.as_mut()?;
        node.set_time(now);
        Some(node)
    }

    fn node(&mut self, host: usize) -> &mut ChordNode {
        let inc = self.hosts[host].inc;
        self.live_node(host, inc).expect("host on-line")
    }

    // -----------------------------------------------------------------
    // Lifecycle
    // -----------------------------------------------------------------

    fn go_online(&mut self, host: usize, founder: bool) {
        let now = self.now();
        let chord = self.cfg.chord;
        let policy = self.cfg.policy;
        let h = &mut self.hosts[host];
        if h.online {
            return;
        }
        h.online = true;
        h.inc += 1;
        h.busy_until = self.clock.now();
        h.maint_token += 1;
        h.last_done = now;
        h.manager = Some(AutonomicManager::new(policy).expect("validated policy"));
        if now > 0.0 {
            self.stats.restarts += 1;
        }
        let inc = h.inc;
        if founder {
            h.node = Some(ChordNode::found(h.me, chord));
            self.stats.founded_rings += 1;
            self.schedule_maintenance(host, now);
        } else {
            h.node = Some(ChordNode::new(h.me, chord));
            self.begin_join(host);
        }
        self.clock
            .schedule_in(policy.cycle_duration, Ev::Cycle { host, inc });
    }

    fn go_offline(&mut self, host: usize) {
        let now = self.now();
        let h = &mut self.hosts[host];
        if !h.online {
            return;
        }
        if let Some(mut node) = h.node.take() {
            for e in node.drain_events() {
                count_event(&mut self.stats, &e);
            }
        }
        h.online = false;
        h.manager = None;
        h.join_next = None;
        h.inc += 1;
        // Lookups entered through this host are lost with it.
        let lost: Vec<_> = self.inflight.range((host, 0, 0)..(host + 1, 0, 0)).map(|(k, v)| (*k, *v)).collect();
        for (k, slot) in lost {
            self.inflight.remove(&k);
            self.lookup_finished(slot, now, Err("entry_offline"));
        }
    }

    /// Bootstrap candidates in index order, skipping `host` itself.
    fn candidate(&self, host: usize, k: usize) -> Option<usize> {
        (0..self.cfg.node_count).filter(|&i| i != host).nth(k)
    }

    fn begin_join(&mut self, host: usize) {
        self.hosts[host].join_next = Some(0);
        self.hosts[host].join_sweeps = 0;
        self.try_next_bootstrap(host);
    }

    fn try_next_bootstrap(&mut self, host: usize) {
        let Some(k) = self.hosts[host].join_next else {
            return;
        };
        match self.candidate(host, k) {
            Some(c) => {
                self.hosts[host].join_next = Some(k + 1);
                let bootstrap = self.hosts[c].me;
                self.node(host).start_join(bootstrap);
                self.pump(host);
            }
            None if self.hosts[host].join_sweeps + 1 < JOIN_SWEEPS => {
                // Stale pointers to our previous incarnation can make every
                // candidate fail for a while; give the ring time to notice.
                let h = &mut self.hosts[host];
                h.join_sweeps += 1;
                let inc = h.inc;
                self.clock
                    .schedule_in(self.cfg.network.rpc_timeout, Ev::Rejoin { host, inc });
            }
            None => {
                // Nobody answered: start a ring of one.
                self.hosts[host].join_next = None;
                self.stats.founded_rings += 1;
                self.node(host).found_ring();
                self.join_complete(host);
            }
        }
    }

    fn join_complete(&mut self, host: usize) {
        self.hosts[host].join_next = None;
        let now = self.now();
        self.schedule_maintenance(host, now);
    }

    // -----------------------------------------------------------------
    // Transport
    // -----------------------------------------------------------------

    fn record_send(&mut self, host: usize, msg: &Message) -> f64 {
        let bytes = message_size(msg);
        let now = self.now();
        self.stats.messages_sent += 1;
        self.stats.bytes_sent += bytes;
        let w = ((now / self.cfg.window) as usize).min(self.window_bytes.len() - 1);
        self.window_bytes[w] += bytes;
        if self.cfg.record_traffic {
            self.traffic.push(TrafficSample {
                time: now,
                node: self.hosts[host].me.id.0,
                bytes,
            });
        }
        self.cfg.network.latency(bytes, &mut self.jitter)
    }

    fn arrive(&mut self, host: usize, packet: Packet) {
        let h = &mut self.hosts[host];
        if !h.online {
            return;
        }
        let Some(node) = h.node.as_mut() else {
            return;
        };
        let accept = match &packet {
            Packet::Request { .. } => node.is_joined(),
            Packet::Response { to_inc, call, .. } => *to_inc == h.inc && node.response_arrived(*call),
        };
        if !accept {
            return;
        }
        let now = self.clock.now();
        let start = h.busy_until.max(now);
        h.busy_until = start.after(self.cfg.network.service_time);
        let inc = h.inc;
        let at = h.busy_until;
        self.clock.schedule(at, Ev::Serve { host, inc, packet });
    }

    fn serve(&mut self, host: usize, inc: u64, packet: Packet) {
        let Some(node) = self.live_node(host, inc) else {
            return;
        };
        match packet {
            Packet::Request {
                from,
                from_inc,
                from_peer,
                call,
                request,
            } => {
                if !node.is_joined() {
                    return;
                }
                let response = node.handle_request(from_peer, &request);
                let msg = Message::Response(response);
                let latency = self.record_send(host, &msg);
                let Message::Response(response) = msg else { unreachable!() };
                self.clock.schedule_in(
                    latency,
                    Ev::Arrive {
                        host: from,
                        packet: Packet::Response {
                            to_inc: from_inc,
                            call,
                            response,
                        },
                    },
                );
            }
            Packet::Response { call, response, .. } => {
                node.on_response(call, response);
                self.pump(host);
            }
        }
    }

    /// Carries out everything the node of `host` asked for.
    fn pump(&mut self, host: usize) {
        loop {
            let Some(node) = self.hosts[host].node.as_mut() else {
                return;
            };
            let outs = node.take_outputs();
            if outs.is_empty() {
                return;
            }
            for out in outs {
                self.handle_output(host, out);
            }
        }
    }

    fn handle_output(&mut self, host: usize, out: Output) {
        let inc = self.hosts[host].inc;
        match out {
            Output::Send { call, to, request } => {
                let msg = Message::Request(request);
                let latency = self.record_send(host, &msg);
                let Message::Request(request) = msg else { unreachable!() };
                let from_peer = self.hosts[host].me;
                self.clock.schedule_in(
                    latency,
                    Ev::Arrive {
                        host: to.addr.0 as usize,
                        packet: Packet::Request {
                            from: host,
                            from_inc: inc,
                            from_peer,
                            call,
                            request,
                        },
                    },
                );
                self.clock
                    .schedule_in(self.cfg.network.rpc_timeout, Ev::Timeout { host, inc, call });
            }
            Output::LookupDone { lookup, result } => {
                let now = self.now();
                if let Some(slot) = self.inflight.remove(&(host, inc, lookup)) {
                    let outcome = match result {
                        Ok(p) => {
                            if self.live_owner(slot.key) == Some(p.addr) {
                                self.stats.lookups_correct += 1;
                            }
                            Ok(())
                        }
                        Err(e) => Err(e.kind()),
                    };
                    self.lookup_finished(slot, now, outcome);
                }
            }
            Output::JoinDone(Ok(_)) => {
                self.stats.joins += 1;
                self.join_complete(host);
            }
            Output::JoinDone(Err(_)) => {
                self.stats.join_attempt_failures += 1;
                self.try_next_bootstrap(host);
            }
            Output::MaintainDone(report) => {
                self.stats.maintenance_passes += 1;
                if !report.changed {
                    self.stats.zero_mutation_passes += 1;
                }
                let now = self.now();
                self.hosts[host].last_done = now;
                let interval = self.interval(host);
                self.schedule_maintenance(host, now + interval);
            }
            Output::Orphaned => {
                self.stats.orphaned += 1;
                if self.hosts[host].join_next.is_none() {
                    self.begin_join(host);
                }
            }
        }
    }

    // -----------------------------------------------------------------
    // Maintenance and management
    // -----------------------------------------------------------------

    fn interval(&self, host: usize) -> f64 {
        self.hosts[host]
            .manager
            .as_ref()
            .map_or(self.cfg.policy.initial_interval, |m| m.interval())
    }

    fn schedule_maintenance(&mut self, host: usize, at: f64) {
        let h = &mut self.hosts[host];
        h.maint_token += 1;
        let ev = Ev::Maintain {
            host,
            inc: h.inc,
            token: h.maint_token,
        };
        self.clock.schedule(SimTime::from_secs(at.max(0.0)), ev);
    }

    fn start_maintenance(&mut self, host: usize) {
        let node = self.node(host);
        if !node.is_joined() || node.is_joining() {
            return;
        }
        if node.start_maintain() {
            self.pump(host);
        }
    }

    fn cycle(&mut self, host: usize, inc: u64) {
        let now = self.now();
        let Some(node) = self.live_node(host, inc) else {
            return;
        };
        let events = node.drain_events();
        let (busy, ready) = (node.is_maintaining(), node.is_joined() && !node.is_joining());
        for e in &events {
            count_event(&mut self.stats, e);
        }
        let h = &mut self.hosts[host];
        let manager = h.manager.as_mut().expect("on-line host has a manager");
        let (decision, record) = manager.cycle(h.me.id.0, now, &events);
        self.manager_log.push(record);
        self.stats.manager_cycles += 1;
        let cycle = manager.config().cycle_duration;
        self.clock.schedule_in(cycle, Ev::Cycle { host, inc });

        if !ready || busy {
            return;
        }
        if decision.immediate_maintenance {
            self.start_maintenance(host);
        } else if record.interval_after != record.interval_before {
            let at = (self.hosts[host].last_done + decision.new_interval).max(now);
            self.schedule_maintenance(host, at);
        }
    }

    // -----------------------------------------------------------------
    // Workload executor
    // -----------------------------------------------------------------

    fn issue_group(&mut self) {
        let Some(group) = self.plan.get(self.next_group).cloned() else {
            return;
        };
        self.next_group += 1;
        self.outstanding = group.keys.len();
        let now = self.now();
        for raw in group.keys {
            let key = self.cfg.chord.space.truncate(raw);
            self.issue(key, now);
        }
    }

    /// Next on-line, joined host after the rotating cursor.
    fn entry_host(&mut self) -> Option<usize> {
        let n = self.cfg.node_count;
        let found = (0..n).map(|k| (self.cursor + k) % n).find(|&i| {
            let h = &self.hosts[i];
            h.online && h.node.as_ref().is_some_and(|nd| nd.is_joined() && !nd.is_joining())
        })?;
        self.cursor = (found + 1) % n;
        Some(found)
    }

    fn issue(&mut self, key: NodeId, first_start: f64) {
        let Some(host) = self.entry_host() else {
            // No usable entry point yet; try again shortly.
            self.clock.schedule_in(1.0, Ev::Issue { key, first_start });
            return;
        };
        let now = self.now();
        let inc = self.hosts[host].inc;
        let id = self.node(host).start_lookup(key);
        self.inflight.insert(
            (host, inc, id),
            Slot {
                key,
                start: now,
                first_start,
            },
        );
        self.pump(host);
    }

    fn lookup_finished(&mut self, slot: Slot, now: f64, outcome: std::result::Result<(), &'static str>) {
        match outcome {
            Err(_) if self.cfg.retry_on_error => {
                self.clock.schedule_in(
                    0.0,
                    Ev::Issue {
                        key: slot.key,
                        first_start: slot.first_start,
                    },
                );
                return;
            }
            Ok(()) => self.stats.lookups_ok += 1,
            Err(_) => self.stats.lookups_failed += 1,
        }
        let start = if self.cfg.retry_on_error { slot.first_start } else { slot.start };
        self.lookups.push(LookupRecord {
            start,
            end: now,
            key: slot.key.0,
            success: outcome.is_ok(),
            error_kind: outcome.err().map(str::to_string),
        });
        self.outstanding -= 1;
        if self.outstanding > 0 {
            return;
        }
        match self.plan.get(self.next_group) {
            Some(g) => {
                let delay = g.delay;
                self.clock.schedule_in(delay, Ev::Group);
            }
            None => {
                self.workload_done = Some(now);
                let w = self.cfg.window;
                self.end = self.cfg.horizon.min((now / w).ceil() * w + w);
            }
        }
    }

    /// Live-membership oracle: the first on-line joined host at or after `key`.
    fn live_owner(&self, key: NodeId) -> Option<Address> {
        self.hosts
            .iter()
            .filter(|h| h.online && h.node.as_ref().is_some_and(|n| n.is_joined()))
            .min_by_key(|h| key.distance_to(h.me.id))
            .map(|h| h.me.addr)
    }
}

fn count_event(stats: &mut SimStats, e: &ManagerEvent) {
    match e.kind {
        EventKind::AccessError => stats.access_error_events += 1,
        EventKind::WastedMaintenance => stats.wasted_events += 1,
    }
}
