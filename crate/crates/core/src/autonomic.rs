//! Per-node autonomic manager for the maintenance interval.
//!
//! Each cycle the manager counts the node's monitoring events into two
//! metrics: the wasted maintenance count (maintenance passes that changed
//! nothing) and the error count (failed accesses to peers). Two sub-policies
//! turn those counts into recommended intervals:
//!
//! ```text
//! P            = 1 - 1 / ((metric - 0) / k + 1)
//! wmc interval = current * (1 + P_wmc)      // relax when effort is wasted
//! ec interval  = current * (1 - P_ec)       // tighten when peers fail
//! ```
//!
//! The applied interval is the arithmetic mean of the two, clamped to the
//! configured bounds. Any error in the cycle also requests an immediate
//! maintenance pass. The null policy runs the same loop but never changes
//! the interval.

use serde::{Deserialize, Serialize};

use crate::chord::{EventKind, ManagerEvent};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    NullPolicy,
    Autonomic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub mode: PolicyMode,
    pub k_wmc: f64,
    pub k_ec: f64,
    pub cycle_duration: f64,
    pub initial_interval: f64,
    pub interval_min: f64,
    pub interval_max: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self::policy0()
    }
}

impl PolicyConfig {
    pub const DEFAULT_CYCLE: f64 = 2.0;
    pub const DEFAULT_INTERVAL: f64 = 2.0;
    pub const DEFAULT_MIN: f64 = 0.25;
    pub const DEFAULT_MAX: f64 = 600.0;

    fn with(mode: PolicyMode, k_wmc: f64, k_ec: f64) -> Self {
        PolicyConfig {
            mode,
            k_wmc,
            k_ec,
            cycle_duration: Self::DEFAULT_CYCLE,
            initial_interval: Self::DEFAULT_INTERVAL,
            interval_min: Self::DEFAULT_MIN,
            interval_max: Self::DEFAULT_MAX,
        }
    }

    /// Null policy: invoked every cycle, never changes the interval.
    pub fn policy0() -> Self {
        Self::with(PolicyMode::NullPolicy, 1.0, 1.0)
    }

    /// Relaxed policy (`k_wmc = 8`, `k_ec = 32`).
    pub fn policy1() -> Self {
        Self::with(PolicyMode::Autonomic, 8.0, 32.0)
    }

    /// Aggressive policy (`k_wmc = k_ec = 1`).
    pub fn policy2() -> Self {
        Self::with(PolicyMode::Autonomic, 1.0, 1.0)
    }

    pub fn custom(k_wmc: f64, k_ec: f64) -> Self {
        Self::with(PolicyMode::Autonomic, k_wmc, k_ec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.k_wmc > 0.0 && self.k_ec > 0.0) {
            return bad("dampening factors must be positive");
        }
        if !(self.cycle_duration > 0.0) {
            return bad("cycle duration must be positive");
        }
        if !(0.0 < self.interval_min
            && self.interval_min <= self.initial_interval
            && self.initial_interval <= self.interval_max)
        {
            return bad("interval bounds must satisfy 0 < min <= initial <= max");
        }
        Ok(())
    }
}

/// Event counts for one autonomic cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleMetrics {
    pub wmc: u32,
    pub ec: u32,
}

impl CycleMetrics {
    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a ManagerEvent>) -> Self {
        let mut m = CycleMetrics::default();
        for e in events {
            match e.kind {
                EventKind::WastedMaintenance => m.wmc += 1,
                EventKind::AccessError => m.ec += 1,
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleDecision {
    pub new_interval: f64,
    pub immediate_maintenance: bool,
}

/// Proportion of change for a metric whose ideal value is zero.
pub fn change_proportion(metric: f64, k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::InvalidArgument(format!("dampening factor must be > 0, got {k}")));
    }
    if !(metric >= 0.0) {
        return Err(Error::InvalidArgument(format!("metric must be >= 0, got {metric}")));
    }
    Ok(1.0 - 1.0 / (metric / k + 1.0))
}

fn check_current(current: f64) -> Result<()> {
    if current > 0.0 && current.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("interval must be positive, got {current}")))
    }
}

/// Wasted-maintenance sub-policy: lengthens the interval.
pub fn recommend_interval_wmc(current: f64, wmc: u32, k_wmc: f64) -> Result<f64> {
    check_current(current)?;
    Ok(current * (1.0 + change_proportion(wmc as f64, k_wmc)?))
}

/// Error-count sub-policy: shortens the interval. Never reaches zero since `P < 1`.
pub fn recommend_interval_ec(current: f64, ec: u32, k_ec: f64) -> Result<f64> {
    check_current(current)?;
    Ok(current * (1.0 - change_proportion(ec as f64, k_ec)?))
}

pub fn evaluate_cycle(current: f64, metrics: CycleMetrics, cfg: &PolicyConfig) -> Result<CycleDecision> {
    match cfg.mode {
        PolicyMode::NullPolicy => Ok(CycleDecision {
            new_interval: current,
            immediate_maintenance: false,
        }),
        PolicyMode::Autonomic => {
            let relax = recommend_interval_wmc(current, metrics.wmc, cfg.k_wmc)?;
            let tighten = recommend_interval_ec(current, metrics.ec, cfg.k_ec)?;
            let mean = (relax + tighten) / 2.0;
            Ok(CycleDecision {
                new_interval: mean.clamp(cfg.interval_min, cfg.interval_max),
                immediate_maintenance: metrics.ec > 0,
            })
        }
    }
}

/// One row of the per-cycle manager log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub time: f64,
    pub node: u64,
    pub wmc: u32,
    pub ec: u32,
    pub interval_before: f64,
    pub interval_after: f64,
    pub immediate: bool,
}

/// Manager state attached to one node incarnation.
#[derive(Debug, Clone)]
pub struct AutonomicManager {
    cfg: PolicyConfig,
    interval: f64,
}

impl AutonomicManager {
    /// A fresh manager starts from the configured initial interval.
    pub fn new(cfg: PolicyConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(AutonomicManager {
            interval: cfg.initial_interval,
            cfg,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn interval(&self) -> f64 {
        self.interval
    }

    /// Monitor, analyse, plan: aggregates the drained events and updates the
    /// interval. Executing the decision is up to the caller.
    pub fn cycle(&mut self, node: u64, time: f64, events: &[ManagerEvent]) -> (CycleDecision, CycleRecord) {
        let metrics = CycleMetrics::from_events(events);
        let before = self.interval;
        // `before` is always within bounds and the factors were validated.
        let decision = evaluate_cycle(before, metrics, &self.cfg).expect("validated policy");
        self.interval = decision.new_interval;
        let record = CycleRecord {
            time,
            node,
            wmc: metrics.wmc,
            ec: metrics.ec,
            interval_before: before,
            interval_after: decision.new_interval,
            immediate: decision.immediate_maintenance,
        };
        (decision, record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chord::EventContext;
    use crate::ring::NodeId;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn proportion_examples() {
        for k in [1.0, 8.0, 32.0] {
            assert_eq!(change_proportion(0.0, k).unwrap(), 0.0);
        }
        assert_eq!(change_proportion(1.0, 1.0).unwrap(), 0.5);
        assert_eq!(change_proportion(32.0, 32.0).unwrap(), 0.5);
        assert_relative_eq!(change_proportion(32.0, 1.0).unwrap(), 32.0 / 33.0, epsilon = 1e-12);
        assert!(change_proportion(1.0, 0.0).is_err());
        assert!(change_proportion(1.0, -2.0).is_err());
    }

    #[test]
    fn sub_policy_examples() {
        assert_eq!(recommend_interval_wmc(2.0, 0, 1.0).unwrap(), 2.0);
        assert_eq!(recommend_interval_wmc(2.0, 1, 1.0).unwrap(), 3.0);
        assert_eq!(recommend_interval_wmc(2.0, 8, 8.0).unwrap(), 3.0);
        assert_eq!(recommend_interval_ec(2.0, 0, 1.0).unwrap(), 2.0);
        assert_eq!(recommend_interval_ec(2.0, 1, 1.0).unwrap(), 1.0);
        assert_eq!(recommend_interval_ec(10.0, 32, 32.0).unwrap(), 5.0);
        assert!(recommend_interval_ec(0.0, 1, 1.0).is_err());
    }

    #[test]
    fn cycle_examples() {
        let p2 = PolicyConfig::policy2();
        let d = evaluate_cycle(2.0, CycleMetrics { wmc: 1, ec: 0 }, &p2).unwrap();
        assert_eq!(d, CycleDecision { new_interval: 2.5, immediate_maintenance: false });
        let d = evaluate_cycle(2.0, CycleMetrics { wmc: 0, ec: 1 }, &p2).unwrap();
        assert_eq!(d, CycleDecision { new_interval: 1.5, immediate_maintenance: true });
        let d = evaluate_cycle(2.0, CycleMetrics::default(), &p2).unwrap();
        assert_eq!(d, CycleDecision { new_interval: 2.0, immediate_maintenance: false });

        let p0 = PolicyConfig::policy0();
        let d = evaluate_cycle(2.0, CycleMetrics { wmc: 5, ec: 3 }, &p0).unwrap();
        assert_eq!(d, CycleDecision { new_interval: 2.0, immediate_maintenance: false });
    }

    #[test]
    fn clamped_to_bounds() {
        let p2 = PolicyConfig::policy2();
        let d = evaluate_cycle(599.0, CycleMetrics { wmc: 50, ec: 0 }, &p2).unwrap();
        assert_eq!(d.new_interval, 600.0);
        let d = evaluate_cycle(0.3, CycleMetrics { wmc: 0, ec: 50 }, &p2).unwrap();
        assert_eq!(d.new_interval, 0.25);
    }

    #[test]
    fn validation() {
        assert!(PolicyConfig::custom(0.0, 1.0).validate().is_err());
        let mut c = PolicyConfig::policy1();
        c.interval_min = 3.0;
        assert!(c.validate().is_err());
        assert!(PolicyConfig::policy1().validate().is_ok());
    }

    fn ev(kind: EventKind) -> ManagerEvent {
        let context = match kind {
            EventKind::WastedMaintenance => EventContext::Maintenance,
            EventKind::AccessError => EventContext::Routing,
        };
        ManagerEvent { kind, node: NodeId(7), time: 1.0, context }
    }

    #[test]
    fn manager_cycle_drains_counts() {
        let mut m = AutonomicManager::new(PolicyConfig::policy2()).unwrap();
        let events = vec![ev(EventKind::AccessError); 3];
        let (d, rec) = m.cycle(7, 2.0, &events);
        assert!(d.immediate_maintenance);
        assert!(d.new_interval < 2.0);
        assert_eq!((rec.wmc, rec.ec), (0, 3));
        assert_eq!(m.interval(), d.new_interval);

        let mut m0 = AutonomicManager::new(PolicyConfig::policy0()).unwrap();
        let (d, _) = m0.cycle(7, 2.0, &[]);
        assert_eq!(d.new_interval, 2.0);
        assert!(!d.immediate_maintenance);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn proportion_monotone(m in 0u32..10_000, k in 0.01f64..1000.0) {
            let p = change_proportion(m as f64, k).unwrap();
            let p_next = change_proportion(m as f64 + 1.0, k).unwrap();
            let p_stiffer = change_proportion(m as f64, k * 1.5).unwrap();
            prop_assert!((0.0..1.0).contains(&p));
            prop_assert!(p_next > p);
            if m > 0 {
                prop_assert!(p_stiffer < p);
            }
        }
    }

    proptest! {
        #[test]
        fn fixpoint_and_opposition(current in 0.25f64..600.0, n in 1u32..100, k_w in 0.1f64..64.0, k_e in 0.1f64..64.0) {
            let mut cfg = PolicyConfig::custom(k_w, k_e);
            cfg.interval_min = 1e-9;
            cfg.interval_max = 1e9;
            let d = evaluate_cycle(current, CycleMetrics::default(), &cfg).unwrap();
            prop_assert_eq!(d.new_interval, current);
            let up = evaluate_cycle(current, CycleMetrics { wmc: n, ec: 0 }, &cfg).unwrap();
            prop_assert!(up.new_interval > current);
            let down = evaluate_cycle(current, CycleMetrics { wmc: 0, ec: n }, &cfg).unwrap();
            prop_assert!(down.new_interval < current && down.new_interval > 0.0);
        }

        #[test]
        fn larger_k_moves_less(current in 0.25f64..600.0, wmc in 0u32..50, ec in 0u32..50, k in 0.1f64..32.0) {
            prop_assume!(wmc + ec > 0);
            let mut loose = PolicyConfig::custom(k, k);
            let mut stiff = PolicyConfig::custom(k * 2.0, k);
            let mut stiff_ec = PolicyConfig::custom(k, k * 2.0);
            for c in [&mut loose, &mut stiff, &mut stiff_ec] {
                c.interval_min = 1e-9;
                c.interval_max = 1e9;
            }
            let m = CycleMetrics { wmc, ec };
            let base = evaluate_cycle(current, m, &loose).unwrap().new_interval;
            let a = evaluate_cycle(current, m, &stiff).unwrap().new_interval;
            let b = evaluate_cycle(current, m, &stiff_ec).unwrap().new_interval;
            // Raising k_wmc weakens the upward push; raising k_ec weakens the downward push.
            if wmc > 0 { prop_assert!(a < base); } else { prop_assert_eq!(a, base); }
            if ec > 0 { prop_assert!(b > base); } else { prop_assert_eq!(b, base); }
        }

        #[test]
        fn within_bounds(current in 0.25f64..=600.0, wmc in 0u32..1000, ec in 0u32..1000) {
            let cfg = PolicyConfig::policy2();
            let d = evaluate_cycle(current, CycleMetrics { wmc, ec }, &cfg).unwrap();
            prop_assert!(d.new_interval >= cfg.interval_min && d.new_interval <= cfg.interval_max);
        }

        #[test]
        fn aggressive_moves_at_least_as_far(current in 0.25f64..=600.0, metric in 0u32..100, on_wmc: bool) {
            // Only one signal at a time: with both non-zero the two
            // sub-policies partly cancel and the ordering need not hold.
            let m = if on_wmc { CycleMetrics { wmc: metric, ec: 0 } } else { CycleMetrics { wmc: 0, ec: metric } };
            let mut p1 = PolicyConfig::policy1();
            let mut p2 = PolicyConfig::policy2();
            for c in [&mut p1, &mut p2] {
                c.interval_min = 1e-9;
                c.interval_max = 1e9;
            }
            let d1 = evaluate_cycle(current, m, &p1).unwrap().new_interval - current;
            let d2 = evaluate_cycle(current, m, &p2).unwrap().new_interval - current;
            prop_assert!(d2.abs() >= d1.abs());
        }
    }
}
