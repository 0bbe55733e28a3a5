//! Membership churn: per-node alternating on-line/off-line phases.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::substream;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChurnKind {
    Low,
    High,
    /// A fixed quarter of the nodes churn slowly, the rest quickly.
    Local,
    /// The whole network alternates between slow and fast regimes.
    Temporal,
}

impl ChurnKind {
    pub const ALL: [ChurnKind; 4] = [ChurnKind::Low, ChurnKind::High, ChurnKind::Local, ChurnKind::Temporal];

    pub fn name(self) -> &'static str {
        match self {
            ChurnKind::Low => "low",
            ChurnKind::High => "high",
            ChurnKind::Local => "local",
            ChurnKind::Temporal => "temporal",
        }
    }
}

impl fmt::Display for ChurnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChurnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChurnKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown churn pattern '{s}'")))
    }
}

/// Normal distributions for phase durations, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseParams {
    pub on_mu: f64,
    pub on_sigma: f64,
    pub off_mu: f64,
    pub off_sigma: f64,
}

impl PhaseParams {
    pub const LOW: PhaseParams = PhaseParams {
        on_mu: 10_000.0,
        on_sigma: 0.0,
        off_mu: 160.0,
        off_sigma: 20.0,
    };
    pub const HIGH: PhaseParams = PhaseParams {
        on_mu: 200.0,
        on_sigma: 40.0,
        off_mu: 100.0,
        off_sigma: 20.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChurnPattern {
    pub kind: ChurnKind,
    pub low: PhaseParams,
    pub high: PhaseParams,
    pub local_low_fraction: f64,
    /// Length of each regime under temporal churn.
    pub temporal_phase: f64,
    /// Sampled durations are truncated below at this value.
    pub min_duration: f64,
}

impl ChurnPattern {
    pub fn new(kind: ChurnKind) -> Self {
        ChurnPattern {
            kind,
            low: PhaseParams::LOW,
            high: PhaseParams::HIGH,
            local_low_fraction: 0.25,
            temporal_phase: 1000.0,
            min_duration: 1.0,
        }
    }

    /// Nodes with index below this count churn slowly under `Local`.
    pub fn local_low_count(&self, node_count: usize) -> usize {
        (self.local_low_fraction * node_count as f64).ceil() as usize
    }

    pub fn node_class(&self, node_index: usize, node_count: usize) -> NodeClass {
        match self.kind {
            ChurnKind::Low => NodeClass::Low,
            ChurnKind::High => NodeClass::High,
            ChurnKind::Local if node_index < self.local_low_count(node_count) => NodeClass::Low,
            ChurnKind::Local => NodeClass::High,
            ChurnKind::Temporal => NodeClass::Varying,
        }
    }

    fn params_at(&self, class: NodeClass, t: f64) -> PhaseParams {
        match class {
            NodeClass::Low => self.low,
            NodeClass::High => self.high,
            NodeClass::Varying => {
                if (t / self.temporal_phase).floor() as u64 % 2 == 0 {
                    self.low
                } else {
                    self.high
                }
            }
        }
    }

    fn draw<R: Rng>(&self, p: &PhaseParams, online: bool, rng: &mut R) -> f64 {
        let (mu, sigma) = if online { (p.on_mu, p.on_sigma) } else { (p.off_mu, p.off_sigma) };
        let x = Normal::new(mu, sigma).expect("finite sigma").sample(rng);
        x.max(self.min_duration)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    Low,
    High,
    Varying,
}

impl NodeClass {
    pub fn name(self) -> &'static str {
        match self {
            NodeClass::Low => "low",
            NodeClass::High => "high",
            NodeClass::Varying => "varying",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub start: f64,
    pub duration: f64,
    pub online: bool,
}

impl Phase {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// Alternating phases covering `[0, horizon]`; the last phase may run past
/// the horizon. Whether a node starts on-line comes from its own substream.
/// Under temporal churn a phase still running at a regime boundary is cut
/// there and its remainder redrawn from the new regime, same on/off state.
pub fn generate_lifecycle(
    pattern: &ChurnPattern,
    node_index: usize,
    node_count: usize,
    seed: u64,
    horizon: f64,
) -> Vec<Phase> {
    let class = pattern.node_class(node_index, node_count);
    let mut start_rng = substream(seed, "start-phase", node_index as u64);
    let mut rng = substream(seed, "churn", node_index as u64);
    let mut online = start_rng.random_bool(0.5);
    let mut t = 0.0;
    let mut phases = Vec::new();
    while t < horizon || phases.is_empty() {
        let mut duration = pattern.draw(&pattern.params_at(class, t), online, &mut rng);
        if class == NodeClass::Varying {
            let mut boundary = ((t / pattern.temporal_phase).floor() + 1.0) * pattern.temporal_phase;
            while t + duration > boundary {
                let rest = pattern.draw(&pattern.params_at(class, boundary), online, &mut rng);
                duration = boundary - t + rest;
                boundary += pattern.temporal_phase;
            }
        }
        let phase = Phase { start: t, duration, online };
        phases.push(phase);
        t = phase.end();
        online = !online;
    }
    phases
}
