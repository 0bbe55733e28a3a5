//! Lookup workloads as a plan of groups.
//!
//! A group is a set of lookups issued at the same instant. The executor waits
//! for every lookup of a group to finish, sleeps for the next group's
//! `delay`, then issues it. Sequential workloads are groups of one.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::substream;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    Light,
    Heavy,
    Variable,
    FileSystem,
}

impl WorkloadKind {
    pub const ALL: [WorkloadKind; 4] = [
        WorkloadKind::Light,
        WorkloadKind::Heavy,
        WorkloadKind::Variable,
        WorkloadKind::FileSystem,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WorkloadKind::Light => "light",
            WorkloadKind::Heavy => "heavy",
            WorkloadKind::Variable => "variable",
            WorkloadKind::FileSystem => "file_system",
        }
    }
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WorkloadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WorkloadKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown workload '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub total_lookups: usize,
    /// Pause between consecutive lookups (light) or after each batch (variable).
    pub gap: f64,
    pub batch_size: usize,
    /// Largest parallel burst (file_system only).
    pub parallelism: usize,
    pub min_parallelism: usize,
    /// Sequential run lengths are uniform in `1..=max_run`.
    pub max_run: usize,
    /// Mean of the exponential think time before each group (file_system).
    pub think_mean: f64,
    /// Probability that the next file_system segment is a parallel burst.
    pub burst_probability: f64,
}

impl WorkloadSpec {
    pub fn new(kind: WorkloadKind) -> Self {
        let base = WorkloadSpec {
            kind,
            total_lookups: 0,
            gap: 0.0,
            batch_size: 1,
            parallelism: 1,
            min_parallelism: 1,
            max_run: 1,
            think_mean: 0.0,
            burst_probability: 0.0,
        };
        match kind {
            WorkloadKind::Light => WorkloadSpec { total_lookups: 10, gap: 300.0, ..base },
            WorkloadKind::Heavy => WorkloadSpec { total_lookups: 6000, ..base },
            WorkloadKind::Variable => WorkloadSpec {
                total_lookups: 1000,
                gap: 300.0,
                batch_size: 100,
                ..base
            },
            WorkloadKind::FileSystem => WorkloadSpec {
                total_lookups: 15_000,
                parallelism: 4,
                min_parallelism: 2,
                max_run: 10,
                think_mean: 0.05,
                burst_probability: 0.5,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.gap >= 0.0
            && self.batch_size >= 1
            && self.min_parallelism >= 1
            && self.parallelism >= self.min_parallelism
            && self.max_run >= 1
            && self.think_mean >= 0.0
            && (0.0..=1.0).contains(&self.burst_probability);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid workload {self:?}")))
        }
    }

    /// Expands the workload into groups. Keys are raw 64-bit values from the
    /// workload-keys substream; timing draws use a separate substream so
    /// that the key sequence depends only on the seed.
    pub fn plan(&self, seed: u64) -> Vec<Group> {
        let mut keys = substream(seed, "workload-keys", 0);
        let mut shape = substream(seed, "workload-shape", 0);
        let mut groups = Vec::new();
        let mut issued = 0usize;
        let mut next_key = |n: usize| -> Vec<u64> { (0..n).map(|_| keys.random()).collect() };
        match self.kind {
            WorkloadKind::Light | WorkloadKind::Heavy => {
                for i in 0..self.total_lookups {
                    let delay = if i == 0 { 0.0 } else { self.gap };
                    groups.push(Group { delay, keys: next_key(1) });
                }
            }
            WorkloadKind::Variable => {
                for i in 0..self.total_lookups {
                    let delay = if i > 0 && i % self.batch_size == 0 { self.gap } else { 0.0 };
                    groups.push(Group { delay, keys: next_key(1) });
                }
            }
            WorkloadKind::FileSystem => {
                let think = (self.think_mean > 0.0).then(|| Exp::new(1.0 / self.think_mean).expect("positive rate"));
                let draw_think = |rng: &mut rand_chacha::ChaCha8Rng| think.map_or(0.0, |d| d.sample(rng));
                while issued < self.total_lookups {
                    let left = self.total_lookups - issued;
                    if shape.random_bool(self.burst_probability) {
                        let fan = shape.random_range(self.min_parallelism..=self.parallelism).min(left);
                        let delay = draw_think(&mut shape);
                        groups.push(Group { delay, keys: next_key(fan) });
                        issued += fan;
                    } else {
                        let run = shape.random_range(1..=self.max_run).min(left);
                        for _ in 0..run {
                            let delay = draw_think(&mut shape);
                            groups.push(Group { delay, keys: next_key(1) });
                        }
                        issued += run;
                    }
                }
                if let Some(g) = groups.first_mut() {
                    g.delay = 0.0;
                }
            }
        }
        groups
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    /// Wait after the previous group completes.
    pub delay: f64,
    pub keys: Vec<u64>,
}
