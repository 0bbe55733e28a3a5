//! Experiment-matrix configuration files.
//!
//! A line-oriented `key = value` format with `[section]` headers. `#` and
//! `;` start comments; blank lines are ignored. Lists are comma-separated.
//!
//! ```text
//! [matrix]
//! workloads = light, heavy, variable, file_system
//! churns = low, high, local, temporal
//! policies = policy0, policy1, policy2, gentle
//! seed = 42
//! repeats = 3
//!
//! [policy.gentle]
//! k_wmc = 4
//! k_ec = 16
//!
//! [network]
//! service_time = 0.02
//! ```
//!
//! Sections: `matrix`, `network`, `autonomic`, `churn`, `workload.<kind>`
//! and `policy.<name>`. Every key is optional; see [`MatrixConfig`] for
//! defaults. Unknown sections and keys are errors.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::autonomic::PolicyConfig;
use crate::error::{Error, Result};
use crate::ring::IdSpace;
use crate::simnet::{ChurnKind, ChurnPattern, ExperimentConfig, NetworkModel, WorkloadKind, WorkloadSpec};

/// Name of the unmanaged policy every cell is normalized against.
pub const BASELINE_POLICY: &str = "policy0";

/// A named scheduling policy.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedPolicy {
    pub name: String,
    pub config: PolicyConfig,
}

impl NamedPolicy {
    pub fn builtin(name: &str) -> Option<Self> {
        let config = match name {
            "policy0" => PolicyConfig::policy0(),
            "policy1" => PolicyConfig::policy1(),
            "policy2" => PolicyConfig::policy2(),
            _ => return None,
        };
        Some(NamedPolicy { name: name.to_string(), config })
    }

    pub fn is_baseline(&self) -> bool {
        self.name == BASELINE_POLICY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixConfig {
    pub workloads: Vec<WorkloadSpec>,
    pub churns: Vec<ChurnPattern>,
    /// The baseline `policy0` is always present.
    pub policies: Vec<NamedPolicy>,
    pub seed: u64,
    pub repeats: usize,
    pub node_count: usize,
    pub horizon: f64,
    pub window: f64,
    pub workload_start: f64,
    pub retry_on_error: bool,
    pub id_bits: u32,
    pub output_dir: Option<PathBuf>,
    /// Write lookups/traffic/manager logs for every run.
    pub raw_logs: bool,
    pub network: NetworkModel,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            workloads: WorkloadKind::ALL.iter().map(|k| WorkloadSpec::new(*k)).collect(),
            churns: ChurnKind::ALL.iter().map(|k| ChurnPattern::new(*k)).collect(),
            policies: ["policy0", "policy1", "policy2"]
                .iter()
                .map(|n| NamedPolicy::builtin(n).unwrap())
                .collect(),
            seed: 1,
            repeats: 3,
            node_count: 16,
            horizon: 7200.0,
            window: crate::metrics::WINDOW,
            workload_start: 30.0,
            retry_on_error: false,
            id_bits: crate::ring::DEFAULT_BITS,
            output_dir: None,
            raw_logs: true,
            network: NetworkModel::default(),
        }
    }
}

/// Identifies one matrix cell: `workload/churn/policy`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    pub workload: WorkloadKind,
    pub churn: ChurnKind,
    pub policy: String,
}

impl std::fmt::Display for CellId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.workload, self.churn, self.policy)
    }
}

impl FromStr for CellId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('/').collect();
        let [w, c, p] = parts[..] else {
            return Err(Error::InvalidArgument(format!("cell '{s}' is not workload/churn/policy")));
        };
        Ok(CellId {
            workload: w.parse()?,
            churn: c.parse()?,
            policy: p.to_string(),
        })
    }
}

impl MatrixConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        Parser::new(path).parse(text)
    }

    pub fn cells(&self) -> Vec<CellId> {
        let mut out = Vec::new();
        for w in &self.workloads {
            for c in &self.churns {
                for p in &self.policies {
                    out.push(CellId {
                        workload: w.kind,
                        churn: c.kind,
                        policy: p.name.clone(),
                    });
                }
            }
        }
        out
    }

    pub fn policy(&self, name: &str) -> Option<&NamedPolicy> {
        self.policies.iter().find(|p| p.name == name)
    }

    /// Seed shared by every policy of a (workload, churn) pair, so that
    /// policies are compared on identical churn and key sequences.
    pub fn cell_seed(&self, workload: WorkloadKind, churn: ChurnKind) -> u64 {
        let tag = format!("{}/{}", workload.name(), churn.name());
        xxhash_rust::xxh3::xxh3_64_with_seed(tag.as_bytes(), self.seed)
    }

    pub fn experiment(&self, cell: &CellId, repeat: usize) -> Result<ExperimentConfig> {
        let workload = *self
            .workloads
            .iter()
            .find(|w| w.kind == cell.workload)
            .ok_or_else(|| Error::InvalidArgument(format!("workload {} not in matrix", cell.workload)))?;
        let churn = *self
            .churns
            .iter()
            .find(|c| c.kind == cell.churn)
            .ok_or_else(|| Error::InvalidArgument(format!("churn {} not in matrix", cell.churn)))?;
        let policy = self
            .policy(&cell.policy)
            .ok_or_else(|| Error::InvalidArgument(format!("policy {} not in matrix", cell.policy)))?;
        let mut cfg = ExperimentConfig::new(
            cell.workload,
            cell.churn,
            policy.config,
            self.cell_seed(cell.workload, cell.churn).wrapping_add(repeat as u64),
        );
        cfg.workload = workload;
        cfg.churn = churn;
        cfg.node_count = self.node_count;
        cfg.horizon = self.horizon;
        cfg.window = self.window;
        cfg.workload_start = self.workload_start;
        cfg.retry_on_error = self.retry_on_error;
        cfg.network = self.network;
        cfg.chord.space = IdSpace::new(self.id_bits)?;
        cfg.record_traffic = self.raw_logs;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::InvalidArgument("repeats must be >= 1".into()));
        }
        for cell in self.cells() {
            self.experiment(&cell, 0)?.validate()?;
        }
        Ok(())
    }
}

struct Parser<'a> {
    path: &'a Path,
    cfg: MatrixConfig,
    /// Custom policy definitions, resolved after the whole file is read.
    custom: Vec<(String, usize, Option<f64>, Option<f64>)>,
    policy_list: Option<(Vec<String>, usize)>,
    autonomic: PolicyConfig,
}

impl<'a> Parser<'a> {
    fn new(path: &'a Path) -> Self {
        Parser {
            path,
            cfg: MatrixConfig::default(),
            custom: Vec::new(),
            policy_list: None,
            autonomic: PolicyConfig::policy0(),
        }
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    fn parse(mut self, text: &str) -> Result<MatrixConfig> {
        let mut section = String::from("matrix");
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split(['#', ';']).next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| self.err(line, "unterminated section header"))?
                    .trim();
                self.open_section(name, line)?;
                section = name.to_string();
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| self.err(line, format!("expected key = value, got '{content}'")))?;
            self.entry(&section, key.trim(), value.trim(), line)?;
        }
        self.resolve_policies()?;
        let cfg = self.cfg;
        cfg.validate().map_err(|e| Error::Config {
            path: self.path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })?;
        Ok(cfg)
    }

    fn open_section(&mut self, name: &str, line: usize) -> Result<()> {
        match name {
            "matrix" | "network" | "autonomic" | "churn" => Ok(()),
            _ => {
                if let Some(kind) = name.strip_prefix("workload.") {
                    WorkloadKind::from_str(kind).map_err(|e| self.err(line, e.to_string()))?;
                    Ok(())
                } else if let Some(p) = name.strip_prefix("policy.") {
                    if p.is_empty() || NamedPolicy::builtin(p).is_some() {
                        return Err(self.err(line, format!("cannot redefine policy '{p}'")));
                    }
                    if self.custom.iter().any(|c| c.0 == p) {
                        return Err(self.err(line, format!("policy '{p}' defined twice")));
                    }
                    self.custom.push((p.to_string(), line, None, None));
                    Ok(())
                } else {
                    Err(self.err(line, format!("unknown section [{name}]")))
                }
            }
        }
    }

    fn num<T: FromStr>(&self, value: &str, line: usize, key: &str) -> Result<T> {
        value
            .parse()
            .map_err(|_| self.err(line, format!("invalid value '{value}' for {key}")))
    }

    fn boolean(&self, value: &str, line: usize, key: &str) -> Result<bool> {
        match value {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(self.err(line, format!("invalid boolean '{value}' for {key}"))),
        }
    }

    fn list<T: FromStr<Err = Error>>(&self, value: &str, line: usize) -> Result<Vec<T>> {
        let items: Vec<T> = value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e: Error| self.err(line, e.to_string())))
            .collect::<Result<_>>()?;
        if items.is_empty() {
            return Err(self.err(line, "empty list"));
        }
        Ok(items)
    }

    fn entry(&mut self, section: &str, key: &str, value: &str, line: usize) -> Result<()> {
        match section {
            "matrix" => self.matrix_entry(key, value, line),
            "network" => {
                let v: f64 = self.num(value, line, key)?;
                let n = &mut self.cfg.network;
                match key {
                    "base_latency" => n.base_latency = v,
                    "per_byte" => n.per_byte = v,
                    "jitter" => n.jitter = v,
                    "rpc_timeout" => n.rpc_timeout = v,
                    "service_time" => n.service_time = v,
                    _ => return Err(self.unknown(key, line)),
                }
                Ok(())
            }
            "autonomic" => {
                let v: f64 = self.num(value, line, key)?;
                let a = &mut self.autonomic;
                match key {
                    "cycle_duration" => a.cycle_duration = v,
                    "initial_interval" => a.initial_interval = v,
                    "interval_min" => a.interval_min = v,
                    "interval_max" => a.interval_max = v,
                    _ => return Err(self.unknown(key, line)),
                }
                Ok(())
            }
            "churn" => {
                let v: f64 = self.num(value, line, key)?;
                for c in &mut self.cfg.churns {
                    match key {
                        "local_low_fraction" => c.local_low_fraction = v,
                        "temporal_phase" => c.temporal_phase = v,
                        "min_duration" => c.min_duration = v,
                        _ => return Err(self.unknown(key, line)),
                    }
                }
                if !(0.0..=1.0).contains(&v) && key == "local_low_fraction" {
                    return Err(self.err(line, "local_low_fraction must lie in [0, 1]"));
                }
                if v <= 0.0 && key != "local_low_fraction" {
                    return Err(self.err(line, format!("{key} must be positive")));
                }
                Ok(())
            }
            s if s.starts_with("workload.") => {
                let kind: WorkloadKind = s["workload.".len()..].parse()?;
                self.workload_entry(kind, key, value, line)
            }
            s if s.starts_with("policy.") => {
                let v: f64 = self.num(value, line, key)?;
                if !(v > 0.0) {
                    return Err(self.err(line, format!("{key} must be > 0")));
                }
                let c = self.custom.last_mut().expect("section opened");
                match key {
                    "k_wmc" => c.2 = Some(v),
                    "k_ec" => c.3 = Some(v),
                    _ => return Err(self.unknown(key, line)),
                }
                Ok(())
            }
            _ => unreachable!("sections are checked when opened"),
        }
    }

    fn unknown(&self, key: &str, line: usize) -> Error {
        self.err(line, format!("unknown key '{key}'"))
    }

    fn matrix_entry(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "workloads" => {
                let kinds: Vec<WorkloadKind> = self.list(value, line)?;
                self.cfg.workloads = kinds.into_iter().map(WorkloadSpec::new).collect();
            }
            "churns" => {
                let kinds: Vec<ChurnKind> = self.list(value, line)?;
                let template = self.cfg.churns[0];
                self.cfg.churns = kinds
                    .into_iter()
                    .map(|kind| ChurnPattern { kind, ..template })
                    .collect();
            }
            "policies" => {
                let names: Vec<String> = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                if names.is_empty() {
                    return Err(self.err(line, "empty list"));
                }
                self.policy_list = Some((names, line));
            }
            "seed" => self.cfg.seed = self.num(value, line, key)?,
            "repeats" => {
                self.cfg.repeats = self.num(value, line, key)?;
                if self.cfg.repeats == 0 {
                    return Err(self.err(line, "repeats must be >= 1"));
                }
            }
            "node_count" => {
                self.cfg.node_count = self.num(value, line, key)?;
                if self.cfg.node_count == 0 {
                    return Err(self.err(line, "node_count must be >= 1"));
                }
            }
            "horizon" => self.cfg.horizon = self.positive(value, line, key)?,
            "window" => self.cfg.window = self.positive(value, line, key)?,
            "workload_start" => self.cfg.workload_start = self.num(value, line, key)?,
            "retry_on_error" => self.cfg.retry_on_error = self.boolean(value, line, key)?,
            "raw_logs" => self.cfg.raw_logs = self.boolean(value, line, key)?,
            "id_bits" => {
                let bits: u32 = self.num(value, line, key)?;
                IdSpace::new(bits).map_err(|e| self.err(line, e.to_string()))?;
                self.cfg.id_bits = bits;
            }
            "output_dir" => self.cfg.output_dir = Some(PathBuf::from(value)),
            _ => return Err(self.unknown(key, line)),
        }
        Ok(())
    }

    fn positive(&self, value: &str, line: usize, key: &str) -> Result<f64> {
        let v: f64 = self.num(value, line, key)?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(line, format!("{key} must be positive")))
        }
    }

    fn workload_entry(&mut self, kind: WorkloadKind, key: &str, value: &str, line: usize) -> Result<()> {
        let int = |p: &Self| -> Result<usize> { p.num(value, line, key) };
        let real = |p: &Self| -> Result<f64> { p.num(value, line, key) };
        let mut spec = self
            .cfg
            .workloads
            .iter()
            .find(|w| w.kind == kind)
            .copied()
            .unwrap_or_else(|| WorkloadSpec::new(kind));
        match key {
            "total_lookups" => spec.total_lookups = int(self)?,
            "gap" => spec.gap = real(self)?,
            "batch_size" => spec.batch_size = int(self)?,
            "parallelism" => spec.parallelism = int(self)?,
            "min_parallelism" => spec.min_parallelism = int(self)?,
            "max_run" => spec.max_run = int(self)?,
            "think_mean" => spec.think_mean = real(self)?,
            "burst_probability" => spec.burst_probability = real(self)?,
            _ => return Err(self.unknown(key, line)),
        }
        spec.validate().map_err(|e| self.err(line, e.to_string()))?;
        if let Some(w) = self.cfg.workloads.iter_mut().find(|w| w.kind == kind) {
            *w = spec;
        }
        Ok(())
    }

    fn resolve_policies(&mut self) -> Result<()> {
        let a = self.autonomic;
        let shared = |mut p: PolicyConfig| {
            p.cycle_duration = a.cycle_duration;
            p.initial_interval = a.initial_interval;
            p.interval_min = a.interval_min;
            p.interval_max = a.interval_max;
            p
        };
        let mut defined: Vec<NamedPolicy> = Vec::new();
        for (name, line, k_wmc, k_ec) in &self.custom {
            let (Some(k_wmc), Some(k_ec)) = (k_wmc, k_ec) else {
                return Err(self.err(*line, format!("policy '{name}' needs both k_wmc and k_ec")));
            };
            defined.push(NamedPolicy {
                name: name.clone(),
                config: PolicyConfig::custom(*k_wmc, *k_ec),
            });
        }
        let (names, line) = self
            .policy_list
            .clone()
            .unwrap_or_else(|| (vec!["policy0".into(), "policy1".into(), "policy2".into()], 0));
        let mut out: Vec<NamedPolicy> = Vec::new();
        for name in names {
            if out.iter().any(|p| p.name == name) {
                return Err(self.err(line, format!("policy '{name}' listed twice")));
            }
            let p = NamedPolicy::builtin(&name)
                .or_else(|| defined.iter().find(|d| d.name == name).cloned())
                .ok_or_else(|| self.err(line, format!("unknown policy '{name}'")))?;
            out.push(p);
        }
        if !out.iter().any(NamedPolicy::is_baseline) {
            // Normalization needs the unmanaged baseline.
            out.insert(0, NamedPolicy::builtin("policy0").unwrap());
        }
        for p in &mut out {
            p.config = shared(p.config);
            p.config.validate().map_err(|e| self.err(line, e.to_string()))?;
        }
        self.cfg.policies = out;
        Ok(())
    }
}
