//! Evaluation metrics over raw run logs: expected lookup time, network
//! usage, per-window and whole-run forms, normalization and NSD.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default evaluation window in seconds.
pub const WINDOW: f64 = 300.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupRecord {
    pub start: f64,
    pub end: f64,
    pub key: u64,
    pub success: bool,
    pub error_kind: Option<String>,
}

impl LookupRecord {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficSample {
    pub time: f64,
    pub node: u64,
    pub bytes: u64,
}

/// How lookup time is derived from the records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EltMode {
    /// Retry-until-success expectation from success time, error time and rate.
    #[default]
    Expected,
    /// Lookups were retried by the executor; use measured durations.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub window_index: usize,
    /// Absent when no lookup started in the window succeeded.
    pub elt: Option<f64>,
    pub nu: f64,
    pub successes: usize,
    pub failures: usize,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleMetrics {
    pub elt: Option<f64>,
    pub nu: f64,
}

/// `t_lookup + sum_{i>=1} i * t_error * p^i`, in closed form
/// `t_lookup + t_error * p / (1 - p)^2`. Infinite at `p == 1`.
pub fn expected_lookup_time(t_lookup: f64, t_error: f64, p_error: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_error) {
        return Err(Error::InvalidArgument(format!("error rate must be in [0, 1], got {p_error}")));
    }
    if !(t_lookup >= 0.0 && t_error >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "times must be non-negative, got {t_lookup} and {t_error}"
        )));
    }
    if p_error == 0.0 {
        return Ok(t_lookup);
    }
    if p_error == 1.0 {
        return Ok(f64::INFINITY);
    }
    let q = 1.0 - p_error;
    Ok(t_lookup + t_error * p_error / (q * q))
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    ok: usize,
    ok_time: f64,
    failed: usize,
    failed_time: f64,
}

impl Tally {
    fn add(&mut self, r: &LookupRecord) {
        if r.success {
            self.ok += 1;
            self.ok_time += r.duration();
        } else {
            self.failed += 1;
            self.failed_time += r.duration();
        }
    }

    fn elt(&self, mode: EltMode) -> Option<f64> {
        if self.ok == 0 {
            return None;
        }
        match mode {
            EltMode::Direct => Some(self.ok_time / self.ok as f64),
            EltMode::Expected => {
                let t_lookup = self.ok_time / self.ok as f64;
                let t_error = if self.failed == 0 { 0.0 } else { self.failed_time / self.failed as f64 };
                let p = self.failed as f64 / (self.ok + self.failed) as f64;
                Some(expected_lookup_time(t_lookup, t_error, p).expect("tallies are in range"))
            }
        }
    }
}

/// Windows needed to cover `duration`; at least one.
pub fn window_count(duration: f64, window: f64) -> usize {
    ((duration / window).ceil() as usize).max(1)
}

fn bin(t: f64, window: f64, n: usize) -> usize {
    ((t / window).floor().max(0.0) as usize).min(n - 1)
}

pub fn window_metrics(
    lookups: &[LookupRecord],
    traffic: &[TrafficSample],
    window: f64,
    node_count: usize,
    duration: f64,
) -> Vec<WindowMetrics> {
    window_metrics_with(lookups, traffic, window, node_count, duration, EltMode::Expected)
}

/// Lookups are binned by start time, traffic by send time.
pub fn window_metrics_with(
    lookups: &[LookupRecord],
    traffic: &[TrafficSample],
    window: f64,
    node_count: usize,
    duration: f64,
    mode: EltMode,
) -> Vec<WindowMetrics> {
    let n = window_count(duration, window);
    let mut tallies = vec![Tally::default(); n];
    let mut bytes = vec![0u64; n];
    for r in lookups {
        tallies[bin(r.start, window, n)].add(r);
    }
    for s in traffic {
        bytes[bin(s.time, window, n)] += s.bytes;
    }
    (0..n)
        .map(|i| WindowMetrics {
            window_index: i,
            elt: tallies[i].elt(mode),
            nu: bytes[i] as f64 / (window * node_count as f64),
            successes: tallies[i].ok,
            failures: tallies[i].failed,
            bytes: bytes[i],
        })
        .collect()
}

pub fn single_value_metrics(
    lookups: &[LookupRecord],
    traffic: &[TrafficSample],
    node_count: usize,
    duration: f64,
) -> SingleMetrics {
    single_value_metrics_with(lookups, traffic, node_count, duration, EltMode::Expected)
}

pub fn single_value_metrics_with(
    lookups: &[LookupRecord],
    traffic: &[TrafficSample],
    node_count: usize,
    duration: f64,
    mode: EltMode,
) -> SingleMetrics {
    let mut t = Tally::default();
    lookups.iter().for_each(|r| t.add(r));
    let bytes: u64 = traffic.iter().map(|s| s.bytes).sum();
    SingleMetrics {
        elt: t.elt(mode),
        nu: bytes as f64 / (duration * node_count as f64),
    }
}

/// Managed over unmanaged; missing when the baseline is zero or absent.
pub fn normalize(managed: f64, unmanaged: f64) -> Option<f64> {
    (unmanaged > 0.0 && unmanaged.is_finite() && managed.is_finite()).then(|| managed / unmanaged)
}

/// Mean of per-window ratios over windows where both sides are defined.
pub fn normalize_windows(managed: &[Option<f64>], unmanaged: &[Option<f64>]) -> Option<f64> {
    let ratios: Vec<f64> = managed
        .iter()
        .zip(unmanaged)
        .filter_map(|(m, u)| normalize((*m)?, (*u)?))
        .collect();
    mean(&ratios)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { (v[mid - 1] + v[mid]) / 2.0 })
}

/// Normalized standard deviation: population standard deviation over mean.
pub fn nsd(values: &[f64]) -> Result<f64> {
    let m = mean(values).ok_or_else(|| Error::InvalidArgument("nsd of no values".into()))?;
    if m == 0.0 || !m.is_finite() {
        return Err(Error::InvalidArgument(format!("nsd undefined for mean {m}")));
    }
    let var = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / values.len() as f64;
    Ok(var.sqrt() / m.abs())
}
