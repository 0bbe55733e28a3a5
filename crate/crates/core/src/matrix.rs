//! Running an experiment matrix and summarising it.
//!
//! Layout of an output directory:
//!
//! ```text
//! runs/<workload>/<churn>/<policy>/r<repeat>/   lookups.csv traffic.csv manager.csv
//!                                               windows.csv intervals.csv
//! runs.csv      one row per run
//! windows.csv   one row per run and window
//! summary.csv   one row per cell, averaged over repeats, normalized to policy0
//! winners.csv   cells won per policy on ELT, NU and both
//! nsd.csv       per (cell, window, metric) repeatability
//! nsd_cdf.csv   cumulative distribution of the NSD values
//! ```
//!
//! Normalization pairs each managed run with the policy0 run of the same
//! repeat; both share churn and keys.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::config::{CellId, MatrixConfig};
use crate::error::{Error, Result};
use crate::metrics::{self, EltMode, WindowMetrics};
use crate::simnet::{logs, run_experiment, ChurnKind, ExperimentConfig, RunOutput, WorkloadKind};

pub const RUNS_CSV: &str = "runs.csv";
pub const WINDOWS_CSV: &str = "windows.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const WINNERS_CSV: &str = "winners.csv";
pub const NSD_CSV: &str = "nsd.csv";
pub const NSD_CDF_CSV: &str = "nsd_cdf.csv";
pub const INTERVALS_CSV: &str = "intervals.csv";
pub const NORMALIZED_CSV: &str = "normalized.csv";

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "AUTOCHORD_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "autochord-out";

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR), PathBuf::from)
}

fn elt_mode(cfg: &ExperimentConfig) -> EltMode {
    if cfg.retry_on_error {
        EltMode::Direct
    } else {
        EltMode::Expected
    }
}

/// Per-window metrics of a finished run. Bytes come from the simulator's
/// window totals, so this works with or without traffic samples.
pub fn run_windows(cfg: &ExperimentConfig, out: &RunOutput) -> Vec<WindowMetrics> {
    let mut ws =
        metrics::window_metrics_with(&out.lookups, &[], cfg.window, cfg.node_count, out.duration, elt_mode(cfg));
    for w in &mut ws {
        w.bytes = out.window_bytes.get(w.window_index).copied().unwrap_or(0);
        w.nu = w.bytes as f64 / (cfg.window * cfg.node_count as f64);
    }
    ws
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub workload: String,
    pub churn: String,
    pub policy: String,
    pub repeat: usize,
    pub seed: u64,
    pub duration: f64,
    pub lookups_ok: u64,
    pub lookups_failed: u64,
    pub elt_window_mean: Option<f64>,
    pub elt_single: Option<f64>,
    pub nu_window_mean: f64,
    pub nu_single: f64,
    pub manager_cycles: u64,
    pub immediate_triggers: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub workload: String,
    pub churn: String,
    pub policy: String,
    pub repeat: usize,
    pub window: usize,
    pub elt: Option<f64>,
    pub nu: f64,
    pub successes: usize,
    pub failures: usize,
    pub bytes: u64,
    /// Network mean of the applied maintenance interval.
    pub mean_interval: Option<f64>,
}

/// Everything kept from one run once its raw logs are on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub row: RunRow,
    pub windows: Vec<WindowRow>,
}

impl RunResult {
    pub fn cell(&self) -> CellId {
        cell_of(&self.row.workload, &self.row.churn, &self.row.policy)
    }
}

fn cell_of(workload: &str, churn: &str, policy: &str) -> CellId {
    CellId {
        workload: workload.parse().expect("workload written by us"),
        churn: churn.parse().expect("churn written by us"),
        policy: policy.to_string(),
    }
}

pub fn summarize_run(cell: &CellId, repeat: usize, cfg: &ExperimentConfig, out: &RunOutput) -> RunResult {
    let windows = run_windows(cfg, out);
    let single = metrics::single_value_metrics_with(&out.lookups, &[], cfg.node_count, out.duration, elt_mode(cfg));
    let total_bytes: u64 = out.window_bytes.iter().sum();
    let elts: Vec<f64> = windows.iter().filter_map(|w| w.elt).collect();
    let nus: Vec<f64> = windows.iter().map(|w| w.nu).collect();
    let n = windows.len();
    let mut interval_sums = vec![(0.0, 0usize); n];
    for r in &out.manager {
        let i = ((r.time / cfg.window) as usize).min(n - 1);
        interval_sums[i].0 += r.interval_after;
        interval_sums[i].1 += 1;
    }
    let (w, c, p) = (cell.workload.name().to_string(), cell.churn.name().to_string(), cell.policy.clone());
    let window_rows = windows
        .iter()
        .zip(&interval_sums)
        .map(|(m, (sum, k))| WindowRow {
            workload: w.clone(),
            churn: c.clone(),
            policy: p.clone(),
            repeat,
            window: m.window_index,
            elt: m.elt,
            nu: m.nu,
            successes: m.successes,
            failures: m.failures,
            bytes: m.bytes,
            mean_interval: (*k > 0).then(|| sum / *k as f64),
        })
        .collect();
    RunResult {
        row: RunRow {
            workload: w,
            churn: c,
            policy: p,
            repeat,
            seed: cfg.seed,
            duration: out.duration,
            lookups_ok: out.stats.lookups_ok,
            lookups_failed: out.stats.lookups_failed,
            elt_window_mean: metrics::mean(&elts),
            elt_single: single.elt,
            nu_window_mean: metrics::mean(&nus).unwrap_or(0.0),
            nu_single: total_bytes as f64 / (out.duration * cfg.node_count as f64),
            manager_cycles: out.manager.len() as u64,
            immediate_triggers: out.manager.iter().filter(|r| r.immediate).count() as u64,
        },
        windows: window_rows,
    }
}

pub fn run_dir(root: &Path, cell: &CellId, repeat: usize) -> PathBuf {
    root.join("runs")
        .join(cell.workload.name())
        .join(cell.churn.name())
        .join(&cell.policy)
        .join(format!("r{repeat}"))
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Per-node, per-window mean interval and immediate-trigger count.
fn write_intervals(path: &Path, cfg: &ExperimentConfig, out: &RunOutput) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        window: usize,
        node: u64,
        class: &'static str,
        mean_interval: f64,
        immediate: u32,
    }
    let class: BTreeMap<u64, &'static str> = out.hosts.iter().map(|h| (h.id.0, h.class.name())).collect();
    let mut acc: BTreeMap<(usize, u64), (f64, u32, u32)> = BTreeMap::new();
    for r in &out.manager {
        let e = acc.entry(((r.time / cfg.window) as usize, r.node)).or_default();
        e.0 += r.interval_after;
        e.1 += 1;
        e.2 += u32::from(r.immediate);
    }
    write_rows(
        path,
        acc.into_iter().map(|((window, node), (sum, k, imm))| Row {
            window,
            node,
            class: class.get(&node).copied().unwrap_or(""),
            mean_interval: sum / k as f64,
            immediate: imm,
        }),
    )
}

/// Runs one repeat of one cell, writing its directory if `root` is given.
pub fn run_one(cfg: &MatrixConfig, cell: &CellId, repeat: usize, root: Option<&Path>) -> Result<RunResult> {
    let exp = cfg.experiment(cell, repeat)?;
    let out = run_experiment(&exp)?;
    let result = summarize_run(cell, repeat, &exp, &out);
    if let Some(root) = root {
        let dir = run_dir(root, cell, repeat);
        mkdir(&dir)?;
        if cfg.raw_logs {
            logs::write_run(&dir, &out)?;
        }
        write_rows(&dir.join(WINDOWS_CSV), result.windows.iter())?;
        write_intervals(&dir.join(INTERVALS_CSV), &exp, &out)?;
    }
    Ok(result)
}

/// Runs every selected cell × repeat on `jobs` workers. Results come back in
/// matrix order regardless of scheduling.
pub fn run_cells(cfg: &MatrixConfig, cells: &[CellId], jobs: usize, root: Option<&Path>) -> Result<Vec<RunResult>> {
    let tasks: Vec<(&CellId, usize)> = cells.iter().flat_map(|c| (0..cfg.repeats).map(move |r| (c, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| tasks.par_iter().map(|(c, r)| run_one(cfg, c, *r, root)).collect())
}

/// Runs the matrix (or the `only` cell) and writes every artifact under `root`.
pub fn run_matrix(cfg: &MatrixConfig, only: Option<&CellId>, jobs: usize, root: &Path) -> Result<Report> {
    cfg.validate()?;
    let cells = match only {
        Some(c) => {
            if !cfg.cells().contains(c) {
                return Err(Error::InvalidArgument(format!("cell {c} is not part of the matrix")));
            }
            vec![c.clone()]
        }
        None => cfg.cells(),
    };
    mkdir(root)?;
    let results = run_cells(cfg, &cells, jobs, Some(root))?;
    write_rows(&root.join(RUNS_CSV), results.iter().map(|r| &r.row))?;
    write_rows(&root.join(WINDOWS_CSV), results.iter().flat_map(|r| &r.windows))?;
    let report = Report::build(&results);
    report.write(root)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub workload: String,
    pub churn: String,
    pub policy: String,
    pub repeats: usize,
    pub elt_window_mean: Option<f64>,
    pub elt_single: Option<f64>,
    pub nu_window_mean: f64,
    pub nu_single: f64,
    pub elt_window_norm: Option<f64>,
    pub elt_single_norm: Option<f64>,
    pub nu_window_norm: Option<f64>,
    pub nu_single_norm: Option<f64>,
}

impl SummaryRow {
    pub fn cell(&self) -> CellId {
        cell_of(&self.workload, &self.churn, &self.policy)
    }
}

/// One line of the normalized table. Summary lines use `workload =
/// "summary"` and `churn` = "mean" or "median".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedRow {
    pub workload: String,
    pub churn: String,
    pub policy: String,
    pub elt_window: Option<f64>,
    pub elt_single: Option<f64>,
    pub nu_window: Option<f64>,
    pub nu_single: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinnerRow {
    pub policy: String,
    pub elt_window: usize,
    pub nu_window: usize,
    pub both_window: usize,
    pub elt_single: usize,
    pub nu_single: usize,
    pub both_single: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsdRow {
    pub workload: String,
    pub churn: String,
    pub policy: String,
    pub window: usize,
    pub metric: String,
    pub nsd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub nsd: f64,
    pub cumulative: f64,
}

/// Table-style results derived from run and window rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub summary: Vec<SummaryRow>,
    pub winners: Vec<WinnerRow>,
    pub nsd: Vec<NsdRow>,
    pub cdf: Vec<CdfRow>,
}

fn mean_opt(xs: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.into_iter().flatten().collect();
    metrics::mean(&v)
}

impl Report {
    pub fn build(results: &[RunResult]) -> Report {
        // cell -> repeat -> run
        let mut by_cell: BTreeMap<CellId, BTreeMap<usize, &RunResult>> = BTreeMap::new();
        for r in results {
            by_cell.entry(r.cell()).or_default().insert(r.row.repeat, r);
        }
        let order: Vec<CellId> = {
            let mut seen = Vec::new();
            for r in results {
                let c = r.cell();
                if !seen.contains(&c) {
                    seen.push(c);
                }
            }
            seen
        };
        let mut summary = Vec::new();
        for cell in &order {
            let runs = &by_cell[cell];
            let base = by_cell.get(&CellId {
                policy: crate::config::BASELINE_POLICY.to_string(),
                ..cell.clone()
            });
            let norm = |f: &dyn Fn(&RunResult, &RunResult) -> Option<f64>| -> Option<f64> {
                let base = base?;
                let v: Option<Vec<f64>> = runs.iter().map(|(rep, r)| f(r, base.get(rep)?)).collect();
                metrics::mean(&v?)
            };
            let window_norm = |pick: fn(&WindowRow) -> Option<f64>| {
                norm(&|m: &RunResult, u: &RunResult| {
                    let a: Vec<Option<f64>> = m.windows.iter().map(pick).collect();
                    let b: Vec<Option<f64>> = u.windows.iter().map(pick).collect();
                    metrics::normalize_windows(&a, &b)
                })
            };
            let first = runs.values().next().expect("non-empty cell");
            summary.push(SummaryRow {
                workload: first.row.workload.clone(),
                churn: first.row.churn.clone(),
                policy: first.row.policy.clone(),
                repeats: runs.len(),
                elt_window_mean: mean_opt(runs.values().map(|r| r.row.elt_window_mean)),
                elt_single: mean_opt(runs.values().map(|r| r.row.elt_single)),
                nu_window_mean: metrics::mean(&runs.values().map(|r| r.row.nu_window_mean).collect::<Vec<_>>())
                    .unwrap_or(0.0),
                nu_single: metrics::mean(&runs.values().map(|r| r.row.nu_single).collect::<Vec<_>>()).unwrap_or(0.0),
                elt_window_norm: window_norm(|w| w.elt),
                elt_single_norm: norm(&|m, u| metrics::normalize(m.row.elt_single?, u.row.elt_single?)),
                nu_window_norm: window_norm(|w| Some(w.nu)),
                nu_single_norm: norm(&|m, u| metrics::normalize(m.row.nu_single, u.row.nu_single)),
            });
        }
        let winners = winners(&summary);
        let nsd = nsd_rows(&order, &by_cell);
        let cdf = cdf(&nsd);
        Report { summary, winners, nsd, cdf }
    }

    /// Summary rows lacking a policy0 partner, named by the missing cell.
    pub fn require_baselines(&self) -> Result<()> {
        for row in &self.summary {
            let base = CellId {
                policy: crate::config::BASELINE_POLICY.to_string(),
                ..row.cell()
            };
            if !self.summary.iter().any(|r| r.cell() == base) {
                return Err(Error::MissingBaseline(base.to_string()));
            }
        }
        Ok(())
    }

    /// Managed cells normalized to policy0, followed by per-policy mean and
    /// median lines.
    pub fn normalized(&self) -> Vec<NormalizedRow> {
        let managed: Vec<&SummaryRow> = self
            .summary
            .iter()
            .filter(|r| r.policy != crate::config::BASELINE_POLICY)
            .collect();
        let mut out: Vec<NormalizedRow> = managed
            .iter()
            .map(|r| NormalizedRow {
                workload: r.workload.clone(),
                churn: r.churn.clone(),
                policy: r.policy.clone(),
                elt_window: r.elt_window_norm,
                elt_single: r.elt_single_norm,
                nu_window: r.nu_window_norm,
                nu_single: r.nu_single_norm,
            })
            .collect();
        let mut policies: Vec<&str> = Vec::new();
        for r in &managed {
            if !policies.contains(&r.policy.as_str()) {
                policies.push(&r.policy);
            }
        }
        for (label, agg) in [("mean", metrics::mean as fn(&[f64]) -> Option<f64>), ("median", metrics::median)] {
            for p in &policies {
                let rows: Vec<&&SummaryRow> = managed.iter().filter(|r| r.policy == *p).collect();
                let col = |f: fn(&SummaryRow) -> Option<f64>| agg(&rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
                out.push(NormalizedRow {
                    workload: "summary".into(),
                    churn: label.into(),
                    policy: p.to_string(),
                    elt_window: col(|r| r.elt_window_norm),
                    elt_single: col(|r| r.elt_single_norm),
                    nu_window: col(|r| r.nu_window_norm),
                    nu_single: col(|r| r.nu_single_norm),
                });
            }
        }
        out
    }

    pub fn median_nsd(&self) -> Option<f64> {
        metrics::median(&self.nsd.iter().map(|r| r.nsd).collect::<Vec<_>>())
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        write_rows(&root.join(SUMMARY_CSV), &self.summary)?;
        write_rows(&root.join(WINNERS_CSV), &self.winners)?;
        write_rows(&root.join(NORMALIZED_CSV), self.normalized())?;
        write_rows(&root.join(NSD_CSV), &self.nsd)?;
        write_rows(&root.join(NSD_CDF_CSV), &self.cdf)
    }

    /// Rebuilds the report from the `runs.csv` and `windows.csv` of a
    /// finished matrix.
    pub fn load(root: &Path) -> Result<Report> {
        let rows: Vec<RunRow> = read_rows(&root.join(RUNS_CSV))?;
        let windows: Vec<WindowRow> = read_rows(&root.join(WINDOWS_CSV))?;
        let mut grouped: BTreeMap<(String, String, String, usize), Vec<WindowRow>> = BTreeMap::new();
        for w in windows {
            grouped
                .entry((w.workload.clone(), w.churn.clone(), w.policy.clone(), w.repeat))
                .or_default()
                .push(w);
        }
        let mut results = Vec::with_capacity(rows.len());
        for row in rows {
            let key = (row.workload.clone(), row.churn.clone(), row.policy.clone(), row.repeat);
            row.workload.parse::<WorkloadKind>()?;
            row.churn.parse::<ChurnKind>()?;
            let windows = grouped.remove(&key).unwrap_or_default();
            results.push(RunResult { row, windows });
        }
        Ok(Report::build(&results))
    }
}

/// A policy wins a (workload, churn) pair on a metric when it has the lowest
/// value; ties go to the policy listed first. Missing ELT loses.
fn winners(summary: &[SummaryRow]) -> Vec<WinnerRow> {
    let mut policies: Vec<String> = Vec::new();
    for r in summary {
        if !policies.contains(&r.policy) {
            policies.push(r.policy.clone());
        }
    }
    let mut table: Vec<WinnerRow> = policies
        .iter()
        .map(|p| WinnerRow {
            policy: p.clone(),
            elt_window: 0,
            nu_window: 0,
            both_window: 0,
            elt_single: 0,
            nu_single: 0,
            both_single: 0,
        })
        .collect();
    let mut pairs: Vec<(&str, &str)> = Vec::new();
    for r in summary {
        if !pairs.contains(&(r.workload.as_str(), r.churn.as_str())) {
            pairs.push((&r.workload, &r.churn));
        }
    }
    let best = |rows: &[&SummaryRow], f: &dyn Fn(&SummaryRow) -> Option<f64>| -> Option<usize> {
        let mut out: Option<(usize, f64)> = None;
        for (i, r) in rows.iter().enumerate() {
            if let Some(v) = f(r) {
                if out.is_none_or(|(_, b)| v < b) {
                    out = Some((i, v));
                }
            }
        }
        out.map(|(i, _)| i)
    };
    for (w, c) in pairs {
        let rows: Vec<&SummaryRow> = summary.iter().filter(|r| r.workload == w && r.churn == c).collect();
        let idx = |i: usize| policies.iter().position(|p| *p == rows[i].policy).expect("listed");
        let ew = best(&rows, &|r| r.elt_window_mean);
        let nw = best(&rows, &|r| Some(r.nu_window_mean));
        let es = best(&rows, &|r| r.elt_single);
        let ns = best(&rows, &|r| Some(r.nu_single));
        if let Some(i) = ew {
            table[idx(i)].elt_window += 1;
        }
        if let Some(i) = nw {
            table[idx(i)].nu_window += 1;
        }
        if let (Some(a), Some(b)) = (ew, nw) {
            if a == b {
                table[idx(a)].both_window += 1;
            }
        }
        if let Some(i) = es {
            table[idx(i)].elt_single += 1;
        }
        if let Some(i) = ns {
            table[idx(i)].nu_single += 1;
        }
        if let (Some(a), Some(b)) = (es, ns) {
            if a == b {
                table[idx(a)].both_single += 1;
            }
        }
    }
    table
}

/// NSD of each metric in each window across the repeats of a cell. Windows
/// missing from any repeat, or with an undefined value, are skipped.
fn nsd_rows(order: &[CellId], by_cell: &BTreeMap<CellId, BTreeMap<usize, &RunResult>>) -> Vec<NsdRow> {
    let mut out = Vec::new();
    for cell in order {
        let runs: Vec<&RunResult> = by_cell[cell].values().copied().collect();
        if runs.len() < 2 {
            continue;
        }
        let n = runs.iter().map(|r| r.windows.len()).min().unwrap_or(0);
        for i in 0..n {
            let metrics_of: [(&str, fn(&WindowRow) -> Option<f64>); 2] = [("elt", |w| w.elt), ("nu", |w| Some(w.nu))];
            for (name, pick) in metrics_of {
                let vals: Option<Vec<f64>> = runs.iter().map(|r| pick(&r.windows[i])).collect();
                if let Some(v) = vals.and_then(|v| metrics::nsd(&v).ok()) {
                    out.push(NsdRow {
                        workload: cell.workload.name().into(),
                        churn: cell.churn.name().into(),
                        policy: cell.policy.clone(),
                        window: i,
                        metric: name.into(),
                        nsd: v,
                    });
                }
            }
        }
    }
    out
}

fn cdf(rows: &[NsdRow]) -> Vec<CdfRow> {
    let mut v: Vec<f64> = rows.iter().map(|r| r.nsd).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| CdfRow {
            nsd: x,
            cumulative: (i + 1) as f64 / n,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CSV helpers
// ---------------------------------------------------------------------------

pub fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut any = false;
    for r in rows {
        w.serialize(r)?;
        any = true;
    }
    if !any {
        // csv only writes headers alongside the first record.
        drop(w);
        std::fs::write(path, "").map_err(|e| Error::io(path, e))?;
        return Ok(());
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
