//! Python bindings: the manager's policy arithmetic, the evaluation metrics,
//! a synchronous overlay for scripting, and the experiment runner.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use autochord::autonomic::{self, CycleMetrics};
use autochord::chord::{EventContext, EventKind, LocalNet, ManagerEvent};
use autochord::matrix::{self, RunResult};
use autochord::{
    Address, AutonomicManager, CellId, ChordConfig, ChurnKind, Error, ExperimentConfig, IdSpace, MatrixConfig, NodeId,
    PeerRef, PolicyConfig, WorkloadKind,
};

fn err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::Config { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A scheduling policy. Use the `policy0/1/2` constructors or `custom`.
#[pyclass(name = "Policy", frozen, from_py_object)]
#[derive(Clone)]
struct PyPolicy {
    inner: PolicyConfig,
}

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    fn policy0() -> Self {
        PyPolicy { inner: PolicyConfig::policy0() }
    }

    #[staticmethod]
    fn policy1() -> Self {
        PyPolicy { inner: PolicyConfig::policy1() }
    }

    #[staticmethod]
    fn policy2() -> Self {
        PyPolicy { inner: PolicyConfig::policy2() }
    }

    #[staticmethod]
    fn custom(k_wmc: f64, k_ec: f64) -> PyResult<Self> {
        let inner = PolicyConfig::custom(k_wmc, k_ec);
        inner.validate().map_err(err)?;
        Ok(PyPolicy { inner })
    }

    #[staticmethod]
    fn named(name: &str) -> PyResult<Self> {
        match name {
            "policy0" => Ok(Self::policy0()),
            "policy1" => Ok(Self::policy1()),
            "policy2" => Ok(Self::policy2()),
            _ => Err(PyValueError::new_err(format!("unknown policy '{name}'"))),
        }
    }

    #[getter]
    fn k_wmc(&self) -> f64 {
        self.inner.k_wmc
    }

    #[getter]
    fn k_ec(&self) -> f64 {
        self.inner.k_ec
    }

    #[getter]
    fn is_null(&self) -> bool {
        self.inner.mode == autochord::PolicyMode::NullPolicy
    }

    fn __repr__(&self) -> String {
        format!("Policy(k_wmc={}, k_ec={}, null={})", self.inner.k_wmc, self.inner.k_ec, self.is_null())
    }
}

/// Per-node manager; feed it one cycle's counts at a time.
#[pyclass(name = "Manager")]
struct PyManager {
    inner: AutonomicManager,
}

#[pymethods]
impl PyManager {
    #[new]
    fn new(policy: PyPolicy) -> PyResult<Self> {
        Ok(PyManager {
            inner: AutonomicManager::new(policy.inner).map_err(err)?,
        })
    }

    #[getter]
    fn interval(&self) -> f64 {
        self.inner.interval()
    }

    /// Runs one cycle on `wmc` wasted passes and `ec` access errors.
    /// Returns `(new_interval, immediate_maintenance)`.
    fn cycle(&mut self, wmc: u32, ec: u32) -> (f64, bool) {
        let event = |kind| ManagerEvent {
            kind,
            node: NodeId(0),
            time: 0.0,
            context: EventContext::Maintenance,
        };
        let events: Vec<_> = (0..wmc)
            .map(|_| event(EventKind::WastedMaintenance))
            .chain((0..ec).map(|_| event(EventKind::AccessError)))
            .collect();
        let (d, _) = self.inner.cycle(0, 0.0, &events);
        (d.new_interval, d.immediate_maintenance)
    }
}

#[pyfunction]
fn change_proportion(metric: f64, k: f64) -> PyResult<f64> {
    autonomic::change_proportion(metric, k).map_err(err)
}

#[pyfunction]
fn evaluate_cycle(current: f64, wmc: u32, ec: u32, policy: PyPolicy) -> PyResult<(f64, bool)> {
    let d = autonomic::evaluate_cycle(current, CycleMetrics { wmc, ec }, &policy.inner).map_err(err)?;
    Ok((d.new_interval, d.immediate_maintenance))
}

#[pyfunction]
fn expected_lookup_time(t_lookup: f64, t_error: f64, p_error: f64) -> PyResult<f64> {
    autochord::metrics::expected_lookup_time(t_lookup, t_error, p_error).map_err(err)
}

#[pyfunction]
fn nsd(values: Vec<f64>) -> PyResult<f64> {
    autochord::metrics::nsd(&values).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (key, bits = 64))]
fn id_from_key(key: &str, bits: u32) -> PyResult<u64> {
    let space = IdSpace::new(bits).map_err(err)?;
    Ok(space.id_from_key(key.as_bytes()).map_err(err)?.0)
}

/// Zero-latency overlay where every call completes immediately.
#[pyclass(name = "Overlay", unsendable)]
struct PyOverlay {
    net: LocalNet,
    cfg: ChordConfig,
}

impl PyOverlay {
    fn peer(&self, addr: u32) -> PyResult<PeerRef> {
        self.net
            .node(Address(addr))
            .map(|n| n.me())
            .ok_or_else(|| PyValueError::new_err(format!("no node at address {addr}")))
    }
}

#[pymethods]
impl PyOverlay {
    #[new]
    #[pyo3(signature = (bits = 64))]
    fn new(bits: u32) -> PyResult<Self> {
        let cfg = ChordConfig {
            space: IdSpace::new(bits).map_err(err)?,
            ..ChordConfig::default()
        };
        Ok(PyOverlay { net: LocalNet::new(), cfg })
    }

    /// Starts a ring with the node `id` at `addr`.
    fn found(&mut self, id: u64, addr: u32) {
        self.net.add_founder(PeerRef::new(NodeId(id), Address(addr)), self.cfg);
    }

    /// Joins `id` at `addr` through the node at `via`; returns its successor's id.
    fn join(&mut self, id: u64, addr: u32, via: u32) -> PyResult<u64> {
        let bootstrap = self.peer(via)?;
        self.net
            .join(PeerRef::new(NodeId(id), Address(addr)), self.cfg, bootstrap)
            .map(|p| p.id.0)
            .map_err(|e| PyRuntimeError::new_err(format!("join failed: {e:?}")))
    }

    fn set_offline(&mut self, addr: u32) {
        self.net.set_offline(Address(addr));
    }

    /// One maintenance pass; returns `(changed, errors)` or None if offline.
    fn maintain(&mut self, addr: u32) -> Option<(bool, u32)> {
        self.net.maintain(Address(addr)).map(|r| (r.changed, r.errors))
    }

    #[pyo3(signature = (rounds = 1))]
    fn maintain_all(&mut self, rounds: usize) {
        for _ in 0..rounds {
            self.net.maintain_all();
        }
    }

    /// Id of the node believed responsible for `key`.
    fn lookup(&mut self, addr: u32, key: u64) -> PyResult<u64> {
        self.peer(addr)?;
        self.net
            .lookup(Address(addr), NodeId(key))
            .map(|p| p.id.0)
            .map_err(|e| PyRuntimeError::new_err(format!("lookup failed: {e:?}")))
    }

    fn successor(&self, addr: u32) -> PyResult<u64> {
        self.peer(addr)?;
        Ok(self.net.node(Address(addr)).unwrap().peers().successor().id.0)
    }

    fn pending_events(&mut self, addr: u32) -> PyResult<Vec<(String, String)>> {
        self.peer(addr)?;
        let node = self.net.node_mut(Address(addr)).unwrap();
        Ok(node
            .drain_events()
            .iter()
            .map(|e| (format!("{:?}", e.kind), format!("{:?}", e.context)))
            .collect())
    }
}

fn result_dict<'py>(py: Python<'py>, r: &RunResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let row = &r.row;
    d.set_item("workload", &row.workload)?;
    d.set_item("churn", &row.churn)?;
    d.set_item("policy", &row.policy)?;
    d.set_item("repeat", row.repeat)?;
    d.set_item("seed", row.seed)?;
    d.set_item("duration", row.duration)?;
    d.set_item("lookups_ok", row.lookups_ok)?;
    d.set_item("lookups_failed", row.lookups_failed)?;
    d.set_item("elt_single", row.elt_single)?;
    d.set_item("elt_window_mean", row.elt_window_mean)?;
    d.set_item("nu_single", row.nu_single)?;
    d.set_item("nu_window_mean", row.nu_window_mean)?;
    d.set_item("manager_cycles", row.manager_cycles)?;
    d.set_item("immediate_triggers", row.immediate_triggers)?;
    let windows: Vec<(usize, Option<f64>, f64, Option<f64>)> =
        r.windows.iter().map(|w| (w.window, w.elt, w.nu, w.mean_interval)).collect();
    d.set_item("windows", windows)?;
    Ok(d)
}

/// Runs one simulated experiment and returns its metrics as a dict. With
/// `log_dir` the raw CSV logs are written there.
#[pyfunction]
#[pyo3(signature = (workload, churn, policy, seed = 1, node_count = 16, horizon = 7200.0, retry_on_error = false, log_dir = None))]
#[allow(clippy::too_many_arguments)]
fn run_experiment<'py>(
    py: Python<'py>,
    workload: &str,
    churn: &str,
    policy: PyPolicy,
    seed: u64,
    node_count: usize,
    horizon: f64,
    retry_on_error: bool,
    log_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let w: WorkloadKind = workload.parse().map_err(err)?;
    let c: ChurnKind = churn.parse().map_err(err)?;
    let mut cfg = ExperimentConfig::new(w, c, policy.inner, seed);
    cfg.node_count = node_count;
    cfg.horizon = horizon;
    cfg.retry_on_error = retry_on_error;
    cfg.record_traffic = log_dir.is_some();
    let out = py.detach(|| autochord::run_experiment(&cfg)).map_err(err)?;
    if let Some(dir) = &log_dir {
        std::fs::create_dir_all(dir).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        autochord::simnet::logs::write_run(dir, &out).map_err(err)?;
    }
    let name = if policy.is_null() { "policy0" } else { "custom" };
    let cell = CellId { workload: w, churn: c, policy: name.into() };
    let summary = matrix::summarize_run(&cell, 0, &cfg, &out);
    let d = result_dict(py, &summary)?;
    d.set_item("failed_calls", out.stats.failed_calls)?;
    d.set_item("access_error_events", out.stats.access_error_events)?;
    d.set_item("wasted_events", out.stats.wasted_events)?;
    d.set_item("zero_mutation_passes", out.stats.zero_mutation_passes)?;
    Ok(d)
}

/// Runs a matrix config file and returns the summary rows. Artifacts go to
/// `out_dir`, the config's output_dir, or the default location.
#[pyfunction]
#[pyo3(signature = (config, out_dir = None, jobs = 1, only = None))]
fn run_matrix<'py>(
    py: Python<'py>,
    config: PathBuf,
    out_dir: Option<PathBuf>,
    jobs: usize,
    only: Option<&str>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = MatrixConfig::load(&config).map_err(err)?;
    let only: Option<CellId> = only.map(str::parse).transpose().map_err(err)?;
    let root = out_dir
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(matrix::default_output_dir);
    let report = py
        .detach(|| matrix::run_matrix(&cfg, only.as_ref(), jobs, &root))
        .map_err(err)?;
    report
        .summary
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("cell", r.cell().to_string())?;
            d.set_item("repeats", r.repeats)?;
            d.set_item("elt_single", r.elt_single)?;
            d.set_item("nu_single", r.nu_single)?;
            d.set_item("elt_window_norm", r.elt_window_norm)?;
            d.set_item("elt_single_norm", r.elt_single_norm)?;
            d.set_item("nu_window_norm", r.nu_window_norm)?;
            d.set_item("nu_single_norm", r.nu_single_norm)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn autochord_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyManager>()?;
    m.add_class::<PyOverlay>()?;
    m.add_function(wrap_pyfunction!(change_proportion, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_cycle, m)?)?;
    m.add_function(wrap_pyfunction!(expected_lookup_time, m)?)?;
    m.add_function(wrap_pyfunction!(nsd, m)?)?;
    m.add_function(wrap_pyfunction!(id_from_key, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_matrix, m)?)?;
    Ok(())
}
