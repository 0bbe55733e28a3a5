use std::collections::BTreeMap;
use std::path::Path;

use autochord::matrix::run_matrix;
use autochord::metrics::{window_metrics, WINDOW};
use autochord::simnet::generate_lifecycle;
use autochord::{run_experiment, ChurnKind, ExperimentConfig, MatrixConfig, PolicyConfig, WorkloadKind};

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn small() -> MatrixConfig {
    MatrixConfig::parse(
        "[matrix]\nworkloads = heavy, variable\nchurns = high, temporal\npolicies = policy0, policy1\nrepeats = 2\nhorizon = 1200\n",
        Path::new("small.conf"),
    )
    .unwrap()
}

#[test]
fn matrix_artifacts_are_reproducible_and_independent_of_jobs() {
    let cfg = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_matrix(&cfg, None, 1, a.path()).unwrap();
    run_matrix(&cfg, None, 3, b.path()).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    // 16 runs x 5 files, plus 7 matrix-level files
    assert_eq!(fa.len(), 16 * 5 + 7);
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (k, v) in &fa {
        assert!(v == &fb[k], "{k} differs");
    }
}

#[test]
fn bytes_are_conserved() {
    let cfg = ExperimentConfig::new(WorkloadKind::FileSystem, ChurnKind::Local, PolicyConfig::policy2(), 3);
    let out = run_experiment(&cfg).unwrap();
    let sampled: u64 = out.traffic.iter().map(|s| s.bytes).sum();
    assert_eq!(sampled, out.stats.bytes_sent);
    assert_eq!(out.window_bytes.iter().sum::<u64>(), sampled);
    assert_eq!(out.traffic.len() as u64, out.stats.messages_sent);
    let ws = window_metrics(&out.lookups, &out.traffic, WINDOW, cfg.node_count, out.duration);
    let rebuilt: f64 = ws.iter().map(|w| w.nu * WINDOW * cfg.node_count as f64).sum();
    assert!((rebuilt - sampled as f64).abs() < 1e-6 * sampled as f64);
    for (w, b) in ws.iter().zip(&out.window_bytes) {
        assert_eq!(w.bytes, *b);
    }
}

#[test]
fn offline_hosts_are_silent() {
    let cfg = ExperimentConfig::new(WorkloadKind::Heavy, ChurnKind::High, PolicyConfig::policy1(), 8);
    let out = run_experiment(&cfg).unwrap();
    let n = cfg.node_count;
    for h in &out.hosts {
        let phases = generate_lifecycle(&cfg.churn, h.index, n, cfg.seed, cfg.horizon);
        // The clock keeps nanoseconds; phase bounds are exact reals.
        let online = |t: f64| phases.iter().any(|p| p.online && p.start - 1e-9 <= t && t <= p.end() + 1e-9);
        for s in out.traffic.iter().filter(|s| s.node == h.id.0) {
            assert!(online(s.time), "host {} sent at {} while off-line", h.index, s.time);
        }
        for r in out.manager.iter().filter(|r| r.node == h.id.0) {
            assert!(online(r.time), "host {} cycled at {} while off-line", h.index, r.time);
        }
    }
}

#[test]
fn null_policy_never_moves_the_interval() {
    let cfg = ExperimentConfig::new(WorkloadKind::Light, ChurnKind::Low, PolicyConfig::policy0(), 1);
    let out = run_experiment(&cfg).unwrap();
    assert!(!out.manager.is_empty());
    assert!(out.manager.iter().all(|r| r.interval_before == 2.0 && r.interval_after == 2.0 && !r.immediate));
}

#[test]
fn restarted_managers_start_from_the_default() {
    let cfg = ExperimentConfig::new(WorkloadKind::Heavy, ChurnKind::High, PolicyConfig::policy2(), 2);
    let out = run_experiment(&cfg).unwrap();
    assert!(out.stats.restarts > 0);
    // The first cycle of every incarnation starts at the default interval.
    let mut last: BTreeMap<u64, f64> = BTreeMap::new();
    let mut firsts = 0;
    for r in &out.manager {
        let fresh = last.get(&r.node).is_none_or(|t| r.time - t > cfg.policy.cycle_duration + 1e-9);
        if fresh {
            assert_eq!(r.interval_before, cfg.policy.initial_interval, "node {} at {}", r.node, r.time);
            firsts += 1;
        }
        last.insert(r.node, r.time);
    }
    assert!(firsts as u64 > out.stats.restarts / 2);
}

#[test]
fn managed_low_churn_relaxes_maintenance() {
    let cfg = ExperimentConfig::new(WorkloadKind::Heavy, ChurnKind::Low, PolicyConfig::policy2(), 4);
    let out = run_experiment(&cfg).unwrap();
    let from = out.duration - cfg.window;
    let last: Vec<f64> = out.manager.iter().filter(|r| r.time >= from).map(|r| r.interval_after).collect();
    let mean = last.iter().sum::<f64>() / last.len() as f64;
    assert!(mean >= 20.0, "{mean}");
}

#[test]
fn retry_mode_completes_every_lookup() {
    let mut cfg = ExperimentConfig::new(WorkloadKind::Variable, ChurnKind::High, PolicyConfig::policy1(), 6);
    cfg.retry_on_error = true;
    let out = run_experiment(&cfg).unwrap();
    let ok = out.lookups.iter().filter(|r| r.success).count();
    assert_eq!(ok, 1000);
}
