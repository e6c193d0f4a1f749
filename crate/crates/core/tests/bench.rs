use std::sync::{Arc, Mutex};

use eagerfs::bench::{populate, run_scenario, run_scenario_with, BenchConfig, BenchError, Mode, Scenario, Workload};
use eagerfs::path::NormPath;
use eagerfs::store::{BackingStore, FileKind, InjectedStore, LatencyProfile, MemTree, StoreRequest, TreeDigest};

fn populated(workload: &Workload) -> MemTree {
    let tree = MemTree::new();
    let dest = NormPath::new("/tree").unwrap();
    tree.apply(&StoreRequest::Mkdir { path: dest.clone(), mode: 0o755 }).unwrap();
    populate(&tree, &workload.plan(&dest)).unwrap();
    tree
}

fn count(digest: &TreeDigest, kind: FileKind) -> usize {
    digest.entries().iter().filter(|e| e.path.starts_with("/tree/") && e.file_kind() == kind).count()
}

fn expected_dirs(files: usize, fanout: usize) -> usize {
    let mut dirs = 0;
    while dirs * fanout < files {
        dirs += 1;
    }
    dirs.saturating_sub(1)
}

#[test]
fn generated_tree_has_requested_shape() {
    for (files, fanout) in [(1000, 16), (1, 16), (16, 16), (17, 16), (250, 4)] {
        let w = Workload { files, fanout, ..Workload::default() };
        let digest = populated(&w).snapshot_tree();
        assert_eq!(count(&digest, FileKind::File), files, "{files}/{fanout}");
        assert_eq!(count(&digest, FileKind::Dir), expected_dirs(files, fanout), "{files}/{fanout}");
    }
}

#[test]
fn generated_tree_is_deterministic() {
    let w = Workload { files: 200, symlink_fraction: 0.2, ..Workload::default() };
    assert_eq!(populated(&w).snapshot_tree(), populated(&w).snapshot_tree());
    let other = Workload { seed: 2, ..w.clone() };
    assert_ne!(populated(&w).snapshot_tree(), populated(&other).snapshot_tree());
    let empty = populated(&Workload::with_files(0)).snapshot_tree();
    assert!(empty.entries().iter().all(|e| !e.path.starts_with("/tree/")));
}

#[test]
fn every_mode_extracts_the_same_tree() {
    let w = Workload { files: 120, symlink_fraction: 0.1, ..Workload::default() };
    let cfg = BenchConfig::new(Scenario::Extract, w.clone(), LatencyProfile::metadata_ms(0.1), 2);
    let stores: Arc<Mutex<Vec<Arc<MemTree>>>> = Arc::default();
    let kept = stores.clone();
    let report = run_scenario_with(&cfg, move || {
        let tree = Arc::new(MemTree::new());
        kept.lock().unwrap().push(tree.clone());
        Ok(InjectedStore::new(tree))
    })
    .unwrap();
    assert!(report.failures() == 0);
    let reference = populated(&w).snapshot_tree();
    let stores = stores.lock().unwrap();
    assert_eq!(stores.len(), 6);
    for s in stores.iter() {
        let d = s.snapshot_tree();
        assert_eq!(d, reference, "{:?}", d.diff(&reference));
    }
}

#[test]
fn modes_are_interleaved() {
    let cfg = BenchConfig::new(Scenario::Extract, Workload::with_files(5), LatencyProfile::zero(), 3);
    let report = run_scenario(&cfg).unwrap();
    let order: Vec<(usize, Mode)> = report.rows().iter().map(|r| (r.replicate, r.mode)).collect();
    let expected: Vec<(usize, Mode)> =
        (0..3).flat_map(|r| [Mode::Eager, Mode::Direct, Mode::Staged].map(|m| (r, m))).collect();
    assert_eq!(order, expected);
}

#[test]
fn staged_mode_only_applies_to_extract() {
    for scenario in [Scenario::Remove, Scenario::Traverse] {
        let cfg = BenchConfig::new(scenario, Workload::with_files(5), LatencyProfile::zero(), 1)
            .with_modes(&[Mode::Staged]);
        assert!(matches!(run_scenario(&cfg), Err(BenchError::Unsupported { .. })));
    }
}

fn median(cfg: &BenchConfig, mode: Mode) -> f64 {
    run_scenario(cfg).unwrap().summary(cfg.scenario, mode).unwrap().median
}

/// Backend metadata calls issued by a direct-mode extract of `w`.
fn metadata_calls(w: &Workload) -> usize {
    let cfg = BenchConfig::new(Scenario::Extract, w.clone(), LatencyProfile::zero(), 1).with_modes(&[Mode::Direct]);
    let stores: Arc<Mutex<Vec<Arc<InjectedStore<MemTree>>>>> = Arc::default();
    let kept = stores.clone();
    run_scenario_with(&cfg, move || {
        let s = Arc::new(InjectedStore::fake());
        kept.lock().unwrap().push(s.clone());
        Ok(InjectedStore::new(s))
    })
    .unwrap();
    let stores = stores.lock().unwrap();
    let log = stores[0].log();
    log.entries().iter().filter(|e| e.request.kind().is_metadata()).count()
}

#[test]
fn latency_sensitivity() {
    let w = Workload::with_files(100);
    let at = |ms: f64| {
        let cfg = BenchConfig::new(Scenario::Extract, w.clone(), LatencyProfile::metadata_ms(ms), 3)
            .with_modes(&[Mode::Eager, Mode::Direct]);
        (median(&cfg, Mode::Eager), median(&cfg, Mode::Direct))
    };
    let (e1, d1) = at(1.0);
    let (e4, d4) = at(4.0);
    let calls = metadata_calls(&w);
    let direct_slope = (d4 - d1) / 3e-3;
    let eager_slope = (e4 - e1) / 3e-3;
    eprintln!("calls={calls} eager {e1:.4}->{e4:.4} direct {d1:.4}->{d4:.4}");
    assert!(d4 > d1 && e4 >= e1 * 0.5);
    assert!(direct_slope >= 0.9 * calls as f64, "direct slope {direct_slope} vs {calls} calls");
    assert!(eager_slope < 0.25 * direct_slope, "eager slope {eager_slope} vs direct {direct_slope}");
}
